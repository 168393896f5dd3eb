#include <cmath>
#include <memory>
#include <random>

#include "cortexflow/parallel.hpp"
#include "cortexflow/quadrature.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cortexflow;

namespace {

std::shared_ptr<BackgroundGrid> make_grid(double r0, double r1, double z0,
                                          double z1, int nr, int nz) {
  return std::make_shared<BackgroundGrid>(r0, r1, z0, z1, nr, nz);
}

}  // namespace

TEST_CASE("bulk rule: uncut cell returns the tensor Gauss rule") {
  auto grid = make_grid(0, 1, 0, 1, 2, 2);
  auto phi = LevelSetField::interpolate(grid, [](Point) { return -5.0; });
  const CutQuadrature rule = bulk_cut_rule(phi, 0, 4);
  CHECK(rule.points.size() == 9);  // 3x3 for order 4
  CHECK(rule.weight_sum() == doctest::Approx(0.25).epsilon(1e-14));
  for (const auto& p : rule.points) CHECK(p.w > 0.0);
}

TEST_CASE("bulk rule: half cell from an axis-aligned plane") {
  auto grid = make_grid(0, 1, 0, 1, 1, 1);
  auto phi = LevelSetField::interpolate(grid, [](Point x) { return x.r - 0.5; });
  const CutQuadrature rule = bulk_cut_rule(phi, 0, 5);
  CHECK(rule.weight_sum() == doctest::Approx(0.5).epsilon(1e-14));
  for (const auto& p : rule.points) {
    CHECK(p.w > 0.0);
    CHECK(phi.eval(p.x) < kGeomEps);
  }
}

TEST_CASE("bulk rule: circular cut matches the quadtree oracle to 1e-8") {
  auto grid = make_grid(0, 1, 0, 1, 1, 1);
  auto phi = LevelSetField::interpolate(
      grid, [](Point x) { return x.norm() - 0.75; });
  const CutQuadrature rule = bulk_cut_rule(phi, 0, 5);
  const double reference = oracle::negative_area(phi, 0);
  CHECK(std::abs(rule.weight_sum() - reference) < 1e-8);
}

TEST_CASE("bulk rule: partition over a full grid matches the oracle") {
  auto grid = make_grid(0, 1.2, -1.2, 1.2, 12, 24);
  auto phi = LevelSetField::interpolate(
      grid, [](Point x) { return (x - Point{0.17, 0.05}).norm() - 0.83; });
  const ActiveMesh mesh = classify_cells(phi, 0.0, ClassifyMode::Bulk);
  const MeshQuadrature quad = build_mesh_quadrature(mesh, phi, 5, false);
  double total = 0.0, reference = 0.0;
  for (int k = 0; k < mesh.num_active(); ++k) total += quad.bulk[k].weight_sum();
  for (int c = 0; c < grid->num_cells(); ++c) reference += oracle::negative_area(phi, c);
  CHECK(std::abs(total - reference) < 1e-7);
}

TEST_CASE("bulk rule: exact for monomials on randomized planar cuts") {
  auto grid = make_grid(0.3, 1.3, -0.5, 0.5, 1, 1);
  std::mt19937_64 rng(20240811);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = uni(rng), b = uni(rng);
    if (std::abs(a) + std::abs(b) < 0.3) continue;
    const double c = -(a * 0.8 + b * uni(rng) * 0.4);
    auto phi = LevelSetField::interpolate(
        grid, [=](Point x) { return a * x.r + b * x.z + c; });
    const CutQuadrature rule = bulk_cut_rule(phi, 0, 5);
    for (int p = 0; p <= 5; ++p)
      for (int q = 0; p + q <= 5; ++q) {
        double num = 0.0;
        for (const auto& pt : rule.points)
          num += pt.w * std::pow(pt.x.r, p) * std::pow(pt.x.z, q);
        const double ref = oracle::planar_cut_monomial(*grid, 0, a, b, c, p, q);
        CHECK(num == doctest::Approx(ref).epsilon(1e-11));
      }
  }
}

TEST_CASE("surface rule: straight interface through one cell") {
  auto grid = make_grid(0, 1, 0, 1, 1, 1);
  auto phi = LevelSetField::interpolate(grid, [](Point x) { return x.r - 0.5; });
  const CutQuadrature rule = surface_cut_rule(phi, 0, 5);
  CHECK(rule.weight_sum() == doctest::Approx(1.0).epsilon(1e-13));
  for (const auto& p : rule.points) {
    CHECK(p.normal.r == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(p.normal.z) < 1e-12);
    CHECK(std::abs(p.x.r - 0.5) < 1e-12);
  }
}

TEST_CASE("surface rule: no sign change gives an empty rule") {
  auto grid = make_grid(0, 1, 0, 1, 1, 1);
  auto phi = LevelSetField::interpolate(grid, [](Point x) { return x.r + 0.5; });
  CHECK(surface_cut_rule(phi, 0, 5).empty());
}

TEST_CASE("surface rule: full circle perimeter") {
  // full circle embedded in a plane grid at h = 0.04
  auto grid = make_grid(-1.2, 1.2, -1.2, 1.2, 60, 60);
  auto phi = LevelSetField::interpolate(
      grid, [](Point x) { return x.norm() - 1.0; });
  const ActiveMesh mesh = classify_cells(phi, 0.0, ClassifyMode::Surface);
  const MeshQuadrature quad = build_mesh_quadrature(mesh, phi, 5, false);
  double total = 0.0;
  for (size_t k = 0; k < mesh.cut_cells.size(); ++k) {
    const double cell_len = quad.surface[k].weight_sum();
    const double cell_ref = oracle::interface_length(phi, mesh.cut_cells[k]);
    CHECK(std::abs(cell_len - cell_ref) < 2e-7);
    total += cell_len;
  }
  CHECK(std::abs(total - 2.0 * M_PI) < 1e-5);
  // normals agree with centered finite differences of phi
  for (size_t k = 0; k < mesh.cut_cells.size(); k += 7) {
    for (const auto& p : quad.surface[k].points) {
      const double eps = 1e-6;
      const Vec2 fd{(phi.eval({p.x.r + eps, p.x.z}) - phi.eval({p.x.r - eps, p.x.z})) / (2 * eps),
                    (phi.eval({p.x.r, p.x.z + eps}) - phi.eval({p.x.r, p.x.z - eps})) / (2 * eps)};
      const Vec2 n = fd.normalized();
      CHECK(std::abs(n.r - p.normal.r) < 1e-6);
      CHECK(std::abs(n.z - p.normal.z) < 1e-6);
      CHECK(p.normal.norm() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(std::abs(phi.eval(p.x)) < 1e-10);
    }
  }
}

TEST_CASE("divergence theorem on random cut configurations") {
  auto grid = make_grid(-1.1, 1.1, -1.1, 1.1, 22, 22);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> uni(-0.2, 0.2);
  for (int trial = 0; trial < 3; ++trial) {
    const Point ctr{uni(rng), uni(rng)};
    const double rad = 0.8 + 0.5 * uni(rng);
    auto phi = LevelSetField::interpolate(
        grid, [=](Point x) { return (x - ctr).norm() - rad; });
    const ActiveMesh mesh = classify_cells(phi, 0.0, ClassifyMode::Bulk);
    const MeshQuadrature quad = build_mesh_quadrature(mesh, phi, 7, false);

    // random polynomial vector field and its divergence
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    double cr[6], cz[6];
    for (int i = 0; i < 6; ++i) {
      cr[i] = coef(rng);
      cz[i] = coef(rng);
    }
    auto vr = [&](Point x) {
      return cr[0] + cr[1] * x.r + cr[2] * x.z + cr[3] * x.r * x.r +
             cr[4] * x.r * x.z + cr[5] * x.z * x.z;
    };
    auto vz = [&](Point x) {
      return cz[0] + cz[1] * x.r + cz[2] * x.z + cz[3] * x.r * x.r +
             cz[4] * x.r * x.z + cz[5] * x.z * x.z;
    };
    auto div = [&](Point x) {
      return cr[1] + 2 * cr[3] * x.r + cr[4] * x.z + cz[2] + cz[4] * x.r +
             2 * cz[5] * x.z;
    };

    double vol_int = 0.0;
    for (const auto& rule : quad.bulk)
      for (const auto& p : rule.points) vol_int += p.w * div(p.x);
    double surf_int = 0.0;
    for (const auto& rule : quad.surface)
      for (const auto& p : rule.points)
        surf_int += p.w * (vr(p.x) * p.normal.r + vz(p.x) * p.normal.z);
    // the circle is interior to the box, so the box boundary carries no flux
    CHECK(std::abs(vol_int - surf_int) < 1e-7);
  }
}

TEST_CASE("axisymmetric measures: unit sphere and scaled sphere") {
  auto grid = make_grid(0, 1.2, -1.2, 1.2, 30, 60);
  auto phi = LevelSetField::interpolate(
      grid, [](Point x) { return x.norm() - 1.0; });
  const AxisymMeasures m = axisymmetric_measures(phi);
  CHECK(std::abs(m.volume - 4.0 * M_PI / 3.0) < 2e-3);
  CHECK(std::abs(m.area - 4.0 * M_PI) < 2e-3);

  auto grid2 = make_grid(0, 0.75, -0.75, 0.75, 60, 120);
  auto phi2 = LevelSetField::interpolate(
      grid2, [](Point x) { return x.norm() - 0.46; });
  const AxisymMeasures m2 = axisymmetric_measures(phi2);
  const double vol_ref = 4.0 * M_PI / 3.0 * 0.46 * 0.46 * 0.46;
  CHECK(std::abs(m2.volume - vol_ref) / vol_ref < 1e-3);
}

TEST_CASE("mesh quadrature: parallel build matches serial bitwise") {
  auto grid = make_grid(0, 1.2, -1.2, 1.2, 12, 24);
  auto phi = LevelSetField::interpolate(
      grid, [](Point x) { return x.norm() - 0.9; });
  const ActiveMesh mesh = classify_cells(phi, 0.0, ClassifyMode::Bulk);
  set_num_threads(2);
  const MeshQuadrature a = build_mesh_quadrature(mesh, phi, 5, true);
  set_num_threads(1);
  const MeshQuadrature b = build_mesh_quadrature(mesh, phi, 5, true);
  set_num_threads(0);
  REQUIRE(a.bulk.size() == b.bulk.size());
  for (size_t k = 0; k < a.bulk.size(); ++k) {
    REQUIRE(a.bulk[k].points.size() == b.bulk[k].points.size());
    for (size_t i = 0; i < a.bulk[k].points.size(); ++i) {
      CHECK(a.bulk[k].points[i].w == b.bulk[k].points[i].w);
      CHECK(a.bulk[k].points[i].x.r == b.bulk[k].points[i].x.r);
    }
  }
}
