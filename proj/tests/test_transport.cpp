#include <cmath>
#include <memory>

#include "cortexflow/surface_transport.hpp"
#include "doctest.h"

using namespace cortexflow;

namespace {

struct Fixture {
  std::shared_ptr<BackgroundGrid> grid;
  LevelSetField phi;
  std::shared_ptr<ActiveMesh> mesh;
  MeshQuadrature quad;

  explicit Fixture(int nr)
      : grid(std::make_shared<BackgroundGrid>(0.0, 1.2, -1.2, 1.2, nr, 2 * nr)),
        phi(LevelSetField::interpolate(
            grid, [](Point x) { return x.norm() - 1.0; })) {
    mesh = std::make_shared<ActiveMesh>(
        classify_cells(phi, 1.2 * grid->h(), ClassifyMode::Surface));
    quad = build_mesh_quadrature(*mesh, phi, 5, true);
  }

  TransportProblem problem(double exchange, double dt, bool supg = false) {
    TransportProblem p;
    p.mesh = mesh;
    p.phi = &phi;
    p.quad = &quad;
    p.exchange_rate = exchange;
    p.dt = dt;
    p.gamma = 10.0;
    p.supg = supg;
    return p;
  }
};

const auto kZeroVel = [](Point) { return Vec2{0.0, 0.0}; };
const auto kZeroGrad = [](Point) { return Eigen::Matrix2d::Zero().eval(); };

}  // namespace

TEST_CASE("transport: kinetics equilibrium is a fixed point") {
  Fixture f(15);
  const FEField c = transport_step(f.problem(1.0, 0.1), kZeroVel, kZeroGrad,
                                   [](Point) { return 1.0; });
  for (int d = 0; d < c.coeffs.size(); ++d)
    CHECK(c.coeffs[d] == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("transport: uniform backward-Euler decay hits the closed form") {
  Fixture f(15);
  const FEField c = transport_step(f.problem(1.0, 0.1), kZeroVel, kZeroGrad,
                                   [](Point) { return 2.0; });
  // (2/dt + tau k) / (1/dt + tau k) = 21/11
  for (int d = 0; d < c.coeffs.size(); ++d)
    CHECK(c.coeffs[d] == doctest::Approx(21.0 / 11.0).epsilon(1e-9));
}

TEST_CASE("transport: geometric convergence to the kinetics equilibrium") {
  Fixture f(10);
  const double dt = 0.05, tk = 2.0;
  const double factor = (1.0 / dt) / (1.0 / dt + tk);
  double expected = 3.0;
  FEField c{nullptr, {}};
  std::function<double(Point)> prev = [](Point) { return 3.0; };
  for (int n = 0; n < 4; ++n) {
    c = transport_step(f.problem(tk, dt), kZeroVel, kZeroGrad, prev);
    expected = 1.0 + factor * (expected - 1.0);
    for (int d = 0; d < c.coeffs.size(); ++d)
      CHECK(c.coeffs[d] == doctest::Approx(expected).epsilon(1e-8));
    const FEField snapshot = c;
    prev = [snapshot](Point x) { return snapshot.scalar(x); };
  }
}

TEST_CASE("transport: tangential advection conserves surface mass") {
  Fixture f(30);  // h = 0.04
  // smooth tangential velocity: advection + dilution together are in
  // conservative form on a fixed closed surface
  auto vel = [&](Point x) {
    const Vec2 n = f.phi.grad(x).normalized();
    const double theta = std::atan2(x.r, x.z);
    return n.perp() * std::sin(theta);
  };
  auto velgrad = [&](Point x) {
    const double eps = 1e-6;
    Eigen::Matrix2d J;
    const Vec2 dr = (vel({x.r + eps, x.z}) - vel({x.r - eps, x.z})) / (2 * eps);
    const Vec2 dz = (vel({x.r, x.z + eps}) - vel({x.r, x.z - eps})) / (2 * eps);
    J << dr.r, dz.r, dr.z, dz.z;
    return J;
  };
  auto c0 = [](Point x) { return 1.0 + 0.2 * x.z / std::max(x.norm(), 1e-12); };
  const TransportProblem prob = f.problem(0.0, 0.004);
  const SurfaceTransportOperator op(prob, vel, velgrad);
  const FEField c1 = op.step(c0);

  double m0 = 0.0;
  for (size_t k = 0; k < f.mesh->cut_cells.size(); ++k)
    for (const auto& qp : f.quad.surface[k].points)
      m0 += qp.w * qp.x.r * c0(qp.x);
  m0 *= 2.0 * M_PI;
  const double m1 = surface_mass(c1, *f.mesh, f.quad);
  CHECK(std::abs(m1 - m0) / m0 < 1e-3);
}

TEST_CASE("transport: maximum principle in the diffusion-dominated regime") {
  Fixture f(30);
  auto c0 = [](Point x) {
    const double theta = std::atan2(x.r, x.z);
    return 1.0 + 0.3 * std::cos(3.0 * theta);
  };
  const FEField c1 = transport_step(f.problem(0.0, 0.01), kZeroVel, kZeroGrad, c0);
  for (int d = 0; d < c1.coeffs.size(); ++d) {
    CHECK(c1.coeffs[d] >= 0.7 - 1e-8);
    CHECK(c1.coeffs[d] <= 1.3 + 1e-8);
  }
}

TEST_CASE("transport: stabilization invisible on normal-constant fields") {
  auto grid = std::make_shared<BackgroundGrid>(0.0, 1.0, -0.5, 0.5, 10, 10);
  auto phi = LevelSetField::interpolate(grid, [](Point x) { return x.r - 0.55; });
  auto mesh = std::make_shared<ActiveMesh>(
      classify_cells(phi, 1.5 * grid->h(), ClassifyMode::Surface));
  MeshQuadrature quad = build_mesh_quadrature(*mesh, phi, 5, true);
  TransportProblem p;
  p.mesh = mesh;
  p.phi = &phi;
  p.quad = &quad;
  const SurfaceTransportOperator op(p, kZeroVel, kZeroGrad);
  const auto& space = *op.space();
  Eigen::VectorXd c(space.num_dofs());
  for (int d = 0; d < space.num_dofs(); ++d)
    c[d] = 2.0 - 0.6 * space.dof_point(d).z;  // varies along the interface only
  CHECK(op.stabilization_energy(c) < 1e-10);
  for (int d = 0; d < space.num_dofs(); ++d) c[d] = space.dof_point(d).r;
  CHECK(op.stabilization_energy(c) > 1e-3);
}

TEST_CASE("transport: supg terms") {
  Fixture f(15);
  SUBCASE("zero velocity contributes nothing") {
    const SurfaceTransportOperator off(f.problem(1.0, 0.01, false), kZeroVel, kZeroGrad);
    const SurfaceTransportOperator on(f.problem(1.0, 0.01, true), kZeroVel, kZeroGrad);
    const Eigen::SparseMatrix<double> D = on.matrix() - off.matrix();
    CHECK(Eigen::MatrixXd(D).lpNorm<Eigen::Infinity>() < 1e-14);
  }
  SUBCASE("contribution scales linearly for small velocities") {
    auto vel_scaled = [&](double s) {
      return [&, s](Point x) {
        const Vec2 n = f.phi.grad(x).normalized();
        return n.perp() * (s * std::sin(std::atan2(x.r, x.z)));
      };
    };
    auto make_diff = [&](double s) {
      const SurfaceTransportOperator off(f.problem(1.0, 0.01, false),
                                         vel_scaled(s), kZeroGrad);
      const SurfaceTransportOperator on(f.problem(1.0, 0.01, true),
                                        vel_scaled(s), kZeroGrad);
      return Eigen::MatrixXd(on.matrix() - off.matrix()).norm();
    };
    const double d1 = make_diff(1e-3);
    const double d2 = make_diff(2e-3);
    CHECK(d2 / d1 == doctest::Approx(2.0).epsilon(0.02));
  }
  SUBCASE("uniform equilibrium unchanged by supg") {
    const FEField c_off = transport_step(f.problem(1.0, 0.1, false), kZeroVel,
                                         kZeroGrad, [](Point) { return 1.0; });
    const FEField c_on = transport_step(f.problem(1.0, 0.1, true), kZeroVel,
                                        kZeroGrad, [](Point) { return 1.0; });
    CHECK((c_on.coeffs - c_off.coeffs).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("transport: initialize_concentration modes") {
  Fixture f(15);
  auto space = std::make_shared<ConstrainedFESpace>(
      build_space(f.mesh, Family::Q1Scalar));
  SUBCASE("uniform") {
    ConcentrationSpec spec;
    spec.mode = ConcentrationInit::Uniform;
    const FEField c = initialize_concentration(space, f.quad, spec);
    for (int d = 0; d < c.coeffs.size(); ++d) CHECK(c.coeffs[d] == 1.0);
  }
  SUBCASE("random perturbation: bounded amplitude and zero surface mean") {
    ConcentrationSpec spec;
    spec.mode = ConcentrationInit::RandomPerturbation;
    spec.amplitude = 1e-5;
    spec.seed = 20240810;
    const FEField c = initialize_concentration(space, f.quad, spec);
    double maxdev = 0.0;
    for (int d = 0; d < c.coeffs.size(); ++d)
      maxdev = std::max(maxdev, std::abs(c.coeffs[d] - 1.0));
    CHECK(maxdev <= 1e-5);
    CHECK(maxdev > 1e-7);  // not degenerate
    double integral = 0.0;
    for (size_t k = 0; k < f.mesh->cut_cells.size(); ++k)
      for (const auto& qp : f.quad.surface[k].points)
        integral += qp.w * qp.x.r *
                    (c.space->eval_scalar_on_cell(c.coeffs, f.mesh->cut_cells[k], qp.x) - 1.0);
    CHECK(std::abs(integral) < 1e-12);
    // reproducible for a fixed seed
    const FEField c2 = initialize_concentration(space, f.quad, spec);
    CHECK((c.coeffs - c2.coeffs).lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("sextant bias lands strictly between the two values") {
    ConcentrationSpec spec;
    spec.mode = ConcentrationInit::Sextant;
    const FEField c = initialize_concentration(space, f.quad, spec);
    double num = 0.0, den = 0.0;
    for (size_t k = 0; k < f.mesh->cut_cells.size(); ++k)
      for (const auto& qp : f.quad.surface[k].points) {
        num += qp.w * qp.x.r *
               c.space->eval_scalar_on_cell(c.coeffs, f.mesh->cut_cells[k], qp.x);
        den += qp.w * qp.x.r;
      }
    const double mean = num / den;
    CHECK(mean > 1.0);
    CHECK(mean < 1.1);
    // the bias sits at the -z pole
    CHECK(c.scalar({0.05, -0.99}) == doctest::Approx(1.1));
    CHECK(c.scalar({0.05, 0.99}) == doctest::Approx(1.0));
  }
}

TEST_CASE("transport: previous field outside its band raises an error") {
  Fixture f(15);
  const TransportProblem prob = f.problem(1.0, 0.01);
  const SurfaceTransportOperator op(prob, kZeroVel, kZeroGrad);
  auto too_narrow = [](Point x) -> double {
    throw std::runtime_error("previous field not evaluable at r=" +
                             std::to_string(x.r));
  };
  CHECK_THROWS(op.step(too_narrow));
}
