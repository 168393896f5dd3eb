#include <Eigen/Eigenvalues>
#include <cmath>
#include <memory>

#include "cortexflow/bulk_stokes.hpp"
#include "cortexflow/diagnostics.hpp"
#include "doctest.h"

using namespace cortexflow;

namespace {

struct Fixture {
  std::shared_ptr<BackgroundGrid> grid;
  LevelSetField phi;
  std::shared_ptr<ActiveMesh> mesh;
  MeshQuadrature quad;

  Fixture(int nr, int nz, double radius = 1.0, double band = 0.0)
      : grid(std::make_shared<BackgroundGrid>(0.0, 1.2, -1.2, 1.2, nr, nz)),
        phi(LevelSetField::interpolate(
            grid, [=](Point x) { return x.norm() - radius; })) {
    mesh = std::make_shared<ActiveMesh>(classify_cells(phi, band, ClassifyMode::Bulk));
    quad = build_mesh_quadrature(*mesh, phi, 5, false);
  }

  BulkFlowProblem problem(double two_r_over_leta = 2e-4, double alpha = 20.0) {
    BulkFlowProblem p;
    p.mesh = mesh;
    p.phi = &phi;
    p.quad = &quad;
    p.two_r_over_leta = two_r_over_leta;
    p.alpha = alpha;
    return p;
  }
};

}  // namespace

TEST_CASE("bulk stokes: rigid translation datum is reproduced exactly") {
  Fixture f(12, 24);
  const BulkStokesOperator op(f.problem());
  const BulkSolution sol = op.solve([](Point) { return Vec2{0.0, 1.0}; });
  for (int d = 0; d < sol.u.space->num_dofs(); ++d) {
    const double expect = (sol.u.space->dof_component(d) == 0) ? 0.0 : 1.0;
    CHECK(std::abs(sol.u.coeffs[d] - expect) < 1e-8);
  }
  for (int d = 0; d < sol.p.space->num_dofs(); ++d)
    CHECK(std::abs(sol.p.coeffs[d]) < 1e-7);
}

TEST_CASE("bulk stokes: zero datum gives the zero solution") {
  Fixture f(12, 24);
  const BulkStokesOperator op(f.problem());
  const BulkSolution sol = op.solve([](Point) { return Vec2{0.0, 0.0}; });
  CHECK(sol.u.coeffs.lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK(sol.p.coeffs.lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("bulk stokes: discrete incompressibility rows are satisfied") {
  Fixture f(12, 24);
  const BulkStokesOperator op(f.problem());
  const StreamFunctionReference ref(1.0);
  const SparseSystem sys = op.assemble_with_datum(
      [&](Point x) { return ref.bulk_velocity_rz(x); });
  DirectSolver solver;
  solver.factorize(sys.A);
  const Eigen::VectorXd x = solver.solve(sys.b);
  const Eigen::VectorXd res = sys.A * x - sys.b;
  CHECK(res.lpNorm<Eigen::Infinity>() < 1e-9 * std::max(1.0, sys.b.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("bulk stokes: interior polynomial reference is reproduced exactly") {
  // the sigma = 1 interior field is quadratic, so imposing its own trace
  // recovers it to solver tolerance on any mesh
  const StreamFunctionReference ref(1.0);
  Fixture f(12, 24);
  const BulkStokesOperator op(f.problem());
  const BulkSolution sol = op.solve([&](Point x) { return ref.bulk_velocity_rz(x); });
  double errinf = 0.0;
  for (int k = 0; k < f.mesh->num_active(); ++k) {
    const int cell = f.mesh->active_cells[k];
    for (const auto& qp : f.quad.bulk[k].points) {
      const Vec2 uh = sol.u.space->eval_vector_on_cell(sol.u.coeffs, cell, qp.x);
      errinf = std::max(errinf, (uh - ref.bulk_velocity_rz(qp.x)).norm());
    }
  }
  CHECK(errinf < 1e-9);
}

TEST_CASE("bulk stokes: surface-parametrized datum converges at order >= 2.5") {
  // prescribing the physical surface velocity (a function of the polar
  // angle) on the discrete interface leaves the geometric consistency error
  // as the only error source; it decays at third order
  const StreamFunctionReference ref(1.0);
  auto datum = [&](Point x) {
    return ref.surface_velocity_rz(std::atan2(x.r, x.z));
  };
  std::vector<double> errors;
  for (int n : {6, 12}) {  // h = 0.2, 0.1
    Fixture f(n, 2 * n);
    const BulkStokesOperator op(f.problem());
    const BulkSolution sol = op.solve(datum);
    double err2 = 0.0;
    for (int k = 0; k < f.mesh->num_active(); ++k) {
      const int cell = f.mesh->active_cells[k];
      for (const auto& qp : f.quad.bulk[k].points) {
        const Vec2 uh = sol.u.space->eval_vector_on_cell(sol.u.coeffs, cell, qp.x);
        const Vec2 ue = ref.bulk_velocity_rz(qp.x);
        err2 += qp.w * qp.x.r * (uh - ue).squared_norm();
      }
    }
    errors.push_back(std::sqrt(err2));
  }
  const double rate = std::log(errors[0] / errors[1]) / std::log(2.0);
  CHECK(rate >= 2.5);
  CHECK(errors[1] < 1e-4);
}

TEST_CASE("bulk stokes: coercivity depends on the nitsche coefficient") {
  // order-one viscosity so the consistency terms can compete with the
  // penalty; the unscaled penalty dominates trivially at 2R/L_eta << 1
  Fixture f(6, 12);
  SUBCASE("alpha = 20 keeps the velocity block positive") {
    const BulkStokesOperator op(f.problem(1.0, 20.0));
    const Eigen::MatrixXd A = Eigen::MatrixXd(op.velocity_block());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (A + A.transpose()));
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }
  SUBCASE("alpha = 0.1 loses coercivity") {
    const BulkStokesOperator op(f.problem(1.0, 0.1));
    const Eigen::MatrixXd A = Eigen::MatrixXd(op.velocity_block());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (A + A.transpose()));
    CHECK(es.eigenvalues().minCoeff() < 0.0);
  }
}

TEST_CASE("bulk stokes: net axial force of the reference solution vanishes") {
  Fixture f(24, 48);
  const StreamFunctionReference ref(1.0);
  const double mu2 = 2e-4;
  // traction of the analytic fields integrated over the discrete interface
  double force = 0.0;
  const double eps = 1e-6;
  for (size_t k = 0; k < f.mesh->cut_cells.size(); ++k) {
    for (const auto& qp : f.quad.surface[k].points) {
      auto u = [&](Point x) { return ref.bulk_velocity_rz(x); };
      const Vec2 dur = (u({qp.x.r + eps, qp.x.z}) - u({qp.x.r - eps, qp.x.z})) / (2 * eps);
      const Vec2 duz = (u({qp.x.r, qp.x.z + eps}) - u({qp.x.r, qp.x.z - eps})) / (2 * eps);
      const double e_rz = 0.5 * (dur.z + duz.r);
      const double e_zz = duz.z;
      const double p = ref.bulk_pressure(qp.x, mu2);
      const double tz = mu2 * (e_rz * qp.normal.r + e_zz * qp.normal.z) -
                        p * qp.normal.z;
      force += qp.w * qp.x.r * tz;
    }
  }
  CHECK(std::abs(force) < 1e-8);
}

TEST_CASE("bulk stokes: interior cell without quadrature is an error") {
  Fixture f(6, 12);
  MeshQuadrature broken = f.quad;
  // blank out an interior cell's rule
  for (int k = 0; k < f.mesh->num_active(); ++k) {
    if (f.mesh->tag[f.mesh->active_cells[k]] == CellTag::Interior) {
      broken.bulk[k].points.clear();
      break;
    }
  }
  BulkFlowProblem p = f.problem();
  p.quad = &broken;
  CHECK_THROWS(BulkStokesOperator(p));
}
