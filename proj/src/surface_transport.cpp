#include "cortexflow/surface_transport.hpp"

#include <cmath>
#include <stdexcept>

#include "cortexflow/parallel.hpp"
#include "cortexflow/rng.hpp"

namespace cortexflow {

namespace {

constexpr double kAxisEps = 1e-12;

struct CellBlock {
  int cell = -1;
  Eigen::MatrixXd A;
};

}  // namespace

SurfaceTransportOperator::SurfaceTransportOperator(
    const TransportProblem& problem, const std::function<Vec2(Point)>& velocity,
    const std::function<Eigen::Matrix2d(Point)>& velocity_grad)
    : prob_(problem),
      velocity_(velocity),
      space_(std::make_shared<ConstrainedFESpace>(problem.mesh, Family::Q1Scalar)),
      assembler_({}) {
  const ActiveMesh& mesh = *prob_.mesh;
  const MeshQuadrature& quad = *prob_.quad;
  if (quad.full.size() != static_cast<size_t>(mesh.num_active()))
    throw std::invalid_argument(
        "surface transport: band quadrature must cover all band cells");
  assembler_ = SystemAssembler({space_.get()});

  const double h = mesh.grid->h();
  const int m = space_->scalar_nodes_per_cell();  // 4
  const double mass_coef = 1.0 / prob_.dt + prob_.exchange_rate;

  // per-cell SUPG parameter: streamline time capped by the step
  supg_tau_.assign(mesh.cut_cells.size(), 0.0);
  if (prob_.supg) {
    for (size_t k = 0; k < mesh.cut_cells.size(); ++k) {
      double umax = 0.0;
      for (const auto& qp : quad.surface[k].points)
        umax = std::max(umax, velocity(qp.x).norm());
      supg_tau_[k] = std::min(h / (2.0 * umax + 1e-12), 0.5 * prob_.dt);
    }
  }

  std::vector<CellBlock> surf_blocks(mesh.cut_cells.size());
  parallel_for(static_cast<std::int64_t>(mesh.cut_cells.size()), [&](std::int64_t kk) {
    const int k = static_cast<int>(kk);
    const int cell = mesh.cut_cells[k];
    const CutQuadrature& rule = quad.surface[k];
    if (rule.empty()) return;
    CellBlock& cb = surf_blocks[k];
    cb.cell = cell;
    cb.A = Eigen::MatrixXd::Zero(m, m);
    double N[4];
    Vec2 G[4];
    for (const auto& qp : rule.points) {
      space_->scalar_basis(cell, qp.x, N);
      space_->scalar_basis_grad(cell, qp.x, G);
      const double r = qp.x.r;
      const double wr = qp.w * r;
      Eigen::Matrix2d P = Eigen::Matrix2d::Identity();
      const Eigen::Vector2d n(qp.normal.r, qp.normal.z);
      P -= n * n.transpose();
      const Vec2 U = velocity_(qp.x);
      const Eigen::Matrix2d gradU = velocity_grad(qp.x);
      // surface divergence of the 3D field: tr(grad U P) + U_r / r
      double dil_r = (P * gradU).trace() * r + (r > kAxisEps ? U.r : 0.0);
      // surface gradient advection directions per basis function
      double adv[4];
      for (int i = 0; i < m; ++i) {
        const Eigen::Vector2d g(G[i].r, G[i].z);
        const Eigen::Vector2d gs = P * g;
        adv[i] = U.r * gs[0] + U.z * gs[1];
      }
      const double tau = prob_.supg ? supg_tau_[k] : 0.0;
      for (int i = 0; i < m; ++i) {
        // test function with optional streamline modification
        const double Di = N[i];
        const double Si = tau * adv[i];
        for (int j = 0; j < m; ++j) {
          double v = mass_coef * N[j] * Di * wr;       // mass + kinetics
          v += adv[j] * Di * wr;                       // advection
          v += N[j] * Di * dil_r * qp.w;               // dilution
          v += G[i].dot(G[j]) * wr;                    // full-gradient diffusion
          if (tau > 0.0) {
            // streamline test modification of the advection + reaction residual
            v += Si * (mass_coef * N[j] + adv[j] + N[j] * dil_r / std::max(r, kAxisEps)) * wr;
          }
          cb.A(i, j) += v;
        }
      }
    }
  });

  std::vector<CellBlock> band_blocks(mesh.num_active());
  parallel_for(mesh.num_active(), [&](std::int64_t kk) {
    const int k = static_cast<int>(kk);
    const int cell = mesh.active_cells[k];
    const CutQuadrature& rule = quad.full[k];
    if (rule.empty()) return;
    CellBlock& cb = band_blocks[k];
    cb.cell = cell;
    cb.A = Eigen::MatrixXd::Zero(m, m);
    Vec2 G[4];
    for (const auto& qp : rule.points) {
      const Vec2 gphi = prob_.phi->grad(qp.x);
      const double gn = gphi.norm();
      if (gn < 0.1) continue;
      const Vec2 n = gphi / gn;
      space_->scalar_basis_grad(cell, qp.x, G);
      const double wr = qp.w * qp.x.r * prob_.gamma / h;
      double gd[4];
      for (int i = 0; i < m; ++i) gd[i] = G[i].dot(n);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) cb.A(i, j) += wr * gd[i] * gd[j];
    }
  });

  std::vector<int> dofs(m);
  auto scatter = [&](const CellBlock& cb) {
    if (cb.cell < 0) return;
    space_->cell_dofs(cb.cell, dofs.data());
    assembler_.add_block(dofs, dofs, cb.A);
  };
  for (const auto& cb : surf_blocks) scatter(cb);
  for (const auto& cb : band_blocks) scatter(cb);

  solver_.factorize(assembler_.build_matrix());
}

FEField SurfaceTransportOperator::step(
    const std::function<double(Point)>& c_prev) const {
  assembler_.clear_rhs();
  const ActiveMesh& mesh = *prob_.mesh;
  const MeshQuadrature& quad = *prob_.quad;
  const int m = space_->scalar_nodes_per_cell();
  std::vector<int> dofs(m);
  double N[4];
  Vec2 G[4];
  for (size_t k = 0; k < mesh.cut_cells.size(); ++k) {
    const int cell = mesh.cut_cells[k];
    const CutQuadrature& rule = quad.surface[k];
    if (rule.empty()) continue;
    Eigen::VectorXd f = Eigen::VectorXd::Zero(m);
    const double tau = prob_.supg ? supg_tau_[k] : 0.0;
    for (const auto& qp : rule.points) {
      space_->scalar_basis(cell, qp.x, N);
      const double wr = qp.w * qp.x.r;
      const double prev = c_prev(qp.x);
      const double source = prev / prob_.dt + prob_.exchange_rate;
      double adv[4] = {0, 0, 0, 0};
      if (tau > 0.0) {
        space_->scalar_basis_grad(cell, qp.x, G);
        Eigen::Matrix2d P = Eigen::Matrix2d::Identity();
        const Eigen::Vector2d n(qp.normal.r, qp.normal.z);
        P -= n * n.transpose();
        const Vec2 U = velocity_(qp.x);
        for (int i = 0; i < m; ++i) {
          const Eigen::Vector2d g(G[i].r, G[i].z);
          const Eigen::Vector2d gs = P * g;
          adv[i] = U.r * gs[0] + U.z * gs[1];
        }
      }
      for (int i = 0; i < m; ++i)
        f[i] += source * (N[i] + tau * adv[i]) * wr;
    }
    space_->cell_dofs(cell, dofs.data());
    assembler_.add_rhs(dofs, f);
  }
  const Eigen::VectorXd x = solver_.solve(assembler_.build_rhs());
  return FEField{space_, assembler_.expand(0, x)};
}

double SurfaceTransportOperator::stabilization_energy(
    const Eigen::VectorXd& coeffs) const {
  const ActiveMesh& mesh = *prob_.mesh;
  const MeshQuadrature& quad = *prob_.quad;
  const double h = mesh.grid->h();
  double energy = 0.0;
  Vec2 G[4];
  int dofs[4];
  for (int k = 0; k < mesh.num_active(); ++k) {
    const int cell = mesh.active_cells[k];
    space_->cell_dofs(cell, dofs);
    for (const auto& qp : quad.full[k].points) {
      const Vec2 gphi = prob_.phi->grad(qp.x);
      const double gn = gphi.norm();
      if (gn < 0.1) continue;
      const Vec2 n = gphi / gn;
      space_->scalar_basis_grad(cell, qp.x, G);
      double dn = 0.0;
      for (int i = 0; i < space_->scalar_nodes_per_cell(); ++i)
        dn += G[i].dot(n) * coeffs[dofs[i]];
      energy += prob_.gamma / h * qp.w * qp.x.r * dn * dn;
    }
  }
  return energy;
}

FEField transport_step(const TransportProblem& problem,
                       const std::function<Vec2(Point)>& velocity,
                       const std::function<Eigen::Matrix2d(Point)>& velocity_grad,
                       const std::function<double(Point)>& c_prev) {
  return SurfaceTransportOperator(problem, velocity, velocity_grad).step(c_prev);
}

FEField initialize_concentration(std::shared_ptr<const ConstrainedFESpace> space,
                                 const MeshQuadrature& quad,
                                 const ConcentrationSpec& spec) {
  Eigen::VectorXd c(space->num_dofs());
  switch (spec.mode) {
    case ConcentrationInit::Uniform:
      c.setConstant(spec.uniform_value);
      break;
    case ConcentrationInit::Sextant:
      for (int d = 0; d < space->num_dofs(); ++d) {
        const Point p = space->dof_point(d);
        // polar angle measured from the -z pole
        const double angle = std::atan2(p.r, -p.z);
        c[d] = (angle < M_PI / 6.0) ? spec.sextant_value : spec.uniform_value;
      }
      break;
    case ConcentrationInit::RandomPerturbation: {
      SplitMix64 rng(spec.seed);
      for (int d = 0; d < space->num_dofs(); ++d)
        c[d] = 0.49 * spec.amplitude * rng.symmetric();
      // subtract the surface-weighted mean so the perturbation integrates to
      // zero over the interface
      const ActiveMesh& mesh = space->mesh();
      Eigen::VectorXd row = Eigen::VectorXd::Zero(space->num_dofs());
      double area = 0.0;
      double N[4];
      int dofs[4];
      for (size_t k = 0; k < mesh.cut_cells.size(); ++k) {
        const int cell = mesh.cut_cells[k];
        space->cell_dofs(cell, dofs);
        for (const auto& qp : quad.surface[k].points) {
          space->scalar_basis(cell, qp.x, N);
          const double wr = qp.w * qp.x.r;
          area += wr;
          for (int i = 0; i < 4; ++i) row[dofs[i]] += wr * N[i];
        }
      }
      if (area > 0.0) c.array() -= row.dot(c) / area;
      c.array() += spec.uniform_value;
      break;
    }
  }
  return FEField{std::move(space), std::move(c)};
}

double surface_mass(const FEField& c, const ActiveMesh& mesh,
                    const MeshQuadrature& quad) {
  double mass = 0.0;
  for (size_t k = 0; k < mesh.cut_cells.size(); ++k) {
    const int cell = mesh.cut_cells[k];
    for (const auto& qp : quad.surface[k].points)
      mass += qp.w * qp.x.r *
              c.space->eval_scalar_on_cell(c.coeffs, cell, qp.x);
  }
  return 2.0 * M_PI * mass;
}

}  // namespace cortexflow
