#include "cortexflow/surface_flow.hpp"

#include <cmath>
#include <stdexcept>

#include "cortexflow/diagnostics.hpp"
#include "cortexflow/parallel.hpp"

namespace cortexflow {

namespace {

constexpr double kAxisEps = 1e-12;

// in-plane strain of basis function a=(k,c): P sym(e_c (x) g_k) P
inline Eigen::Matrix2d tangential_strain(const Vec2& gk, int c,
                                         const Eigen::Matrix2d& P) {
  Eigen::Matrix2d grad = Eigen::Matrix2d::Zero();
  grad(c, 0) = gk.r;
  grad(c, 1) = gk.z;
  const Eigen::Matrix2d sym = 0.5 * (grad + grad.transpose());
  return P * sym * P;
}

struct CellBlock {
  int cell = -1;
  Eigen::MatrixXd A;
};

}  // namespace

SurfaceFlowOperator::SurfaceFlowOperator(const SurfaceFlowProblem& problem)
    : prob_(problem),
      space_(std::make_shared<ConstrainedFESpace>(problem.mesh, Family::Q1Vector)),
      assembler_({}) {
  const ActiveMesh& mesh = *prob_.mesh;
  const MeshQuadrature& quad = *prob_.quad;
  if (quad.full.size() != static_cast<size_t>(mesh.num_active()))
    throw std::invalid_argument(
        "surface flow: band quadrature must cover all band cells");

  // strong U_r = 0 on the symmetry axis
  for (int d = 0; d < space_->num_dofs(); ++d) {
    if (space_->dof_component(d) != 0) continue;
    if (std::abs(space_->dof_point(d).r) < kAxisEps) space_->add_dirichlet(d, 0.0);
  }
  space_->close_constraints();
  assembler_ = SystemAssembler({space_.get()});

  const double h = mesh.grid->h();
  const int nu = space_->dofs_per_cell();  // 8
  const int m = space_->scalar_nodes_per_cell();

  std::vector<CellBlock> surface_blocks(mesh.cut_cells.size());
  parallel_for(static_cast<std::int64_t>(mesh.cut_cells.size()), [&](std::int64_t kk) {
    const int k = static_cast<int>(kk);
    const int cell = mesh.cut_cells[k];
    const CutQuadrature& rule = quad.surface[k];
    if (rule.empty()) return;
    CellBlock& cb = surface_blocks[k];
    cb.cell = cell;
    cb.A = Eigen::MatrixXd::Zero(nu, nu);
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
      Eigen::Matrix2d E[8];
      for (int kn = 0; kn < m; ++kn)
        for (int c = 0; c < 2; ++c) E[2 * kn + c] = tangential_strain(G[kn], c, P);
      for (int a = 0; a < nu; ++a)
        for (int b = 0; b < nu; ++b) {
          double v = 2.0 * (E[a].cwiseProduct(E[b])).sum() * wr;
          const int kn = a / 2, c = a % 2, ln = b / 2, d = b % 2;
          if (c == 0 && d == 0 && r > kAxisEps)
            v += 2.0 * N[kn] * N[ln] / r * qp.w;  // hoop strain product
          if (c == d) v += prob_.rho * N[kn] * N[ln] * wr;  // friction
          cb.A(a, b) += v;
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
    cb.A = Eigen::MatrixXd::Zero(nu, nu);
    Vec2 G[4];
    for (const auto& qp : rule.points) {
      const Vec2 gphi = prob_.phi->grad(qp.x);
      const double gn = gphi.norm();
      if (gn < 0.1) continue;  // far inside the band: no reliable normal
      const Vec2 n = gphi / gn;
      space_->scalar_basis_grad(cell, qp.x, G);
      const double wr = qp.w * qp.x.r * prob_.beta / h;
      double gdotn[4];
      for (int kn = 0; kn < m; ++kn) gdotn[kn] = G[kn].dot(n);
      for (int kn = 0; kn < m; ++kn)
        for (int c = 0; c < 2; ++c)
          for (int ln = 0; ln < m; ++ln)
            cb.A(2 * kn + c, 2 * ln + c) += wr * gdotn[kn] * gdotn[ln];
    }
  });

  std::vector<int> dofs(nu);
  auto scatter = [&](const CellBlock& cb) {
    if (cb.cell < 0) return;
    space_->cell_dofs(cb.cell, dofs.data());
    assembler_.add_block(dofs, dofs, cb.A);
  };
  for (const auto& cb : surface_blocks) scatter(cb);
  for (const auto& cb : band_blocks) scatter(cb);

  // reduced-space functionals: z-translation and normal compatibility
  row_translation_ = Eigen::VectorXd::Zero(space_->num_dofs());
  row_normal_ = Eigen::VectorXd::Zero(space_->num_dofs());
  double N[4];
  for (size_t k = 0; k < mesh.cut_cells.size(); ++k) {
    const int cell = mesh.cut_cells[k];
    int cdofs[8];
    space_->cell_dofs(cell, cdofs);
    for (const auto& qp : quad.surface[k].points) {
      space_->scalar_basis(cell, qp.x, N);
      const double wr = qp.w * qp.x.r;
      for (int kn = 0; kn < m; ++kn) {
        row_translation_[cdofs[2 * kn + 1]] += wr * N[kn];
        row_normal_[cdofs[2 * kn]] += wr * N[kn] * qp.normal.r;
        row_normal_[cdofs[2 * kn + 1]] += wr * N[kn] * qp.normal.z;
      }
    }
  }
  assembler_.add_scalar_constraint(0, row_translation_, 0.0);
  assembler_.add_scalar_constraint(0, row_normal_, 0.0);

  solver_.factorize(assembler_.build_matrix());
}

void SurfaceFlowOperator::assemble_rhs(
    const std::function<double(Point)>& concentration,
    const std::function<Vec2(Point, Vec2)>& bulk_traction) const {
  assembler_.clear_rhs();
  const ActiveMesh& mesh = *prob_.mesh;
  const MeshQuadrature& quad = *prob_.quad;
  const int nu = space_->dofs_per_cell();
  const int m = space_->scalar_nodes_per_cell();
  std::vector<int> dofs(nu);
  double N[4];
  Vec2 G[4];
  for (size_t k = 0; k < mesh.cut_cells.size(); ++k) {
    const int cell = mesh.cut_cells[k];
    const CutQuadrature& rule = quad.surface[k];
    if (rule.empty()) continue;
    Eigen::VectorXd f = Eigen::VectorXd::Zero(nu);
    for (const auto& qp : rule.points) {
      space_->scalar_basis(cell, qp.x, N);
      space_->scalar_basis_grad(cell, qp.x, G);
      const double r = qp.x.r;
      Eigen::Matrix2d P = Eigen::Matrix2d::Identity();
      const Eigen::Vector2d n(qp.normal.r, qp.normal.z);
      P -= n * n.transpose();
      double tension = prob_.peclet * hill_activity(concentration(qp.x));
      if (prob_.activity_scale) tension *= prob_.activity_scale(qp.x.z);
      const Vec2 trac = bulk_traction(qp.x, qp.normal);
      for (int kn = 0; kn < m; ++kn)
        for (int c = 0; c < 2; ++c) {
          // div_Gamma of the basis: tr(P grad) restricted to row c
          const double divg = P(c, 0) * G[kn].r + P(c, 1) * G[kn].z;
          double dil = divg * r;
          if (c == 0) dil += N[kn];  // + V_r (from V_r / r times r)
          double v = -tension * dil * qp.w;
          const double tc = (c == 0) ? trac.r : trac.z;
          v -= tc * N[kn] * qp.w * r;
          f[2 * kn + c] += v;
        }
    }
    space_->cell_dofs(cell, dofs.data());
    assembler_.add_rhs(dofs, f);
  }
}

FEField SurfaceFlowOperator::solve(
    const std::function<double(Point)>& concentration,
    const std::function<Vec2(Point, Vec2)>& bulk_traction) const {
  assemble_rhs(concentration, bulk_traction);
  const Eigen::VectorXd x = solver_.solve(assembler_.build_rhs());
  return FEField{space_, assembler_.expand(0, x)};
}

SparseSystem SurfaceFlowOperator::assemble_with_forcing(
    const std::function<double(Point)>& concentration,
    const std::function<Vec2(Point, Vec2)>& bulk_traction) const {
  assemble_rhs(concentration, bulk_traction);
  return assembler_.build();
}

Eigen::Vector2d SurfaceFlowOperator::constraint_residuals(
    const Eigen::VectorXd& coeffs) const {
  return {row_translation_.dot(coeffs), row_normal_.dot(coeffs)};
}

double SurfaceFlowOperator::stabilization_energy(
    const Eigen::VectorXd& coeffs) const {
  const ActiveMesh& mesh = *prob_.mesh;
  const MeshQuadrature& quad = *prob_.quad;
  const double h = mesh.grid->h();
  double energy = 0.0;
  Vec2 G[4];
  for (int k = 0; k < mesh.num_active(); ++k) {
    const int cell = mesh.active_cells[k];
    int dofs[8];
    space_->cell_dofs(cell, dofs);
    for (const auto& qp : quad.full[k].points) {
      const Vec2 gphi = prob_.phi->grad(qp.x);
      const double gn = gphi.norm();
      if (gn < 0.1) continue;
      const Vec2 n = gphi / gn;
      space_->scalar_basis_grad(cell, qp.x, G);
      Vec2 dn{0.0, 0.0};
      for (int kn = 0; kn < space_->scalar_nodes_per_cell(); ++kn) {
        const double gd = G[kn].dot(n);
        dn.r += gd * coeffs[dofs[2 * kn]];
        dn.z += gd * coeffs[dofs[2 * kn + 1]];
      }
      energy += prob_.beta / h * qp.w * qp.x.r * dn.squared_norm();
    }
  }
  return energy;
}

FEField solve_surface_flow(
    const SurfaceFlowProblem& problem,
    const std::function<double(Point)>& concentration,
    const std::function<Vec2(Point, Vec2)>& bulk_traction) {
  return SurfaceFlowOperator(problem).solve(concentration, bulk_traction);
}

}  // namespace cortexflow
