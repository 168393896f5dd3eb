#include "cortexflow/bulk_stokes.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "cortexflow/parallel.hpp"

namespace cortexflow {

namespace {

constexpr double kAxisEps = 1e-12;

// strain contraction for vector basis functions a=(k,c), b=(l,d):
// eps(a):eps(b) = 0.5 (delta_cd g_k.g_l + g_k[d] g_l[c])
inline double strain_dot(const Vec2& gk, int c, const Vec2& gl, int d) {
  const double gkd = (d == 0) ? gk.r : gk.z;
  const double glc = (c == 0) ? gl.r : gl.z;
  return 0.5 * ((c == d ? gk.dot(gl) : 0.0) + gkd * glc);
}

// eps(a) n for a=(k,c): 0.5 (e_c (g_k.n) + g_k n[c])
inline Vec2 strain_normal(const Vec2& gk, int c, const Vec2& n) {
  const double nc = (c == 0) ? n.r : n.z;
  Vec2 v = gk * (0.5 * nc);
  const double gn = 0.5 * gk.dot(n);
  if (c == 0)
    v.r += gn;
  else
    v.z += gn;
  return v;
}

struct CellBlocks {
  int cell = -1;
  Eigen::MatrixXd uu, up;
  bool has_up = false;
};

}  // namespace

BulkStokesOperator::BulkStokesOperator(const BulkFlowProblem& problem)
    : prob_(problem),
      vel_(std::make_shared<ConstrainedFESpace>(problem.mesh, Family::Q2Vector)),
      prs_(std::make_shared<ConstrainedFESpace>(problem.mesh,
                                                Family::P1DiscScalar)),
      assembler_({}) {
  const ActiveMesh& mesh = *prob_.mesh;
  const MeshQuadrature& quad = *prob_.quad;
  if (static_cast<int>(quad.bulk.size()) != mesh.num_active())
    throw std::invalid_argument("bulk stokes: quadrature does not match mesh");
  for (int k = 0; k < mesh.num_active(); ++k) {
    const int cell = mesh.active_cells[k];
    if (mesh.tag[cell] == CellTag::Interior && quad.bulk[k].empty())
      throw std::runtime_error("bulk stokes: missing quadrature for cell " +
                               std::to_string(cell));
  }

  // AgFEM constraints on both fields, then the strong axis condition
  const auto frac = cut_fractions(mesh, quad);
  const AggregateMap aggregates = aggregate_cells(mesh, frac, prob_.eta_min);
  build_agfem_constraints(*vel_, aggregates, frac, prob_.eta_min);
  build_agfem_constraints(*prs_, aggregates, frac, prob_.eta_min);
  for (int d = 0; d < vel_->num_dofs(); ++d) {
    if (vel_->dof_component(d) != 0) continue;
    if (std::abs(vel_->dof_point(d).r) < kAxisEps) vel_->add_dirichlet(d, 0.0);
  }
  vel_->close_constraints();
  prs_->close_constraints();

  assembler_ = SystemAssembler({vel_.get(), prs_.get()});
  const int off_p = assembler_.space_offset(1);
  const double h = mesh.grid->h();
  const double mu2 = prob_.two_r_over_leta;
  const int nu = vel_->dofs_per_cell();  // 18
  const int np = prs_->dofs_per_cell();  // 3
  const int m = vel_->scalar_nodes_per_cell();

  // cell-parallel local blocks, serial deterministic scatter
  std::vector<CellBlocks> blocks(mesh.num_active());
  parallel_for(mesh.num_active(), [&](std::int64_t kk) {
    const int k = static_cast<int>(kk);
    const int cell = mesh.active_cells[k];
    const CutQuadrature& rule = quad.bulk[k];
    if (rule.empty()) return;
    CellBlocks& cb = blocks[k];
    cb.cell = cell;
    cb.uu = Eigen::MatrixXd::Zero(nu, nu);
    cb.up = Eigen::MatrixXd::Zero(nu, np);
    cb.has_up = true;
    double N[9], P[3];
    Vec2 G[9];
    for (const auto& qp : rule.points) {
      vel_->scalar_basis(cell, qp.x, N);
      vel_->scalar_basis_grad(cell, qp.x, G);
      prs_->scalar_basis(cell, qp.x, P);
      const double r = qp.x.r;
      const double wr = qp.w * r;
      for (int kn = 0; kn < m; ++kn) {
        for (int c = 0; c < 2; ++c) {
          const int a = 2 * kn + c;
          for (int ln = 0; ln < m; ++ln)
            for (int d = 0; d < 2; ++d) {
              const int b = 2 * ln + d;
              double v = strain_dot(G[kn], c, G[ln], d) * wr;
              // hoop strain (u_r/r)(v_r/r) r
              if (c == 0 && d == 0 && r > kAxisEps)
                v += N[kn] * N[ln] / r * qp.w;
              cb.uu(a, b) += mu2 * v;
            }
          // b(v, p) = -p (div v * r + v_r)
          const double divr =
              ((c == 0) ? G[kn].r : G[kn].z) * r + ((c == 0) ? N[kn] : 0.0);
          for (int j = 0; j < np; ++j) cb.up(a, j) -= P[j] * divr * qp.w;
        }
      }
    }
  });

  // Nitsche interface terms on cut cells
  std::vector<CellBlocks> nitsche(mesh.cut_cells.size());
  parallel_for(static_cast<std::int64_t>(mesh.cut_cells.size()), [&](std::int64_t kk) {
    const int k = static_cast<int>(kk);
    const int cell = mesh.cut_cells[k];
    const CutQuadrature& rule = quad.surface[k];
    if (rule.empty()) return;
    CellBlocks& cb = nitsche[k];
    cb.cell = cell;
    cb.uu = Eigen::MatrixXd::Zero(nu, nu);
    cb.up = Eigen::MatrixXd::Zero(nu, np);
    cb.has_up = true;
    double N[9], P[3];
    Vec2 G[9];
    for (const auto& qp : rule.points) {
      vel_->scalar_basis(cell, qp.x, N);
      vel_->scalar_basis_grad(cell, qp.x, G);
      prs_->scalar_basis(cell, qp.x, P);
      const double wr = qp.w * qp.x.r;
      const Vec2 n = qp.normal;
      for (int kn = 0; kn < m; ++kn) {
        for (int c = 0; c < 2; ++c) {
          const int a = 2 * kn + c;
          const Vec2 ea_sn = strain_normal(G[kn], c, n);
          for (int ln = 0; ln < m; ++ln)
            for (int d = 0; d < 2; ++d) {
              const int b = 2 * ln + d;
              double v = (c == d) ? (prob_.alpha / h) * N[kn] * N[ln] : 0.0;
              const Vec2 eb_sn = strain_normal(G[ln], d, n);
              // consistency and adjoint-consistency terms
              const double phi_a_dot = (c == 0) ? eb_sn.r : eb_sn.z;  // (eps(b)n).e_c
              const double phi_b_dot = (d == 0) ? ea_sn.r : ea_sn.z;
              v -= mu2 * (phi_a_dot * N[kn] + phi_b_dot * N[ln]);
              cb.uu(a, b) += v * wr;
            }
          // +p (n . v) and the adjoint +q (n . u)
          const double nc = (c == 0) ? n.r : n.z;
          for (int j = 0; j < np; ++j) cb.up(a, j) += P[j] * nc * N[kn] * wr;
        }
      }
    }
  });

  std::vector<int> udofs(nu), pdofs(np);
  auto scatter = [&](const CellBlocks& cb) {
    if (cb.cell < 0) return;
    vel_->cell_dofs(cb.cell, udofs.data());
    prs_->cell_dofs(cb.cell, pdofs.data());
    std::vector<int> prows(np);
    for (int j = 0; j < np; ++j) prows[j] = off_p + pdofs[j];
    assembler_.add_block(udofs, udofs, cb.uu);
    assembler_.add_block(udofs, prows, cb.up);
    assembler_.add_block(prows, udofs, cb.up.transpose());
  };
  for (const auto& cb : blocks) scatter(cb);
  for (const auto& cb : nitsche) scatter(cb);

  // zero r-weighted mean pressure
  Eigen::VectorXd mean_row = Eigen::VectorXd::Zero(prs_->num_dofs());
  double P[3];
  std::vector<int> pd(np);
  for (int k = 0; k < mesh.num_active(); ++k) {
    const CutQuadrature& rule = quad.bulk[k];
    if (rule.empty()) continue;
    const int cell = mesh.active_cells[k];
    prs_->cell_dofs(cell, pd.data());
    for (const auto& qp : rule.points) {
      prs_->scalar_basis(cell, qp.x, P);
      for (int j = 0; j < np; ++j) mean_row[pd[j]] += qp.w * qp.x.r * P[j];
    }
  }
  assembler_.add_scalar_constraint(1, mean_row, 0.0);

  solver_.factorize(assembler_.build_matrix());
}

void BulkStokesOperator::assemble_rhs(
    const std::function<Vec2(Point)>& datum) const {
  assembler_.clear_rhs();
  const ActiveMesh& mesh = *prob_.mesh;
  const MeshQuadrature& quad = *prob_.quad;
  const double h = mesh.grid->h();
  const double mu2 = prob_.two_r_over_leta;
  const int nu = vel_->dofs_per_cell();
  const int np = prs_->dofs_per_cell();
  const int m = vel_->scalar_nodes_per_cell();
  const int off_p = assembler_.space_offset(1);
  std::vector<int> udofs(nu), prows(np);
  double N[9], P[3];
  Vec2 G[9];
  for (size_t k = 0; k < mesh.cut_cells.size(); ++k) {
    const int cell = mesh.cut_cells[k];
    const CutQuadrature& rule = quad.surface[k];
    if (rule.empty()) continue;
    Eigen::VectorXd fu = Eigen::VectorXd::Zero(nu);
    Eigen::VectorXd fp = Eigen::VectorXd::Zero(np);
    for (const auto& qp : rule.points) {
      vel_->scalar_basis(cell, qp.x, N);
      vel_->scalar_basis_grad(cell, qp.x, G);
      prs_->scalar_basis(cell, qp.x, P);
      const double wr = qp.w * qp.x.r;
      const Vec2 n = qp.normal;
      const Vec2 U = datum(qp.x);
      for (int kn = 0; kn < m; ++kn)
        for (int c = 0; c < 2; ++c) {
          const int a = 2 * kn + c;
          const double Uc = (c == 0) ? U.r : U.z;
          const Vec2 ea_sn = strain_normal(G[kn], c, n);
          fu[a] += ((prob_.alpha / h) * Uc * N[kn] - mu2 * ea_sn.dot(U)) * wr;
        }
      for (int j = 0; j < np; ++j) fp[j] += P[j] * n.dot(U) * wr;
    }
    vel_->cell_dofs(cell, udofs.data());
    int pdofs[3];
    prs_->cell_dofs(cell, pdofs);
    for (int j = 0; j < np; ++j) prows[j] = off_p + pdofs[j];
    assembler_.add_rhs(udofs, fu);
    assembler_.add_rhs(prows, fp);
  }
}

BulkSolution BulkStokesOperator::solve(
    const std::function<Vec2(Point)>& boundary_velocity) const {
  assemble_rhs(boundary_velocity);
  const Eigen::VectorXd x = solver_.solve(assembler_.build_rhs());
  BulkSolution sol;
  sol.u = FEField{vel_, assembler_.expand(0, x)};
  sol.p = FEField{prs_, assembler_.expand(1, x)};
  sol.pressure_multiplier = assembler_.multiplier(x, 0);
  sol.system_size = assembler_.system_size();
  return sol;
}

SparseSystem BulkStokesOperator::assemble_with_datum(
    const std::function<Vec2(Point)>& boundary_velocity) const {
  assemble_rhs(boundary_velocity);
  return assembler_.build();
}

Eigen::SparseMatrix<double> BulkStokesOperator::velocity_block() const {
  // reduced system restricted to the free velocity dofs
  const Eigen::SparseMatrix<double> A = assembler_.build_matrix();
  std::vector<int> keep;
  for (int d = 0; d < vel_->num_dofs(); ++d) {
    const int fi = assembler_.free_index(d);
    if (fi >= 0) keep.push_back(fi);
  }
  Eigen::SparseMatrix<double> B(keep.size(), keep.size());
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<int> inv(A.rows(), -1);
  for (size_t i = 0; i < keep.size(); ++i) inv[keep[i]] = static_cast<int>(i);
  for (int k = 0; k < A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
      if (inv[it.row()] >= 0 && inv[it.col()] >= 0)
        trip.emplace_back(inv[it.row()], inv[it.col()], it.value());
  B.setFromTriplets(trip.begin(), trip.end());
  return B;
}

SparseSystem assemble_bulk(const BulkFlowProblem& problem,
                           const std::function<Vec2(Point)>& boundary_velocity) {
  return BulkStokesOperator(problem).assemble_with_datum(boundary_velocity);
}

BulkSolution solve_bulk(const BulkFlowProblem& problem,
                        const std::function<Vec2(Point)>& boundary_velocity) {
  return BulkStokesOperator(problem).solve(boundary_velocity);
}

}  // namespace cortexflow
