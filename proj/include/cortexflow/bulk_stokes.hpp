#pragma once

#include <functional>
#include <memory>

#include "cortexflow/assembly.hpp"
#include "cortexflow/fe_space.hpp"
#include "cortexflow/quadrature.hpp"

namespace cortexflow {

// Axisymmetric unfitted Stokes problem for the cytoplasm: AgFEM-constrained
// Q2 velocities and discontinuous P1 pressures, Dirichlet data on the
// embedded interface imposed with Nitsche terms, u_r = 0 strongly on the
// symmetry axis, zero r-weighted mean pressure through one multiplier.
struct BulkFlowProblem {
  std::shared_ptr<const ActiveMesh> mesh;  // bulk-mode active mesh
  const LevelSetField* phi = nullptr;
  const MeshQuadrature* quad = nullptr;
  double two_r_over_leta = 2e-4;  // hydrodynamic coupling 2R/L_eta
  double alpha = 20.0;            // Nitsche coefficient
  double eta_min = 0.25;          // badly-cut threshold
};

struct BulkSolution {
  FEField u;  // Q2 vector velocity
  FEField p;  // P1disc pressure
  double pressure_multiplier = 0.0;
  int system_size = 0;
};

// Assembles and factorizes once per geometry; the Dirichlet datum enters
// only the right-hand side, so fixed-point iterations reuse the
// factorization.
class BulkStokesOperator {
 public:
  explicit BulkStokesOperator(const BulkFlowProblem& problem);

  BulkSolution solve(const std::function<Vec2(Point)>& boundary_velocity) const;
  // Matrix and right-hand side for a given datum, before solving.
  SparseSystem assemble_with_datum(
      const std::function<Vec2(Point)>& boundary_velocity) const;

  std::shared_ptr<const ConstrainedFESpace> velocity_space() const { return vel_; }
  std::shared_ptr<const ConstrainedFESpace> pressure_space() const { return prs_; }

  // Constrained velocity-velocity block (viscous + Nitsche velocity terms);
  // its smallest eigenvalue demonstrates the coercivity role of alpha.
  Eigen::SparseMatrix<double> velocity_block() const;

 private:
  BulkFlowProblem prob_;
  std::shared_ptr<ConstrainedFESpace> vel_, prs_;
  mutable SystemAssembler assembler_;
  DirectSolver solver_;

  void assemble_rhs(const std::function<Vec2(Point)>& datum) const;
};

// One-call variants matching the operation contracts.
SparseSystem assemble_bulk(const BulkFlowProblem& problem,
                           const std::function<Vec2(Point)>& boundary_velocity);
BulkSolution solve_bulk(const BulkFlowProblem& problem,
                        const std::function<Vec2(Point)>& boundary_velocity);

}  // namespace cortexflow
