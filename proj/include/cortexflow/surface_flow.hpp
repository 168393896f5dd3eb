#pragma once

#include <functional>
#include <memory>

#include "cortexflow/assembly.hpp"
#include "cortexflow/fe_space.hpp"
#include "cortexflow/quadrature.hpp"

namespace cortexflow {

// Trace-FEM surface momentum balance on the interface band: surface viscous
// operator plus a small friction term, active Marangoni forcing from the
// species field, traction forcing from the cytoplasm, and normal-derivative
// volume stabilization over the whole band. The reduced space removes the
// z-translational rigid mode and enforces compatibility with bulk
// incompressibility through two multipliers; U_r = 0 holds strongly on the
// axis.
struct SurfaceFlowProblem {
  std::shared_ptr<const ActiveMesh> mesh;  // surface-mode band mesh
  const LevelSetField* phi = nullptr;
  const MeshQuadrature* quad = nullptr;    // surface + full band rules
  double peclet = 30.0;
  double two_r_over_leta = 2e-4;
  double beta = 10.0;  // stabilization coefficient
  double rho = 1e-3;   // friction removing Killing fields
  // axial modulation of the active tension, multiplies Pe f(C); identity
  // when absent
  std::function<double(double)> activity_scale;
};

class SurfaceFlowOperator {
 public:
  explicit SurfaceFlowOperator(const SurfaceFlowProblem& problem);

  // concentration evaluated at interface points; bulk_traction(x, n) is
  // (2R/L_eta) eps(u) n - p n of the current bulk iterate
  FEField solve(const std::function<double(Point)>& concentration,
                const std::function<Vec2(Point, Vec2)>& bulk_traction) const;
  SparseSystem assemble_with_forcing(
      const std::function<double(Point)>& concentration,
      const std::function<Vec2(Point, Vec2)>& bulk_traction) const;

  std::shared_ptr<const ConstrainedFESpace> space() const { return space_; }
  // residuals of the two reduced-space functionals for a given field
  Eigen::Vector2d constraint_residuals(const Eigen::VectorXd& coeffs) const;
  // value of the stabilization quadratic form (tests)
  double stabilization_energy(const Eigen::VectorXd& coeffs) const;

 private:
  SurfaceFlowProblem prob_;
  std::shared_ptr<ConstrainedFESpace> space_;
  mutable SystemAssembler assembler_;
  DirectSolver solver_;
  Eigen::VectorXd row_translation_, row_normal_;

  void assemble_rhs(const std::function<double(Point)>& concentration,
                    const std::function<Vec2(Point, Vec2)>& bulk_traction) const;
};

FEField solve_surface_flow(
    const SurfaceFlowProblem& problem,
    const std::function<double(Point)>& concentration,
    const std::function<Vec2(Point, Vec2)>& bulk_traction);

}  // namespace cortexflow
