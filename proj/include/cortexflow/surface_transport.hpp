#pragma once

#include <functional>
#include <memory>

#include "cortexflow/assembly.hpp"
#include "cortexflow/fe_space.hpp"
#include "cortexflow/quadrature.hpp"

namespace cortexflow {

// One implicit Euler step of the species transport on the (new) interface:
// advection with the surface gradient, dilution by the surface divergence,
// diffusion with full ambient gradients, exchange kinetics towards the
// equilibrium concentration 1, and normal-derivative stabilization over the
// band. An optional SUPG term stabilizes advection-dominated steps.
struct TransportProblem {
  std::shared_ptr<const ActiveMesh> mesh;  // band mesh of the new surface
  const LevelSetField* phi = nullptr;
  const MeshQuadrature* quad = nullptr;    // surface + full band rules
  double exchange_rate = 10.0;  // tau_D k_off
  double dt = 0.004;
  double gamma = 10.0;  // stabilization coefficient
  bool supg = false;
};

class SurfaceTransportOperator {
 public:
  SurfaceTransportOperator(
      const TransportProblem& problem,
      const std::function<Vec2(Point)>& velocity,
      const std::function<Eigen::Matrix2d(Point)>& velocity_grad);

  // c_prev is the previous field evaluated on the new interface; it throws
  // when a point falls outside its band, and the error propagates.
  FEField step(const std::function<double(Point)>& c_prev) const;

  std::shared_ptr<const ConstrainedFESpace> space() const { return space_; }
  Eigen::SparseMatrix<double> matrix() const { return assembler_.build_matrix(); }
  double stabilization_energy(const Eigen::VectorXd& coeffs) const;

 private:
  TransportProblem prob_;
  std::function<Vec2(Point)> velocity_;
  std::shared_ptr<ConstrainedFESpace> space_;
  mutable SystemAssembler assembler_;
  DirectSolver solver_;
  std::vector<double> supg_tau_;  // per cut cell
};

FEField transport_step(const TransportProblem& problem,
                       const std::function<Vec2(Point)>& velocity,
                       const std::function<Eigen::Matrix2d(Point)>& velocity_grad,
                       const std::function<double(Point)>& c_prev);

enum class ConcentrationInit { Uniform, Sextant, RandomPerturbation };

struct ConcentrationSpec {
  ConcentrationInit mode = ConcentrationInit::Uniform;
  double uniform_value = 1.0;
  double sextant_value = 1.1;   // on the polar cap around the -z pole
  double amplitude = 1e-5;      // random mode bound on |C - 1|
  std::uint64_t seed = 1234;
};

// Nodal field on the band space; the random mode rescales to the amplitude
// bound and subtracts the surface-weighted mean so the perturbation
// integrates to zero over the interface.
FEField initialize_concentration(std::shared_ptr<const ConstrainedFESpace> space,
                                 const MeshQuadrature& quad,
                                 const ConcentrationSpec& spec);

// 2 pi Int_Gamma C r dGamma for a concentration field on the band space.
double surface_mass(const FEField& c, const ActiveMesh& mesh,
                    const MeshQuadrature& quad);

}  // namespace cortexflow
