#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "cortexflow/bulk_stokes.hpp"
#include "cortexflow/surface_flow.hpp"
#include "cortexflow/surface_transport.hpp"

namespace cortexflow {

struct StepperConfig {
  // physics
  double peclet = 30.0;
  double l_eta = 1e4;           // hydrodynamic length
  double radius = 1.0;          // initial sphere radius (sets 2R/L_eta)
  double exchange_rate = 10.0;  // tau_D k_off
  // activity modulation (cytokinesis); identity when disabled
  bool activity_enabled = false;
  double activity_base = 1.0;
  double activity_peak = 10.0;
  double activity_width = 0.1;
  // numerics
  double dt = 0.004;
  double alpha = 20.0;
  double beta = 10.0;
  double gamma = 10.0;
  double rho = 1e-3;
  double eta_min = 0.25;
  int quad_order = 5;
  double tol_fixed_point = 1e-6;
  int max_outer = 50;
  double relaxation = 0.7;
  bool aitken = false;
  bool supg = false;
  double band_safety = 2.0;
  bool track_furrow = false;

  double two_r_over_leta() const { return 2.0 * radius / l_eta; }
};

struct MonitorRow {
  int step = 0;
  double time = 0.0;
  double volume = 0.0;
  double surface_mass = 0.0;
  double max_c = 0.0;
  double max_u_surface = 0.0;
  double max_u_bulk = 0.0;
  double mean_travel_speed = 0.0;
  int fp_iterations = 0;
  double pearson[6] = {0, 0, 0, 0, 0, 0};
  double furrow_radius = std::numeric_limits<double>::quiet_NaN();
  double pole_distance = std::numeric_limits<double>::quiet_NaN();
  bool furrow_defined = false;
};

// Time-step bundle: the level set, the meshes and quadratures derived from
// it, and the fields living on them.
struct SimulationState {
  int step = 0;
  double time = 0.0;
  LevelSetField phi;
  double band_width = 0.0;
  std::shared_ptr<ActiveMesh> bulk_mesh;
  std::shared_ptr<ActiveMesh> band_mesh;
  std::shared_ptr<MeshQuadrature> bulk_quad;
  std::shared_ptr<MeshQuadrature> band_quad;
  FEField C;        // species on the band space
  FEField U;        // surface velocity
  FEField u, p;     // bulk velocity and pressure
  bool has_flow = false;

  explicit SimulationState(LevelSetField phi_) : phi(std::move(phi_)) {}
};

// delta^n = max(safety * dt * |U|_inf, h): the next interface must stay
// inside the band even for tiny velocities.
double narrow_band_width(double u_prev_max, double dt, double safety, double h);

class FixedPointError : public std::runtime_error {
 public:
  FixedPointError(const std::string& what, std::vector<double> hist_u,
                  std::vector<double> hist_bulk, std::vector<double> hist_p)
      : std::runtime_error(what),
        history_u(std::move(hist_u)),
        history_bulk(std::move(hist_bulk)),
        history_p(std::move(hist_p)) {}
  std::vector<double> history_u, history_bulk, history_p;
};

class Simulation {
 public:
  Simulation(std::shared_ptr<const BackgroundGrid> grid, StepperConfig config,
             const std::function<double(Point)>& initial_levelset,
             const ConcentrationSpec& concentration_spec);

  const SimulationState& state() const { return *state_; }
  const StepperConfig& config() const { return config_; }
  const MonitorRow& last_monitors() const { return monitors_; }

  // Runs Algorithm 1 for one step: fixed-point flow solve on the current
  // geometry, level-set update and reinitialization, geometry rebuild,
  // transport step on the new interface. Returns the monitors recorded at
  // the step's geometry.
  MonitorRow advance_one_step();

  // Flow solve only (no motion); updates state fields and returns the
  // iteration count. Used by advance_one_step and by equilibrium tests.
  int fixed_point_flow_solve();

 private:
  StepperConfig config_;
  std::shared_ptr<const BackgroundGrid> grid_;
  std::unique_ptr<SimulationState> state_;
  MonitorRow monitors_;

  void rebuild_geometry(double band_width);
  MonitorRow compute_monitors(int fp_iterations) const;
};

}  // namespace cortexflow
