#include "cortexflow/stepper.hpp"

#include <cmath>
#include <sstream>

#include "cortexflow/diagnostics.hpp"

namespace cortexflow {

namespace {

constexpr int kMaxSettleIterations = 60;
constexpr double kSettleTol = 1e-9;

double rel_change(const Eigen::VectorXd& now, const Eigen::VectorXd& before) {
  if (now.size() != before.size()) return 1.0;
  const double scale = std::max(now.lpNorm<Eigen::Infinity>(), 1e-14);
  return (now - before).lpNorm<Eigen::Infinity>() / scale;
}

// Nodal interpolation of a field from its (old) space onto a new space;
// zero where the old band does not reach.
Eigen::VectorXd interpolate_vector_field(const ConstrainedFESpace& to,
                                          const FEField& from) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(to.num_dofs());
  if (!from.space) return out;
  for (int rank = 0; rank < to.num_scalar_nodes(); ++rank) {
    const Point x = to.scalar_rank_point(rank);
    int cell;
    if (!from.space->locate(x, cell)) continue;
    const Vec2 v = from.space->eval_vector_on_cell(from.coeffs, cell, x);
    out[2 * rank] = v.r;
    out[2 * rank + 1] = v.z;
  }
  return out;
}

}  // namespace

double narrow_band_width(double u_prev_max, double dt, double safety, double h) {
  return std::max(safety * dt * u_prev_max, h);
}

Simulation::Simulation(std::shared_ptr<const BackgroundGrid> grid,
                       StepperConfig config,
                       const std::function<double(Point)>& initial_levelset,
                       const ConcentrationSpec& concentration_spec)
    : config_(config), grid_(std::move(grid)) {
  LevelSetField phi = LevelSetField::interpolate(grid_, initial_levelset);
  // settle the discrete signed distance before the run starts, so the
  // per-step reinitializations no longer move the interface
  for (int it = 0; it < kMaxSettleIterations; ++it) {
    LevelSetField next = reinitialize_signed_distance(phi);
    double change = 0.0;
    for (int n = 0; n < grid_->num_q2_nodes(); ++n)
      change = std::max(change, std::abs(next.value(n) - phi.value(n)));
    phi = std::move(next);
    if (change < kSettleTol) break;
  }
  state_ = std::make_unique<SimulationState>(std::move(phi));
  rebuild_geometry(narrow_band_width(0.0, config_.dt, config_.band_safety,
                                     grid_->h()));
  auto c_space = std::make_shared<ConstrainedFESpace>(
      build_space(state_->band_mesh, Family::Q1Scalar));
  state_->C = initialize_concentration(c_space, *state_->band_quad,
                                       concentration_spec);
}

void Simulation::rebuild_geometry(double band_width) {
  SimulationState& s = *state_;
  s.band_width = band_width;
  s.bulk_mesh = std::make_shared<ActiveMesh>(
      classify_cells(s.phi, band_width, ClassifyMode::Bulk));
  s.band_mesh = std::make_shared<ActiveMesh>(
      classify_cells(s.phi, band_width, ClassifyMode::Surface));
  s.bulk_quad = std::make_shared<MeshQuadrature>(
      build_mesh_quadrature(*s.bulk_mesh, s.phi, config_.quad_order, false));
  s.band_quad = std::make_shared<MeshQuadrature>(
      build_mesh_quadrature(*s.band_mesh, s.phi, config_.quad_order, true));
}

int Simulation::fixed_point_flow_solve() {
  SimulationState& s = *state_;

  SurfaceFlowProblem sp;
  sp.mesh = s.band_mesh;
  sp.phi = &s.phi;
  sp.quad = s.band_quad.get();
  sp.peclet = config_.peclet;
  sp.two_r_over_leta = config_.two_r_over_leta();
  sp.beta = config_.beta;
  sp.rho = config_.rho;
  if (config_.activity_enabled) {
    const double base = config_.activity_base;
    const double peak = config_.activity_peak;
    const double width = config_.activity_width;
    sp.activity_scale = [=](double z) {
      return activity_profile(z, base, peak, width) / base;
    };
  }
  const SurfaceFlowOperator surface_op(sp);

  BulkFlowProblem bp;
  bp.mesh = s.bulk_mesh;
  bp.phi = &s.phi;
  bp.quad = s.bulk_quad.get();
  bp.two_r_over_leta = config_.two_r_over_leta();
  bp.alpha = config_.alpha;
  bp.eta_min = config_.eta_min;
  const BulkStokesOperator bulk_op(bp);

  const FEField c_field = s.C;
  auto concentration = [&c_field](Point x) { return c_field.scalar(x); };

  // iterate-0 fields are the previous step's (zeros at the first step)
  FEField u_iter = s.u, p_iter = s.p;
  const bool have_bulk0 = s.has_flow && u_iter.space != nullptr;
  Eigen::VectorXd U_coeffs =
      interpolate_vector_field(*surface_op.space(), s.U);
  Eigen::VectorXd u_prev_coeffs, p_prev_coeffs;
  // warm start on an unchanged geometry: the previous fields seed the
  // convergence test, so a converged state terminates after one iteration
  const bool warm = s.has_flow && s.u.space &&
                    s.u.coeffs.size() == bulk_op.velocity_space()->num_dofs() &&
                    s.p.coeffs.size() == bulk_op.pressure_space()->num_dofs();
  if (warm) {
    u_prev_coeffs = s.u.coeffs;
    p_prev_coeffs = s.p.coeffs;
  }

  std::vector<double> hist_u, hist_bulk, hist_p;
  const double mu2 = config_.two_r_over_leta();
  int iterations = 0;
  for (int k = 1; k <= config_.max_outer; ++k) {
    iterations = k;
    auto traction = [&](Point x, Vec2 n) -> Vec2 {
      if (!have_bulk0 && k == 1) return Vec2{0.0, 0.0};
      if (!u_iter.evaluable(x)) return Vec2{0.0, 0.0};
      const Eigen::Matrix2d J = u_iter.vector_gradient(x);
      const Eigen::Matrix2d E = 0.5 * (J + J.transpose());
      const Eigen::Vector2d nn(n.r, n.z);
      const Eigen::Vector2d t = mu2 * (E * nn);
      const double pr = p_iter.scalar(x);
      return {t[0] - pr * n.r, t[1] - pr * n.z};
    };
    const FEField U_new = surface_op.solve(concentration, traction);

    // under-relaxation on the surface velocity
    Eigen::VectorXd U_next;
    if (k == 1 && U_coeffs.lpNorm<Eigen::Infinity>() == 0.0)
      U_next = U_new.coeffs;
    else
      U_next = config_.relaxation * U_new.coeffs +
               (1.0 - config_.relaxation) * U_coeffs;
    const double du = rel_change(U_next, U_coeffs);
    U_coeffs = std::move(U_next);
    const FEField U_field{surface_op.space(), U_coeffs};

    const BulkSolution bulk = bulk_op.solve(
        [&U_field](Point x) { return U_field.vector(x); });
    const double dub = u_prev_coeffs.size() > 0
                           ? rel_change(bulk.u.coeffs, u_prev_coeffs)
                           : 1.0;
    const double dp = p_prev_coeffs.size() > 0
                          ? rel_change(bulk.p.coeffs, p_prev_coeffs)
                          : 1.0;
    u_prev_coeffs = bulk.u.coeffs;
    p_prev_coeffs = bulk.p.coeffs;
    u_iter = bulk.u;
    p_iter = bulk.p;

    hist_u.push_back(du);
    hist_bulk.push_back(dub);
    hist_p.push_back(dp);
    const int min_iters = warm ? 1 : 2;
    if (k >= min_iters && du <= config_.tol_fixed_point &&
        dub <= config_.tol_fixed_point && dp <= config_.tol_fixed_point)
      break;
    if (k == config_.max_outer) {
      std::ostringstream msg;
      msg << "fixed point did not converge in " << config_.max_outer
          << " iterations (last changes U=" << du << ", u=" << dub
          << ", p=" << dp << "); reduce dt or the relaxation factor";
      throw FixedPointError(msg.str(), hist_u, hist_bulk, hist_p);
    }
  }

  s.U = FEField{surface_op.space(), U_coeffs};
  s.u = u_iter;
  s.p = p_iter;
  s.has_flow = true;
  return iterations;
}

MonitorRow Simulation::compute_monitors(int fp_iterations) const {
  const SimulationState& s = *state_;
  MonitorRow row;
  row.step = s.step;
  row.time = s.time;
  row.fp_iterations = fp_iterations;

  double volume = 0.0, zbar = 0.0;
  for (int k = 0; k < s.bulk_mesh->num_active(); ++k) {
    for (const auto& qp : s.bulk_quad->bulk[k].points) {
      volume += qp.w * qp.x.r;
      zbar += qp.w * qp.x.r * qp.x.z;
      if (s.has_flow)
        row.max_u_bulk = std::max(
            row.max_u_bulk, s.u.space->eval_vector_on_cell(
                                 s.u.coeffs, s.bulk_mesh->active_cells[k], qp.x)
                                 .norm());
    }
  }
  zbar = (volume > 0) ? zbar / volume : 0.0;
  row.volume = 2.0 * M_PI * volume;

  std::vector<double> c_vals, thetas, weights;
  double mass = 0.0;
  for (size_t k = 0; k < s.band_mesh->cut_cells.size(); ++k) {
    const int cell = s.band_mesh->cut_cells[k];
    for (const auto& qp : s.band_quad->surface[k].points) {
      const double c = s.C.space->eval_scalar_on_cell(s.C.coeffs, cell, qp.x);
      mass += qp.w * qp.x.r * c;
      row.max_c = std::max(row.max_c, c);
      if (s.has_flow)
        row.max_u_surface = std::max(
            row.max_u_surface,
            s.U.space->eval_vector_on_cell(s.U.coeffs, cell, qp.x).norm());
      c_vals.push_back(c);
      thetas.push_back(std::atan2(qp.x.r, qp.x.z - zbar));
      weights.push_back(qp.w * qp.x.r);
    }
  }
  row.surface_mass = 2.0 * M_PI * mass;
  if (!c_vals.empty())
    for (int l = 1; l <= 6; ++l)
      row.pearson[l - 1] = pearson_mode(c_vals, thetas, weights, l);

  if (s.has_flow) {
    double flux = 0.0;
    for (int k = 0; k < s.bulk_mesh->num_active(); ++k)
      for (const auto& qp : s.bulk_quad->bulk[k].points)
        flux += qp.w * qp.x.r *
                s.u.space
                    ->eval_vector_on_cell(s.u.coeffs,
                                          s.bulk_mesh->active_cells[k], qp.x)
                    .z;
    row.mean_travel_speed = (volume > 0) ? flux / volume : 0.0;
  }

  if (config_.track_furrow) {
    try {
      const FurrowMetrics fm = furrow_metrics(s.phi);
      row.furrow_radius = fm.ring_radius;
      row.pole_distance = fm.pole_distance;
      row.furrow_defined = true;
    } catch (const std::runtime_error&) {
      row.furrow_defined = false;
    }
  }
  return row;
}

MonitorRow Simulation::advance_one_step() {
  SimulationState& s = *state_;
  int iterations = 0;
  try {
    iterations = fixed_point_flow_solve();
  } catch (const std::exception& e) {
    throw std::runtime_error("step " + std::to_string(s.step) + ": " + e.what());
  }
  monitors_ = compute_monitors(iterations);

  // level-set update with the extended normal speed
  const FEField U_field = s.U;
  const double ext_band = 2.5 * grid_->h();
  const auto speed = extend_normal_velocity(
      s.phi, [&U_field](Point y) { return U_field.vector(y); }, ext_band);
  double max_speed = 0.0;
  for (double v : speed) max_speed = std::max(max_speed, std::abs(v));
  if (config_.dt * max_speed > 0.5 * grid_->h())
    throw std::runtime_error(
        "step " + std::to_string(s.step) + ": CFL guard tripped (dt*|U.n| = " +
        std::to_string(config_.dt * max_speed) + " > h/2); reduce dt");

  const LevelSetField phi_old = s.phi;
  const double delta_prev = s.band_width;
  LevelSetField phi_star = advance_levelset(s.phi, speed, config_.dt);
  s.phi = reinitialize_signed_distance(phi_star);

  double u_max = 0.0;
  for (int d = 0; d < s.U.coeffs.size(); ++d)
    u_max = std::max(u_max, std::abs(s.U.coeffs[d]));
  const double delta = narrow_band_width(u_max, config_.dt,
                                         config_.band_safety, grid_->h());
  rebuild_geometry(delta);

  // band containment: the new interface must sit inside the previous band
  for (size_t k = 0; k < s.band_mesh->cut_cells.size(); ++k)
    for (const auto& qp : s.band_quad->surface[k].points)
      if (std::abs(phi_old.eval(qp.x)) >= delta_prev)
        throw std::runtime_error(
            "step " + std::to_string(s.step) +
            ": new interface escaped the previous narrow band");

  // transport on the new interface with the old velocity and species
  TransportProblem tp;
  tp.mesh = s.band_mesh;
  tp.phi = &s.phi;
  tp.quad = s.band_quad.get();
  tp.exchange_rate = config_.exchange_rate;
  tp.dt = config_.dt;
  tp.gamma = config_.gamma;
  tp.supg = config_.supg;
  const FEField U_old = s.U;
  const FEField C_old = s.C;
  try {
    s.C = transport_step(
        tp, [&U_old](Point x) { return U_old.vector(x); },
        [&U_old](Point x) { return U_old.vector_gradient(x); },
        [&C_old](Point x) { return C_old.scalar(x); });
  } catch (const std::exception& e) {
    throw std::runtime_error("step " + std::to_string(s.step) +
                             " transport: " + std::string(e.what()) +
                             "; widen the narrow band (band_safety)");
  }

  ++s.step;
  s.time = s.step * config_.dt;
  return monitors_;
}

}  // namespace cortexflow
