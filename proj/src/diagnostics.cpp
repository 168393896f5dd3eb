#include "cortexflow/diagnostics.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cortexflow/quadrature.hpp"

namespace cortexflow {

StreamFunctionReference::StreamFunctionReference(double sigma_)
    : sigma(sigma_),
      B(1.5 * (1.0 + 2.0 * sigma_ / 3.0) / (1.0 + sigma_)),
      C(0.5),
      D(0.25 / (1.0 + sigma_)),
      E(2.5 * sigma_ / (1.0 + sigma_)),
      G(-0.25 * sigma_ / (1.0 + sigma_)) {}

double StreamFunctionReference::psi_surface(double rho, double theta) const {
  const double s = std::sin(theta);
  return s * s * (-0.5 * B * rho + C * rho * rho + D / rho);
}

double StreamFunctionReference::psi_bulk(double rho, double theta) const {
  const double s = std::sin(theta);
  return s * s * (0.1 * E * std::pow(rho, 4) + G * rho * rho);
}

void StreamFunctionReference::bulk_velocity_polar(double rho, double theta,
                                                  double& u_rho,
                                                  double& u_theta) const {
  // u_rho = (1/(rho^2 sin)) dpsi/dtheta, u_theta = -(1/(rho sin)) dpsi/drho;
  // the sin factors cancel analytically, so the poles are regular
  u_rho = 2.0 * std::cos(theta) * (0.1 * E * rho * rho + G);
  u_theta = -std::sin(theta) * (0.4 * E * rho * rho + 2.0 * G);
}

Vec2 StreamFunctionReference::bulk_velocity_rz(Point x) const {
  const double rho = x.norm();
  const double theta = std::atan2(x.r, x.z);
  double ur, ut;
  bulk_velocity_polar(rho, theta, ur, ut);
  const double s = std::sin(theta), c = std::cos(theta);
  return {ur * s + ut * c, ur * c - ut * s};
}

Vec2 StreamFunctionReference::surface_velocity_rz(double theta) const {
  // dpsi_surface/drho at rho = 1 over sin(theta)
  const double ut = -std::sin(theta) * (-0.5 * B + 2.0 * C - D);
  const double s = std::sin(theta), c = std::cos(theta);
  return {ut * c, -ut * s};  // u_rho vanishes on the material sphere
}

double StreamFunctionReference::bulk_pressure(Point x,
                                              double two_r_over_leta) const {
  // grad p = mu lap(u) with mu = (2R/L_eta)/2 gives p = 2 mu E z for the
  // rho^4 stream term
  return two_r_over_leta * E * x.z;
}

namespace {
std::atomic<long> g_hill_clamps{0};
}

double hill_activity(double c) {
  if (c < 0.0) {
    g_hill_clamps.fetch_add(1, std::memory_order_relaxed);
    c = 0.0;
  }
  return 2.0 * c * c / (1.0 + c * c);
}

long hill_clamp_count() { return g_hill_clamps.load(); }
void reset_hill_clamp_count() { g_hill_clamps.store(0); }

double critical_peclet(int l, double tau_koff, double L_eta, double R) {
  if (l < 1) throw std::invalid_argument("critical_peclet: l >= 1 required");
  const double ll = static_cast<double>(l) * (l + 1);
  const double kinetics = 1.0 + tau_koff / ll;
  const double bracket =
      ll + ((l - 1.0) * (l + 2.0) + (1.0 + 2.0 * l) * R / L_eta);
  return kinetics * bracket;  // c_eq df/dC = 1 at the homogeneous state
}

double legendre_p(int l, double x) {
  if (l == 0) return 1.0;
  double p0 = 1.0, p1 = x;
  for (int k = 2; k <= l; ++k) {
    const double pk = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
    p0 = p1;
    p1 = pk;
  }
  return p1;
}

double pearson_mode(const std::vector<double>& c_values,
                    const std::vector<double>& theta_values,
                    const std::vector<double>& weights, int l) {
  const size_t n = c_values.size();
  if (n == 0) throw std::invalid_argument("pearson_mode: empty sample");
  if (theta_values.size() != n || weights.size() != n)
    throw std::invalid_argument("pearson_mode: length mismatch");
  double wsum = 0.0, cmean = 0.0;
  for (size_t k = 0; k < n; ++k) {
    wsum += weights[k];
    cmean += weights[k] * c_values[k];
  }
  cmean /= wsum;
  double num = 0.0, var_c = 0.0, var_y = 0.0;
  for (size_t k = 0; k < n; ++k) {
    const double dc = c_values[k] - cmean;
    const double y = legendre_p(l, std::cos(theta_values[k]));
    num += weights[k] * dc * y;
    var_c += weights[k] * dc * dc;
    var_y += weights[k] * y * y;
  }
  if (var_c / wsum < 1e-14 || var_y <= 0.0) return 0.0;
  return num / std::sqrt(var_c * var_y);
}

std::vector<double> experimental_order(const std::vector<double>& values,
                                       const std::vector<double>& h_values) {
  if (values.size() != h_values.size())
    throw std::invalid_argument("experimental_order: length mismatch");
  if (values.size() < 3)
    throw std::invalid_argument("experimental_order: need at least 3 entries");
  for (size_t i = 1; i < h_values.size(); ++i)
    if (!(h_values[i] < h_values[i - 1]))
      throw std::invalid_argument("experimental_order: h must decrease");
  std::vector<double> eoc;
  for (size_t i = 1; i + 1 < values.size(); ++i) {
    const double d0 = std::abs(values[i - 1] - values[i]);
    const double d1 = std::abs(values[i] - values[i + 1]);
    if (d0 < 1e-14 || d1 < 1e-14) {
      eoc.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    eoc.push_back((std::log(d0) - std::log(d1)) /
                  (std::log(h_values[i - 1]) - std::log(h_values[i])));
  }
  return eoc;
}

double activity_profile(double x_alpha, double xi0, double delta_xi,
                        double omega) {
  if (omega <= 0.0) throw std::invalid_argument("activity_profile: omega > 0");
  const double s = x_alpha / omega;
  return xi0 + (delta_xi - xi0) * std::exp(-0.5 * s * s);
}

namespace {

// Zero crossings of phi along an axis-aligned line, by dense sampling plus
// bisection of the interpolant.
std::vector<double> line_roots(const LevelSetField& phi, bool along_r,
                               double fixed, double lo, double hi, int samples) {
  auto f = [&](double t) {
    return along_r ? phi.eval({t, fixed}) : phi.eval({fixed, t});
  };
  std::vector<double> roots;
  double prev = f(lo);
  for (int i = 1; i <= samples; ++i) {
    const double t = lo + (hi - lo) * i / samples;
    const double cur = f(t);
    if ((prev <= 0.0) != (cur <= 0.0)) {
      double a = lo + (hi - lo) * (i - 1) / samples, b = t;
      double fa = prev;
      for (int it = 0; it < 80; ++it) {
        const double m = 0.5 * (a + b);
        const double fm = f(m);
        if ((fa <= 0.0) == (fm <= 0.0)) {
          a = m;
          fa = fm;
        } else {
          b = m;
        }
      }
      roots.push_back(0.5 * (a + b));
    }
    prev = cur;
  }
  return roots;
}

}  // namespace

FurrowMetrics furrow_metrics(const LevelSetField& phi) {
  const BackgroundGrid& g = phi.grid();
  const auto equator =
      line_roots(phi, true, 0.0, g.r_min(), g.r_max(), 8 * g.cells_r());
  const auto axis =
      line_roots(phi, false, g.r_min(), g.z_min(), g.z_max(), 8 * g.cells_z());
  if (equator.empty())
    throw std::runtime_error("furrow_metrics: no equatorial crossing");
  if (axis.size() < 2)
    throw std::runtime_error("furrow_metrics: missing axis crossings");
  FurrowMetrics m;
  m.ring_radius = equator.back();
  m.pole_distance = axis.back() - axis.front();
  return m;
}

double travel_speed(const FEField& bulk_velocity, const LevelSetField& phi,
                    int order) {
  const ActiveMesh mesh = classify_cells(phi, 0.0, ClassifyMode::Bulk);
  const MeshQuadrature quad = build_mesh_quadrature(mesh, phi, order, false);
  double volume = 0.0, flux = 0.0;
  for (int k = 0; k < mesh.num_active(); ++k) {
    for (const auto& qp : quad.bulk[k].points) {
      volume += qp.w * qp.x.r;
      flux += qp.w * qp.x.r * bulk_velocity.vector(qp.x).z;
    }
  }
  if (volume <= 0.0) return 0.0;
  return flux / volume;
}

}  // namespace cortexflow
