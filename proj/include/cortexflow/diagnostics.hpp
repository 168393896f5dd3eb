#pragma once

#include <vector>

#include "cortexflow/fe_space.hpp"
#include "cortexflow/levelset.hpp"

namespace cortexflow {

// Closed-form fluid-sphere reference: interior Stokes flow driven by a
// surface flow, written through stream functions in polar coordinates.
// sigma is the surface-to-bulk viscosity ratio.
struct StreamFunctionReference {
  double sigma;
  double B, C, D, E, G;

  explicit StreamFunctionReference(double sigma_);

  double psi_surface(double rho, double theta) const;
  double psi_bulk(double rho, double theta) const;
  // spherical velocity components of the interior field
  void bulk_velocity_polar(double rho, double theta, double& u_rho,
                           double& u_theta) const;
  // meridian-plane components at (r, z); smooth through the poles and origin
  Vec2 bulk_velocity_rz(Point x) const;
  // surface-phase velocity at the sphere rho = 1, polar angle theta from +z
  Vec2 surface_velocity_rz(double theta) const;
  // interior pressure for a given bulk viscosity coefficient (2R/L_eta)
  double bulk_pressure(Point x, double two_r_over_leta) const;
};

// Saturating tension regulation f(C) = 2 C^2 / (1 + C^2) with the
// equilibrium concentration scaled to 1. Negative concentrations are
// clamped to zero; a thread-local counter records how often.
double hill_activity(double c);
long hill_clamp_count();
void reset_hill_clamp_count();

// Critical Peclet number of radial mode l from the linear stability of the
// homogeneous state, evaluated as printed with c_eq df/dC = 1.
double critical_peclet(int l, double tau_koff, double L_eta, double R = 1.0);

// Pearson correlation between sampled concentrations and the axisymmetric
// harmonic P_l(cos theta); returns 0 when the sample variance vanishes.
double pearson_mode(const std::vector<double>& c_values,
                    const std::vector<double>& theta_values,
                    const std::vector<double>& weights, int l);

// Experimental order of convergence per refinement triplet; entries are NaN
// where consecutive differences fall below 1e-14.
std::vector<double> experimental_order(const std::vector<double>& values,
                                       const std::vector<double>& h_values);

// Gaussian overactivity band around the equator, x_alpha the coordinate
// along the symmetry axis.
double activity_profile(double x_alpha, double xi0, double delta_xi,
                        double omega);

struct FurrowMetrics {
  double ring_radius;    // r of the zero set on the equator z = 0
  double pole_distance;  // distance between the two axis crossings
};
// Throws when the required crossings are missing (shape no longer
// cytokinesis-like).
FurrowMetrics furrow_metrics(const LevelSetField& phi);

// Volume-averaged axial velocity 2 pi Int u_z r dOmega / volume.
double travel_speed(const FEField& bulk_velocity, const LevelSetField& phi,
                    int order = 5);

// Legendre polynomial P_l.
double legendre_p(int l, double x);

}  // namespace cortexflow
