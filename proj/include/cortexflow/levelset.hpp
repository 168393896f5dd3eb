#pragma once

#include <array>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "cortexflow/grid.hpp"

namespace cortexflow {

// Geometry tolerances. Geometry errors must sit far below discretization
// error, hence the tight defaults.
inline constexpr double kTolReinit = 1e-10;
inline constexpr double kProjectionTol = 1e-12;
inline constexpr int kProjectionMaxIter = 50;
inline constexpr double kGeomEps = 1e-12;

// Nodal values of a biquadratic scalar field on the background grid.
// The zero isoline of the interpolant is the discrete interface; whatever
// shape the caller had in mind, the interpolant is the geometric truth.
class LevelSetField {
 public:
  explicit LevelSetField(std::shared_ptr<const BackgroundGrid> grid);

  static LevelSetField interpolate(std::shared_ptr<const BackgroundGrid> grid,
                                   const std::function<double(Point)>& fn);
  // Nodal signed distance to the sphere |x - c| = radius.
  static LevelSetField sphere(std::shared_ptr<const BackgroundGrid> grid,
                              Point center, double radius);

  const BackgroundGrid& grid() const { return *grid_; }
  std::shared_ptr<const BackgroundGrid> grid_ptr() const { return grid_; }

  double value(int node) const { return values_[node]; }
  double& value(int node) { return values_[node]; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  // Interpolant evaluation; x is clamped into the bounding box.
  double eval(Point x) const;
  Vec2 grad(Point x) const;

  void cell_values(int cell, std::array<double, 9>& out) const;

 private:
  std::shared_ptr<const BackgroundGrid> grid_;
  std::vector<double> values_;
};

// A biquadratic polynomial on a square box, given by its nine tensor-node
// values. Restriction to any sub-box or axis line is again polynomial, which
// the cut-cell machinery relies on.
struct BiquadCell {
  Point origin;
  double size = 0.0;
  std::array<double, 9> v{};

  static BiquadCell from_field(const LevelSetField& phi, int cell);

  double eval_ref(double xi, double eta) const;
  Vec2 grad_ref(double xi, double eta) const;  // derivatives in (xi, eta)
  Point to_physical(double xi, double eta) const {
    return {origin.r + xi * size, origin.z + eta * size};
  }

  // Quadrant child (0=SW, 1=SE, 2=NW, 3=NE); exact restriction.
  BiquadCell child(int which) const;

  // Tensor Bernstein coefficients of the value; they bound the range.
  std::array<double, 9> bernstein() const;
  // Bernstein coefficients of d/dxi (2x3, xi-index fastest) and d/deta (3x2).
  std::array<double, 6> bernstein_dxi() const;
  std::array<double, 6> bernstein_deta() const;

  // phi restricted to {xi = const} as a*eta^2 + b*eta + c, and vice versa.
  void line_quadratic_eta(double xi, double& a, double& b, double& c) const;
  void line_quadratic_xi(double eta, double& a, double& b, double& c) const;
};

// Range queries that first try the Bernstein bound and fall back to a fixed
// 5x5 sample lattice; a biquadratic can dip below zero between nodes, so a
// uniform nodal sign alone never decides a cut.
bool cell_attains_leq(const BiquadCell& cell, double bound);
bool cell_attains_geq(const BiquadCell& cell, double bound);

// Real roots of a*t^2 + b*t + c inside [0,1] (endpoints accepted within
// kGeomEps and clamped), sorted ascending, duplicates merged.
int quadratic_roots_unit(double a, double b, double c, double roots[2]);

enum class CellTag : unsigned char { Exterior = 0, Interior, Cut, BandOnly };
enum class ClassifyMode { Bulk, Surface };

// Subset of grid cells carrying the discrete problem. Bulk mode keeps cells
// meeting {phi < band}; surface mode keeps cells meeting {|phi| < band}.
// Tags are relative to the zero set: Interior cells lie in {phi <= 0}, Cut
// cells cross the interface, BandOnly cells are active only through a
// positive band width.
struct ActiveMesh {
  std::shared_ptr<const BackgroundGrid> grid;
  ClassifyMode mode = ClassifyMode::Bulk;
  double band_half_width = 0.0;
  std::vector<CellTag> tag;          // one per grid cell
  std::vector<int> active_cells;     // ascending cell ids
  std::vector<int> cut_cells;        // cells crossing {phi = 0}
  std::vector<int> active_rank;      // per cell: index in active_cells or -1

  bool is_active(int cell) const { return tag[cell] != CellTag::Exterior; }
  int num_active() const { return static_cast<int>(active_cells.size()); }
  bool empty() const { return active_cells.empty(); }
};

ActiveMesh classify_cells(const LevelSetField& phi, double band_half_width,
                          ClassifyMode mode);

struct ProjectionResult {
  Point y;               // last iterate (the projection when converged)
  Vec2 normal;           // grad phi / |grad phi| at y
  double phi_residual = 0.0;
  double alignment = 0.0;  // |(x - y) . t| / max(|x - y|, h)
  int iterations = 0;
  bool converged = false;
};

class ProjectionError : public std::runtime_error {
 public:
  ProjectionError(const std::string& what, Point last, double residual)
      : std::runtime_error(what), last_iterate(last), residual(residual) {}
  Point last_iterate;
  double residual;
};

// Newton iteration y <- y - phi(y) grad/|grad|^2 onto the zero set, followed
// by tangential sliding until (x - y) is parallel to grad phi(y). On
// non-convergence retries once from the nearest grid node with smaller |phi|.
ProjectionResult closest_point_projection(Point x, const LevelSetField& phi,
                                          double tol = kProjectionTol,
                                          int max_iter = kProjectionMaxIter);

// Same, but throws ProjectionError on failure.
Point project_to_interface(Point x, const LevelSetField& phi,
                           double tol = kProjectionTol,
                           int max_iter = kProjectionMaxIter);

// Samples the discrete interface once and answers global closest-point
// queries: nearest sample (bucketed ring search) as seed, then the local
// iteration to machine precision. Robust near furrows where two interface
// sheets are close.
class InterfaceProjector {
 public:
  explicit InterfaceProjector(const LevelSetField& phi);

  bool empty() const { return samples_.empty(); }
  const std::vector<Point>& samples() const { return samples_; }
  int nearest_sample(Point x) const;  // index, ties to lowest index
  // Brute-force variant, reference for tests.
  int nearest_sample_reference(Point x) const;
  ProjectionResult project(Point x, double tol = kProjectionTol,
                           int max_iter = kProjectionMaxIter) const;
  ProjectionResult project_seeded(Point x, int sample_idx,
                                  double tol = kProjectionTol,
                                  int max_iter = kProjectionMaxIter) const;

 private:
  const LevelSetField* phi_;
  std::vector<Point> samples_;
  std::vector<Point> boundary_points_;     // curve endpoints on the box edges
  std::vector<std::vector<int>> buckets_;  // per grid cell
};

// Replaces every node value by sign(phi_old) times the distance to the
// discrete zero set. Throws if the zero set is empty or a projection fails.
LevelSetField reinitialize_signed_distance(const LevelSetField& phi);
// Serial brute-force-seeded reference; bitwise-identical result.
LevelSetField reinitialize_signed_distance_reference(const LevelSetField& phi);

// Nodal explicit update phi^n = phi^{n-1} - dt * speed * |grad phi|, with
// |grad phi| taken as exactly 1 after reinitialization.
LevelSetField advance_levelset(const LevelSetField& phi_prev,
                               const std::vector<double>& normal_speed,
                               double dt);

// Value U(y) . n(y) at the closest-point projection y of each node within
// the band |phi| <= band_half_width; zero outside.
std::vector<double> extend_normal_velocity(
    const LevelSetField& phi, const std::function<Vec2(Point)>& surface_velocity,
    double band_half_width);

}  // namespace cortexflow
