#include "cortexflow/levelset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "cortexflow/parallel.hpp"

namespace cortexflow {

namespace {

// 1D quadratic Lagrange shapes on [0,1] with nodes at 0, 1/2, 1.
inline void shape1d(double t, double n[3]) {
  n[0] = (1.0 - t) * (1.0 - 2.0 * t);
  n[1] = 4.0 * t * (1.0 - t);
  n[2] = t * (2.0 * t - 1.0);
}

inline void dshape1d(double t, double d[3]) {
  d[0] = 4.0 * t - 3.0;
  d[1] = 4.0 - 8.0 * t;
  d[2] = 4.0 * t - 1.0;
}

// Quadratic Lagrange values (at 0, 1/2, 1) to Bernstein coefficients.
inline void lagrange_to_bernstein(double f0, double fm, double f1, double b[3]) {
  b[0] = f0;
  b[1] = 0.5 * (4.0 * fm - f0 - f1);
  b[2] = f1;
}

constexpr double kSignTieEps = 1e-14;  // exact zeros count as "not positive"

}  // namespace

LevelSetField::LevelSetField(std::shared_ptr<const BackgroundGrid> grid)
    : grid_(std::move(grid)), values_(grid_->num_q2_nodes(), 0.0) {}

LevelSetField LevelSetField::interpolate(
    std::shared_ptr<const BackgroundGrid> grid,
    const std::function<double(Point)>& fn) {
  LevelSetField f(grid);
  const int n = f.grid_->num_q2_nodes();
  for (int i = 0; i < n; ++i) f.values_[i] = fn(f.grid_->q2_node_point(i));
  return f;
}

LevelSetField LevelSetField::sphere(std::shared_ptr<const BackgroundGrid> grid,
                                    Point center, double radius) {
  return interpolate(std::move(grid), [=](Point x) {
    return (x - center).norm() - radius;
  });
}

double LevelSetField::eval(Point x) const {
  const int c = grid_->locate_cell(x);
  const Point o = grid_->cell_origin(c);
  const double h = grid_->h();
  const double xi = std::clamp((x.r - o.r) / h, 0.0, 1.0);
  const double eta = std::clamp((x.z - o.z) / h, 0.0, 1.0);
  double nx[3], nz[3];
  shape1d(xi, nx);
  shape1d(eta, nz);
  const auto nodes = grid_->cell_q2_nodes(c);
  double s = 0.0;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) s += values_[nodes[j * 3 + i]] * nx[i] * nz[j];
  return s;
}

Vec2 LevelSetField::grad(Point x) const {
  const int c = grid_->locate_cell(x);
  const Point o = grid_->cell_origin(c);
  const double h = grid_->h();
  const double xi = std::clamp((x.r - o.r) / h, 0.0, 1.0);
  const double eta = std::clamp((x.z - o.z) / h, 0.0, 1.0);
  double nx[3], nz[3], dx[3], dz[3];
  shape1d(xi, nx);
  shape1d(eta, nz);
  dshape1d(xi, dx);
  dshape1d(eta, dz);
  const auto nodes = grid_->cell_q2_nodes(c);
  Vec2 g{0.0, 0.0};
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) {
      const double v = values_[nodes[j * 3 + i]];
      g.r += v * dx[i] * nz[j];
      g.z += v * nx[i] * dz[j];
    }
  return g / h;
}

void LevelSetField::cell_values(int cell, std::array<double, 9>& out) const {
  const auto nodes = grid_->cell_q2_nodes(cell);
  for (int k = 0; k < 9; ++k) out[k] = values_[nodes[k]];
}

BiquadCell BiquadCell::from_field(const LevelSetField& phi, int cell) {
  BiquadCell bc;
  bc.origin = phi.grid().cell_origin(cell);
  bc.size = phi.grid().h();
  phi.cell_values(cell, bc.v);
  return bc;
}

double BiquadCell::eval_ref(double xi, double eta) const {
  double nx[3], nz[3];
  shape1d(xi, nx);
  shape1d(eta, nz);
  double s = 0.0;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) s += v[j * 3 + i] * nx[i] * nz[j];
  return s;
}

Vec2 BiquadCell::grad_ref(double xi, double eta) const {
  double nx[3], nz[3], dx[3], dz[3];
  shape1d(xi, nx);
  shape1d(eta, nz);
  dshape1d(xi, dx);
  dshape1d(eta, dz);
  Vec2 g{0.0, 0.0};
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) {
      g.r += v[j * 3 + i] * dx[i] * nz[j];
      g.z += v[j * 3 + i] * nx[i] * dz[j];
    }
  return g;
}

BiquadCell BiquadCell::child(int which) const {
  const double ox = (which & 1) ? 0.5 : 0.0;
  const double oy = (which & 2) ? 0.5 : 0.0;
  BiquadCell c;
  c.origin = {origin.r + ox * size, origin.z + oy * size};
  c.size = 0.5 * size;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i)
      c.v[j * 3 + i] = eval_ref(ox + 0.25 * i, oy + 0.25 * j);
  return c;
}

std::array<double, 9> BiquadCell::bernstein() const {
  std::array<double, 9> rows{}, out{};
  for (int j = 0; j < 3; ++j)
    lagrange_to_bernstein(v[j * 3], v[j * 3 + 1], v[j * 3 + 2], &rows[j * 3]);
  for (int i = 0; i < 3; ++i) {
    double b[3];
    lagrange_to_bernstein(rows[i], rows[3 + i], rows[6 + i], b);
    out[i] = b[0];
    out[3 + i] = b[1];
    out[6 + i] = b[2];
  }
  return out;
}

std::array<double, 6> BiquadCell::bernstein_dxi() const {
  const auto b = bernstein();
  std::array<double, 6> d{};
  for (int j = 0; j < 3; ++j) {
    d[j * 2] = 2.0 * (b[j * 3 + 1] - b[j * 3]);
    d[j * 2 + 1] = 2.0 * (b[j * 3 + 2] - b[j * 3 + 1]);
  }
  return d;
}

std::array<double, 6> BiquadCell::bernstein_deta() const {
  const auto b = bernstein();
  std::array<double, 6> d{};
  for (int i = 0; i < 3; ++i) {
    d[i * 2] = 2.0 * (b[3 + i] - b[i]);
    d[i * 2 + 1] = 2.0 * (b[6 + i] - b[3 + i]);
  }
  return d;
}

void BiquadCell::line_quadratic_eta(double xi, double& a, double& b,
                                    double& c) const {
  const double f0 = eval_ref(xi, 0.0);
  const double fm = eval_ref(xi, 0.5);
  const double f1 = eval_ref(xi, 1.0);
  a = 2.0 * f0 - 4.0 * fm + 2.0 * f1;
  b = -3.0 * f0 + 4.0 * fm - f1;
  c = f0;
}

void BiquadCell::line_quadratic_xi(double eta, double& a, double& b,
                                   double& c) const {
  const double f0 = eval_ref(0.0, eta);
  const double fm = eval_ref(0.5, eta);
  const double f1 = eval_ref(1.0, eta);
  a = 2.0 * f0 - 4.0 * fm + 2.0 * f1;
  b = -3.0 * f0 + 4.0 * fm - f1;
  c = f0;
}

bool cell_attains_leq(const BiquadCell& cell, double bound) {
  for (double vi : cell.v)
    if (vi <= bound) return true;
  const auto b = cell.bernstein();
  double bmin = b[0];
  for (double bi : b) bmin = std::min(bmin, bi);
  if (bmin > bound) return false;
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 5; ++i)
      if (cell.eval_ref(0.25 * i, 0.25 * j) <= bound) return true;
  return false;
}

int quadratic_roots_unit(double a, double b, double c, double roots[2]) {
  double raw[2];
  int nraw = 0;
  const double scale = std::abs(a) + std::abs(b) + std::abs(c);
  if (scale == 0.0) return 0;  // identically zero: grazing, no isolated roots
  if (std::abs(a) < 1e-14 * scale) {
    if (std::abs(b) > 1e-14 * scale) raw[nraw++] = -c / b;
  } else {
    const double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      const double q0 = -0.5 * (b + (b >= 0.0 ? sq : -sq));
      raw[nraw++] = q0 / a;
      if (std::abs(q0) > 0.0)
        raw[nraw++] = c / q0;
      else
        raw[nraw++] = 0.0;  // double root at 0 handled by dedupe below
    }
  }
  int n = 0;
  for (int i = 0; i < nraw; ++i) {
    if (raw[i] < -kGeomEps || raw[i] > 1.0 + kGeomEps) continue;
    roots[n++] = std::clamp(raw[i], 0.0, 1.0);
  }
  if (n == 2) {
    if (roots[0] > roots[1]) std::swap(roots[0], roots[1]);
    if (roots[1] - roots[0] <= kGeomEps) n = 1;
  }
  return n;
}

bool cell_attains_geq(const BiquadCell& cell, double bound) {
  for (double vi : cell.v)
    if (vi >= bound) return true;
  const auto b = cell.bernstein();
  double bmax = b[0];
  for (double bi : b) bmax = std::max(bmax, bi);
  if (bmax < bound) return false;
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 5; ++i)
      if (cell.eval_ref(0.25 * i, 0.25 * j) >= bound) return true;
  return false;
}

ActiveMesh classify_cells(const LevelSetField& phi, double band_half_width,
                          ClassifyMode mode) {
  if (band_half_width < 0.0)
    throw std::invalid_argument("classify_cells: band_half_width < 0");
  ActiveMesh mesh;
  mesh.grid = phi.grid_ptr();
  mesh.mode = mode;
  mesh.band_half_width = band_half_width;
  const int nc = mesh.grid->num_cells();
  mesh.tag.assign(nc, CellTag::Exterior);

  parallel_for(nc, [&](std::int64_t c) {
    const BiquadCell bc = BiquadCell::from_field(phi, static_cast<int>(c));
    const double tau = band_half_width;
    bool active;
    if (mode == ClassifyMode::Bulk) {
      active = cell_attains_leq(bc, tau);
    } else {
      active = cell_attains_leq(bc, tau) && cell_attains_geq(bc, -tau);
    }
    if (!active) return;
    const bool has_positive = cell_attains_geq(bc, kSignTieEps);
    const bool has_inside = cell_attains_leq(bc, 0.0);
    if (has_inside && has_positive)
      mesh.tag[c] = CellTag::Cut;
    else if (has_inside)
      mesh.tag[c] = CellTag::Interior;
    else
      mesh.tag[c] = CellTag::BandOnly;
  });

  mesh.active_rank.assign(nc, -1);
  for (int c = 0; c < nc; ++c) {
    if (mesh.tag[c] == CellTag::Exterior) continue;
    mesh.active_rank[c] = static_cast<int>(mesh.active_cells.size());
    mesh.active_cells.push_back(c);
    if (mesh.tag[c] == CellTag::Cut) mesh.cut_cells.push_back(c);
  }
  return mesh;
}

namespace {

// Newton landing onto the zero set along the gradient.
bool land_on_interface(Point& y, const LevelSetField& phi, double tol,
                       int max_iter, int& iters) {
  const BackgroundGrid& g = phi.grid();
  const double h = g.h();
  for (int it = 0; it < max_iter; ++it) {
    const double f = phi.eval(y);
    if (std::abs(f) <= tol) return true;
    const Vec2 gr = phi.grad(y);
    const double g2 = gr.squared_norm();
    if (g2 < 1e-24) return false;
    Vec2 step = gr * (-f / g2);
    const double sn = step.norm();
    if (sn > h) step = step * (h / sn);
    y = y + step;
    y.r = std::clamp(y.r, g.r_min(), g.r_max());
    y.z = std::clamp(y.z, g.z_min(), g.z_max());
    ++iters;
  }
  return std::abs(phi.eval(y)) <= tol;
}

double tangential_gap(Point x, Point y, const LevelSetField& phi) {
  const Vec2 gr = phi.grad(y);
  if (gr.squared_norm() < 1e-24) return 0.0;
  return (x - y).dot(gr.normalized().perp());
}

ProjectionResult project_from(Point x, Point y0, const LevelSetField& phi,
                              double tol, int max_iter) {
  ProjectionResult res;
  res.y = y0;
  const double h = phi.grid().h();

  if (!land_on_interface(res.y, phi, tol, max_iter, res.iterations)) {
    res.phi_residual = std::abs(phi.eval(res.y));
    return res;
  }

  // Tangential sliding until (x - y) is parallel to the normal. The gap as a
  // function of slide length has slope -(1 -+ dist*curvature), so the step is
  // secant-scaled and halved on overshoot; each accepted slide is re-landed.
  // The discrete curve is only C0 across cell faces: when the foot sits on a
  // face the gap jumps sign there, and the slide length is bisected instead.
  bool aligned = false;
  double gain = 1.0;
  for (int it = 0; it < max_iter; ++it) {
    const Vec2 gr = phi.grad(res.y);
    if (gr.squared_norm() < 1e-24) break;
    const Vec2 t = gr.normalized().perp();
    const Vec2 d = x - res.y;
    const double dist = d.norm();
    const double mu = d.dot(t);
    res.alignment = std::abs(mu) / std::max(dist, h);
    if (std::abs(mu) <= std::max(tol, 1e-9 * dist)) {
      aligned = true;
      break;
    }

    bool moved = false;
    bool have_flip = false;
    double flip_step = 0.0;
    const double step_cap = 2.0 * h;
    double step = std::clamp(gain * mu, -step_cap, step_cap);
    double probe_gap = 0.0;
    bool have_probe = false;
    for (int trial = 0; trial < 14 && !moved; ++trial) {
      Point y_try = res.y + t * step;
      int dummy = 0;
      if (land_on_interface(y_try, phi, tol, max_iter, dummy)) {
        const double mu_try = tangential_gap(x, y_try, phi);
        if (!have_flip && (mu_try < 0.0) != (mu < 0.0)) {
          have_flip = true;
          flip_step = step;
        }
        if (std::abs(mu_try) < std::max(0.8 * std::abs(mu), tol)) {
          if (std::abs(mu - mu_try) > 0.0)
            gain = std::clamp(std::abs(step / (mu - mu_try)), 0.1, 1e4);
          res.y = y_try;
          moved = true;
          break;
        }
        if (trial == 0) {
          have_probe = true;
          probe_gap = mu_try;
        }
      }
      ++res.iterations;
      if (trial == 0 && have_probe && std::abs(mu - probe_gap) > 0.0) {
        // secant-extrapolated step; handles feet where the gap responds
        // weakly to sliding (dist * curvature close to 1)
        step = std::clamp(step * mu / (mu - probe_gap), -step_cap, step_cap);
      } else {
        step *= 0.5;
      }
    }

    if (!moved && have_flip) {
      // bracketing slide lengths around the gap's sign change
      double lo = 0.0, hi = flip_step;
      Point y_best = res.y;
      double d_best = dist;
      for (int b = 0; b < 80 && std::abs(hi - lo) > 1e-15 * h; ++b) {
        const double mid = 0.5 * (lo + hi);
        Point y_mid = res.y + t * mid;
        int dummy = 0;
        if (!land_on_interface(y_mid, phi, tol, max_iter, dummy)) break;
        const double mu_mid = tangential_gap(x, y_mid, phi);
        const double d_mid = (x - y_mid).norm();
        if (d_mid < d_best) {
          d_best = d_mid;
          y_best = y_mid;
        }
        if ((mu_mid < 0.0) == (mu < 0.0))
          lo = mid;
        else
          hi = mid;
        ++res.iterations;
      }
      res.y = y_best;
      res.phi_residual = std::abs(phi.eval(res.y));
      res.alignment = std::abs(tangential_gap(x, res.y, phi)) /
                      std::max((x - res.y).norm(), h);
      aligned = res.phi_residual <= tol;
      break;
    }
    if (!moved) {
      // The slide bottomed out. Two legitimate stall points exist: a foot
      // pinned to the box boundary (curve endpoint, e.g. the poles on the
      // symmetry axis) and a foot at a kink of the C0 discrete curve (cell
      // corners). In both the distance is minimal although the angle test
      // cannot reach the smooth-case tolerance.
      const BackgroundGrid& g = phi.grid();
      const double eps = 1e-12 * std::max(1.0, h);
      const bool on_boundary =
          res.y.r <= g.r_min() + eps || res.y.r >= g.r_max() - eps ||
          res.y.z <= g.z_min() + eps || res.y.z >= g.z_max() - eps;
      res.phi_residual = std::abs(phi.eval(res.y));
      aligned = (on_boundary || res.alignment <= 1e-3) && res.phi_residual <= tol;
      break;
    }
  }

  res.phi_residual = std::abs(phi.eval(res.y));
  const Vec2 gr = phi.grad(res.y);
  if (gr.squared_norm() >= 1e-24) res.normal = gr.normalized();
  res.converged = aligned && res.phi_residual <= tol;
  return res;
}

}  // namespace

ProjectionResult closest_point_projection(Point x, const LevelSetField& phi,
                                          double tol, int max_iter) {
  if (std::abs(phi.eval(x)) <= tol) {
    ProjectionResult res;
    res.y = x;
    res.phi_residual = std::abs(phi.eval(x));
    const Vec2 g = phi.grad(x);
    if (g.squared_norm() >= 1e-24) res.normal = g.normalized();
    res.converged = true;
    return res;
  }

  ProjectionResult res = project_from(x, x, phi, tol, max_iter);
  if (res.converged) return res;

  // Retry from the nearest grid node with smaller |phi|; helps near kinks
  // and high curvature where the local iteration stalls.
  const BackgroundGrid& g = phi.grid();
  const double fx = std::abs(phi.eval(x));
  const auto [ir0, iz0] = g.cell_coords(g.locate_cell(x));
  int best = -1;
  double best_d2 = std::numeric_limits<double>::max();
  for (int iz = std::max(0, 2 * iz0 - 2); iz <= std::min(g.q2_nodes_z() - 1, 2 * iz0 + 4); ++iz)
    for (int ir = std::max(0, 2 * ir0 - 2); ir <= std::min(g.q2_nodes_r() - 1, 2 * ir0 + 4); ++ir) {
      const int n = g.q2_node_index(ir, iz);
      if (std::abs(phi.value(n)) >= fx) continue;
      const double d2 = (g.q2_node_point(n) - x).squared_norm();
      if (d2 < best_d2) {
        best_d2 = d2;
        best = n;
      }
    }
  if (best >= 0) {
    ProjectionResult retry = project_from(x, g.q2_node_point(best), phi, tol, max_iter);
    if (retry.converged) return retry;
    if (retry.phi_residual < res.phi_residual) res = retry;
  }
  return res;
}

Point project_to_interface(Point x, const LevelSetField& phi, double tol,
                           int max_iter) {
  const ProjectionResult res = closest_point_projection(x, phi, tol, max_iter);
  if (!res.converged)
    throw ProjectionError(
        "closest-point projection did not converge (kinked or under-resolved "
        "level set), residual " + std::to_string(res.phi_residual),
        res.y, res.phi_residual);
  return res.y;
}

InterfaceProjector::InterfaceProjector(const LevelSetField& phi) : phi_(&phi) {
  const ActiveMesh cut = classify_cells(phi, 0.0, ClassifyMode::Surface);
  const BackgroundGrid& g = phi.grid();
  constexpr int kLines = 12;
  for (int cell : cut.cut_cells) {
    const BiquadCell bc = BiquadCell::from_field(phi, cell);
    for (int k = 0; k < kLines; ++k) {
      const double s = (k + 0.5) / kLines;
      double a, b, c;
      double roots[2];
      bc.line_quadratic_eta(s, a, b, c);
      int nr = quadratic_roots_unit(a, b, c, roots);
      for (int q = 0; q < nr; ++q) samples_.push_back(bc.to_physical(s, roots[q]));
      bc.line_quadratic_xi(s, a, b, c);
      nr = quadratic_roots_unit(a, b, c, roots);
      for (int q = 0; q < nr; ++q) samples_.push_back(bc.to_physical(roots[q], s));
    }
    // curve endpoints where the zero set leaves through a box edge (the
    // poles on the symmetry axis); they compete as closest-point feet
    const auto [ir, iz] = g.cell_coords(cell);
    auto edge_roots = [&](bool vertical, double fixed) {
      double a, b, c;
      double roots[2];
      if (vertical)
        bc.line_quadratic_eta(fixed, a, b, c);
      else
        bc.line_quadratic_xi(fixed, a, b, c);
      const int nr = quadratic_roots_unit(a, b, c, roots);
      for (int q = 0; q < nr; ++q) {
        const Point p = vertical ? bc.to_physical(fixed, roots[q])
                                 : bc.to_physical(roots[q], fixed);
        boundary_points_.push_back(p);
        samples_.push_back(p);
      }
    };
    if (ir == 0) edge_roots(true, 0.0);
    if (ir == g.cells_r() - 1) edge_roots(true, 1.0);
    if (iz == 0) edge_roots(false, 0.0);
    if (iz == g.cells_z() - 1) edge_roots(false, 1.0);
  }
  buckets_.resize(g.num_cells());
  for (int i = 0; i < static_cast<int>(samples_.size()); ++i)
    buckets_[g.locate_cell(samples_[i])].push_back(i);
}

int InterfaceProjector::nearest_sample(Point x) const {
  const BackgroundGrid& g = phi_->grid();
  const auto [ic, jc] = g.cell_coords(g.locate_cell(x));
  const double h = g.h();
  int best = -1;
  double best_d2 = std::numeric_limits<double>::max();
  const int max_ring = std::max(g.cells_r(), g.cells_z()) + 1;
  for (int ring = 0; ring <= max_ring; ++ring) {
    // cells at Chebyshev distance == ring
    if (best >= 0) {
      const double reach = (ring - 1) * h;
      if (reach > 0 && reach * reach > best_d2) break;
    }
    for (int dz = -ring; dz <= ring; ++dz) {
      const int iz = jc + dz;
      if (iz < 0 || iz >= g.cells_z()) continue;
      const bool edge_row = (std::abs(dz) == ring);
      const int step = edge_row ? 1 : 2 * ring;
      for (int dr = -ring; dr <= ring; dr += (step == 0 ? 1 : step)) {
        const int ir = ic + dr;
        if (ir < 0 || ir >= g.cells_r()) continue;
        for (int idx : buckets_[g.cell_index(ir, iz)]) {
          const double d2 = (samples_[idx] - x).squared_norm();
          if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
            best_d2 = d2;
            best = idx;
          }
        }
        if (ring == 0) break;
      }
    }
  }
  return best;
}

int InterfaceProjector::nearest_sample_reference(Point x) const {
  int best = -1;
  double best_d2 = std::numeric_limits<double>::max();
  for (int i = 0; i < static_cast<int>(samples_.size()); ++i) {
    const double d2 = (samples_[i] - x).squared_norm();
    if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

ProjectionResult InterfaceProjector::project_seeded(Point x, int sample_idx,
                                                    double tol,
                                                    int max_iter) const {
  if (std::abs(phi_->eval(x)) <= tol) {
    ProjectionResult res;
    res.y = x;
    res.phi_residual = std::abs(phi_->eval(x));
    const Vec2 g = phi_->grad(x);
    if (g.squared_norm() >= 1e-24) res.normal = g.normalized();
    res.converged = true;
    return res;
  }
  if (sample_idx < 0)
    throw ProjectionError("interface projector: empty zero set", x, 0.0);
  ProjectionResult res =
      project_from(x, samples_[sample_idx], *phi_, tol, max_iter);
  if (!res.converged) {
    // accept a stalled iterate that is at least as close as the densest
    // sampled witness; the sample set bounds the true minimum from above
    const double d_seed = (samples_[sample_idx] - x).norm();
    if (res.phi_residual <= tol && (res.y - x).norm() <= d_seed + 1e-12)
      res.converged = true;
  }
  if (!res.converged) {
    const ProjectionResult retry = closest_point_projection(x, *phi_, tol, max_iter);
    if (retry.converged) res = retry;
    else if (retry.phi_residual < res.phi_residual) res = retry;
  }
  // curve endpoints on the domain boundary compete as minimizers; the slide
  // cannot reach them when the normal tilts off the axis
  for (const Point& b : boundary_points_) {
    const double db = (b - x).norm();
    if (!res.converged || db < (res.y - x).norm()) {
      const double fb = std::abs(phi_->eval(b));
      if (fb <= 10.0 * tol && (!res.converged || db < (res.y - x).norm())) {
        res.y = b;
        res.phi_residual = fb;
        const Vec2 g = phi_->grad(b);
        if (g.squared_norm() >= 1e-24) res.normal = g.normalized();
        res.alignment = 0.0;
        res.converged = true;
      }
    }
  }
  return res;
}

ProjectionResult InterfaceProjector::project(Point x, double tol,
                                             int max_iter) const {
  return project_seeded(x, nearest_sample(x), tol, max_iter);
}

namespace {

LevelSetField reinitialize_impl(const LevelSetField& phi, bool parallel) {
  const InterfaceProjector projector(phi);
  if (projector.empty())
    throw std::runtime_error("reinitialize_signed_distance: empty zero set");
  const BackgroundGrid& g = phi.grid();
  LevelSetField out(phi.grid_ptr());
  std::vector<Point> feet(g.num_q2_nodes());
  std::atomic<int> failed_node(-1);

  auto body = [&](std::int64_t n) {
    if (failed_node.load(std::memory_order_relaxed) >= 0) return;
    const Point x = g.q2_node_point(static_cast<int>(n));
    const ProjectionResult res = projector.project(x, kProjectionTol, kProjectionMaxIter);
    if (!res.converged) {
      int expected = -1;
      failed_node.compare_exchange_strong(expected, static_cast<int>(n));
      return;
    }
    const double v_old = phi.value(static_cast<int>(n));
    const double s = (v_old > 0.0) ? 1.0 : (v_old < 0.0 ? -1.0 : 0.0);
    feet[n] = res.y;
    out.value(static_cast<int>(n)) = s * (x - res.y).norm();
  };

  if (parallel)
    parallel_for(g.num_q2_nodes(), body);
  else
    serial_for(g.num_q2_nodes(), body);

  const int fn = failed_node.load();
  if (fn >= 0) {
    const Point p = g.q2_node_point(fn);
    throw ProjectionError(
        "reinitialize_signed_distance: projection failed at node " +
            std::to_string(fn) + " (r=" + std::to_string(p.r) +
            ", z=" + std::to_string(p.z) + ")",
        p, std::abs(phi.eval(p)));
  }

  // Anchor the zero set: interpolating exact nodal distances displaces the
  // discrete interface by the interpolation leakage at the old feet.
  // Subtracting the new interpolant's value at each node's foot pulls the
  // zero set back; two sweeps drive the secular drift to roundoff scale.
  for (int sweep = 0; sweep < 2; ++sweep) {
    std::vector<double> leak(g.num_q2_nodes());
    auto correct = [&](std::int64_t n) { leak[n] = out.eval(feet[n]); };
    if (parallel)
      parallel_for(g.num_q2_nodes(), correct);
    else
      serial_for(g.num_q2_nodes(), correct);
    for (int n = 0; n < g.num_q2_nodes(); ++n) out.value(n) -= leak[n];
  }
  return out;
}

}  // namespace

LevelSetField reinitialize_signed_distance(const LevelSetField& phi) {
  return reinitialize_impl(phi, true);
}

LevelSetField reinitialize_signed_distance_reference(const LevelSetField& phi) {
  // Brute-force seed search, serial loop. Kept as the reference the parallel
  // kernel is tested against.
  const InterfaceProjector projector(phi);
  if (projector.empty())
    throw std::runtime_error("reinitialize_signed_distance: empty zero set");
  const BackgroundGrid& g = phi.grid();
  LevelSetField out(phi.grid_ptr());
  std::vector<Point> feet(g.num_q2_nodes());
  for (int n = 0; n < g.num_q2_nodes(); ++n) {
    const Point x = g.q2_node_point(n);
    const int seed = projector.nearest_sample_reference(x);
    const ProjectionResult res =
        projector.project_seeded(x, seed, kProjectionTol, kProjectionMaxIter);
    if (!res.converged)
      throw ProjectionError("reinitialize reference: projection failed", x, 0.0);
    const double v_old = phi.value(n);
    const double s = (v_old > 0.0) ? 1.0 : (v_old < 0.0 ? -1.0 : 0.0);
    feet[n] = res.y;
    out.value(n) = s * (x - res.y).norm();
  }
  for (int sweep = 0; sweep < 2; ++sweep) {
    std::vector<double> leak(g.num_q2_nodes());
    for (int n = 0; n < g.num_q2_nodes(); ++n) leak[n] = out.eval(feet[n]);
    for (int n = 0; n < g.num_q2_nodes(); ++n) out.value(n) -= leak[n];
  }
  return out;
}

LevelSetField advance_levelset(const LevelSetField& phi_prev,
                               const std::vector<double>& normal_speed,
                               double dt) {
  if (static_cast<int>(normal_speed.size()) != phi_prev.grid().num_q2_nodes())
    throw std::invalid_argument("advance_levelset: speed field size mismatch");
  LevelSetField out(phi_prev.grid_ptr());
  const int n = phi_prev.grid().num_q2_nodes();
  // |grad phi| := 1 after reinitialization
  for (int i = 0; i < n; ++i)
    out.value(i) = phi_prev.value(i) - dt * normal_speed[i];
  return out;
}

std::vector<double> extend_normal_velocity(
    const LevelSetField& phi, const std::function<Vec2(Point)>& surface_velocity,
    double band_half_width) {
  const BackgroundGrid& g = phi.grid();
  std::vector<double> speed(g.num_q2_nodes(), 0.0);
  const InterfaceProjector projector(phi);
  if (projector.empty()) return speed;
  std::atomic<int> failed_node(-1);

  parallel_for(g.num_q2_nodes(), [&](std::int64_t n) {
    if (std::abs(phi.value(static_cast<int>(n))) > band_half_width) return;
    if (failed_node.load(std::memory_order_relaxed) >= 0) return;
    const Point x = g.q2_node_point(static_cast<int>(n));
    const ProjectionResult res = projector.project(x, kProjectionTol, kProjectionMaxIter);
    if (!res.converged) {
      int expected = -1;
      failed_node.compare_exchange_strong(expected, static_cast<int>(n));
      return;
    }
    speed[n] = surface_velocity(res.y).dot(res.normal);
  });

  const int fn = failed_node.load();
  if (fn >= 0)
    throw ProjectionError(
        "extend_normal_velocity: projection failed at node " + std::to_string(fn),
        g.q2_node_point(fn), std::abs(phi.eval(g.q2_node_point(fn))));
  return speed;
}

}  // namespace cortexflow
