#include "cortexflow/quadrature.hpp"

#include <algorithm>
#include <cmath>

#include "cortexflow/parallel.hpp"

namespace cortexflow {

namespace {

constexpr int kMaxDepth = 6;
constexpr double kInsideTie = 1e-14;  // exact zeros count as outside

enum class Dir { None, Xi, Eta };

// Sign-definiteness of the direction derivative via Bernstein bounds;
// returns +-(smallest magnitude) or 0 when the sign is not certain.
double direction_margin(const std::array<double, 6>& bern) {
  double lo = bern[0], hi = bern[0];
  for (double b : bern) {
    lo = std::min(lo, b);
    hi = std::max(hi, b);
  }
  if (lo > 0.0) return lo;
  if (hi < 0.0) return -hi;
  return 0.0;
}

Dir pick_height_direction(const BiquadCell& bc) {
  const double mx = direction_margin(bc.bernstein_dxi());
  const double me = direction_margin(bc.bernstein_deta());
  if (mx == 0.0 && me == 0.0) return Dir::None;
  return (mx >= me) ? Dir::Xi : Dir::Eta;
}

Dir force_height_direction(const BiquadCell& bc) {
  double sx = 0.0, se = 0.0;
  for (double b : bc.bernstein_dxi()) sx += std::abs(b);
  for (double b : bc.bernstein_deta()) se += std::abs(b);
  return (sx >= se) ? Dir::Xi : Dir::Eta;
}

void tensor_rule_box(const BiquadCell& bc, int order,
                     std::vector<QuadPoint>& out) {
  const GaussRule& g = gauss_rule(gauss_points_for_order(order));
  const double jac = bc.size * bc.size;
  for (int j = 0; j < g.size(); ++j)
    for (int i = 0; i < g.size(); ++i)
      out.push_back({bc.to_physical(g.x[i], g.x[j]), g.w[i] * g.w[j] * jac, {}});
}

// Base coordinates where the interface crosses the height-limit edges
// s = 0 and s = 1. Between consecutive breakpoints the interface graph
// neither appears nor disappears, so the base integrand stays smooth up to
// sqrt-type behavior at the breakpoints themselves (edge tangencies).
int base_breakpoints(const BiquadCell& bc, Dir height, double brk[6]) {
  int nb = 0;
  brk[nb++] = 0.0;
  for (double s_edge : {0.0, 1.0}) {
    double a, b, c;
    if (height == Dir::Eta)
      bc.line_quadratic_xi(s_edge, a, b, c);  // quadratic in the base xi
    else
      bc.line_quadratic_eta(s_edge, a, b, c);
    double roots[2];
    const int nr = quadratic_roots_unit(a, b, c, roots);
    for (int q = 0; q < nr; ++q)
      if (roots[q] > kGeomEps && roots[q] < 1.0 - kGeomEps) brk[nb++] = roots[q];
  }
  brk[nb++] = 1.0;
  std::sort(brk, brk + nb);
  return nb;
}

// Polynomial grading that clusters Gauss points toward interior breakpoints;
// the quadratic contact there behaves like sqrt(t - t_break), which the
// tau^2 substitution integrates exactly. Planar cuts stay exact because the
// map is polynomial.
inline void graded_point(double tau, bool sing0, bool sing1, double& m,
                         double& dm) {
  if (sing0 && sing1) {
    m = tau * tau * (3.0 - 2.0 * tau);
    dm = 6.0 * tau * (1.0 - tau);
  } else if (sing0) {
    m = tau * tau;
    dm = 2.0 * tau;
  } else if (sing1) {
    m = 1.0 - (1.0 - tau) * (1.0 - tau);
    dm = 2.0 * (1.0 - tau);
  } else {
    m = tau;
    dm = 1.0;
  }
}

// Dimension-reduction rule on one box: Gauss lines along the base direction,
// exact quadratic roots along the height, Gauss points on interior segments.
void lines_bulk_rule(const BiquadCell& bc, Dir height, int order,
                     std::vector<QuadPoint>& out) {
  const int ng = gauss_points_for_order(order);
  const GaussRule& base = gauss_rule(ng + 7);
  const GaussRule& inner = gauss_rule(ng + 1);
  const double jac = bc.size * bc.size;
  double bbrk[6];
  const int nbb = base_breakpoints(bc, height, bbrk);
  for (int piece = 0; piece + 1 < nbb; ++piece) {
    const double t0 = bbrk[piece], t1 = bbrk[piece + 1];
    if (t1 - t0 <= kGeomEps) continue;
    const bool sing0 = (piece > 0);
    const bool sing1 = (piece + 2 < nbb);
    for (int i = 0; i < base.size(); ++i) {
      double m, dm;
      graded_point(base.x[i], sing0, sing1, m, dm);
      const double t = t0 + (t1 - t0) * m;
      const double wt = base.w[i] * dm * (t1 - t0);
      if (wt <= 0.0) continue;
      double a, b, c;
      if (height == Dir::Eta)
        bc.line_quadratic_eta(t, a, b, c);
      else
        bc.line_quadratic_xi(t, a, b, c);
      double roots[2];
      const int nr = quadratic_roots_unit(a, b, c, roots);
      double brk[4] = {0.0, 1.0, 1.0, 1.0};
      int nb = 1;
      for (int q = 0; q < nr; ++q)
        if (roots[q] > kGeomEps && roots[q] < 1.0 - kGeomEps) brk[nb++] = roots[q];
      brk[nb++] = 1.0;
      std::sort(brk, brk + nb);
      for (int s = 0; s + 1 < nb; ++s) {
        const double s0 = brk[s], s1 = brk[s + 1];
        if (s1 - s0 <= kGeomEps) continue;
        const double mid = 0.5 * (s0 + s1);
        if ((a * mid + b) * mid + c + kInsideTie >= 0.0) continue;
        for (int j = 0; j < inner.size(); ++j) {
          const double sj = s0 + (s1 - s0) * inner.x[j];
          const double w = wt * inner.w[j] * (s1 - s0) * jac;
          const Point x = (height == Dir::Eta) ? bc.to_physical(t, sj)
                                               : bc.to_physical(sj, t);
          out.push_back({x, w, {}});
        }
      }
    }
  }
}

void bulk_rule_box(const BiquadCell& bc, int order, int depth,
                   std::vector<QuadPoint>& out) {
  const auto bern = bc.bernstein();
  double bmin = bern[0], bmax = bern[0];
  for (double b : bern) {
    bmin = std::min(bmin, b);
    bmax = std::max(bmax, b);
  }
  if (bmin > 0.0) return;  // certainly outside
  if (bmax < 0.0) {        // certainly inside
    tensor_rule_box(bc, order, out);
    return;
  }
  Dir height = pick_height_direction(bc);
  if (height == Dir::None) {
    if (depth < kMaxDepth) {
      for (int q = 0; q < 4; ++q) bulk_rule_box(bc.child(q), order, depth + 1, out);
      return;
    }
    height = force_height_direction(bc);
  }
  lines_bulk_rule(bc, height, order, out);
}

void lines_surface_rule(const BiquadCell& bc, Dir height, int order,
                        std::vector<QuadPoint>& out, bool& fallback) {
  const int ng = gauss_points_for_order(order);
  const GaussRule& base = gauss_rule(ng + 7);
  double bbrk[6];
  const int nbb = base_breakpoints(bc, height, bbrk);
  for (int piece = 0; piece + 1 < nbb; ++piece) {
    const double t0 = bbrk[piece], t1 = bbrk[piece + 1];
    if (t1 - t0 <= kGeomEps) continue;
    const bool sing0 = (piece > 0);
    const bool sing1 = (piece + 2 < nbb);
    for (int i = 0; i < base.size(); ++i) {
      double m, dm;
      graded_point(base.x[i], sing0, sing1, m, dm);
      const double t = t0 + (t1 - t0) * m;
      const double wt = base.w[i] * dm * (t1 - t0);
      if (wt <= 0.0) continue;
      double a, b, c;
      if (height == Dir::Eta)
        bc.line_quadratic_eta(t, a, b, c);
      else
        bc.line_quadratic_xi(t, a, b, c);
      double roots[2];
      const int nr = quadratic_roots_unit(a, b, c, roots);
      for (int q = 0; q < nr; ++q) {
        const double s = roots[q];
        const double xi = (height == Dir::Eta) ? t : s;
        const double eta = (height == Dir::Eta) ? s : t;
        const Vec2 gref = bc.grad_ref(xi, eta);
        const double gh = (height == Dir::Eta) ? gref.z : gref.r;
        const double gnorm = gref.norm();
        if (std::abs(gh) < 1e-12 * std::max(1.0, gnorm)) {
          fallback = true;  // grazing: interface tangent to the line
          continue;
        }
        QuadPoint p;
        p.x = bc.to_physical(xi, eta);
        p.w = wt * bc.size * gnorm / std::abs(gh);
        p.normal = gref.normalized();  // reference grad is physical grad * size
        out.push_back(p);
      }
    }
  }
}

void surface_rule_box(const BiquadCell& bc, int order, int depth,
                      std::vector<QuadPoint>& out, bool& fallback) {
  const auto bern = bc.bernstein();
  double bmin = bern[0], bmax = bern[0];
  for (double b : bern) {
    bmin = std::min(bmin, b);
    bmax = std::max(bmax, b);
  }
  if (bmin > 0.0 || bmax < 0.0) return;  // no zero crossing
  Dir height = pick_height_direction(bc);
  if (height == Dir::None) {
    if (depth < kMaxDepth) {
      for (int q = 0; q < 4; ++q)
        surface_rule_box(bc.child(q), order, depth + 1, out, fallback);
      return;
    }
    height = force_height_direction(bc);
    fallback = true;
  }
  lines_surface_rule(bc, height, order, out, fallback);
}

}  // namespace

CutQuadrature bulk_cut_rule(const LevelSetField& phi, int cell, int order) {
  CutQuadrature rule;
  bulk_rule_box(BiquadCell::from_field(phi, cell), order, 0, rule.points);
  return rule;
}

CutQuadrature surface_cut_rule(const LevelSetField& phi, int cell, int order) {
  CutQuadrature rule;
  surface_rule_box(BiquadCell::from_field(phi, cell), order, 0, rule.points,
                   rule.fallback);
  return rule;
}

CutQuadrature tensor_cell_rule(const BackgroundGrid& grid, int cell, int order) {
  CutQuadrature rule;
  BiquadCell bc;
  bc.origin = grid.cell_origin(cell);
  bc.size = grid.h();
  tensor_rule_box(bc, order, rule.points);
  return rule;
}

MeshQuadrature build_mesh_quadrature(const ActiveMesh& mesh,
                                     const LevelSetField& phi, int order,
                                     bool with_full_rules) {
  MeshQuadrature q;
  const int na = mesh.num_active();
  q.bulk.resize(na);
  q.surface.resize(mesh.cut_cells.size());
  if (with_full_rules) q.full.resize(na);

  parallel_for(na, [&](std::int64_t k) {
    const int cell = mesh.active_cells[k];
    switch (mesh.tag[cell]) {
      case CellTag::Interior:
        q.bulk[k] = tensor_cell_rule(*mesh.grid, cell, order);
        break;
      case CellTag::Cut:
        q.bulk[k] = bulk_cut_rule(phi, cell, order);
        break;
      default:
        break;  // BandOnly: no bulk portion
    }
    if (with_full_rules) q.full[k] = tensor_cell_rule(*mesh.grid, cell, order);
  });

  parallel_for(static_cast<std::int64_t>(mesh.cut_cells.size()), [&](std::int64_t k) {
    q.surface[k] = surface_cut_rule(phi, mesh.cut_cells[k], order);
  });
  return q;
}

std::vector<double> cut_fractions(const ActiveMesh& mesh,
                                  const MeshQuadrature& quad) {
  const double cell_area = mesh.grid->h() * mesh.grid->h();
  std::vector<double> frac(mesh.num_active(), 0.0);
  for (int k = 0; k < mesh.num_active(); ++k) {
    const int cell = mesh.active_cells[k];
    if (mesh.tag[cell] == CellTag::Interior)
      frac[k] = 1.0;
    else if (mesh.tag[cell] == CellTag::Cut)
      frac[k] = quad.bulk[k].weight_sum() / cell_area;
  }
  return frac;
}

AxisymMeasures axisymmetric_measures(const LevelSetField& phi, int order) {
  const ActiveMesh mesh = classify_cells(phi, 0.0, ClassifyMode::Bulk);
  const MeshQuadrature quad = build_mesh_quadrature(mesh, phi, order, false);
  AxisymMeasures m;
  for (const auto& rule : quad.bulk)
    for (const auto& p : rule.points) m.volume += p.w * p.x.r;
  for (const auto& rule : quad.surface)
    for (const auto& p : rule.points) m.area += p.w * p.x.r;
  m.volume *= 2.0 * M_PI;
  m.area *= 2.0 * M_PI;
  return m;
}

}  // namespace cortexflow
