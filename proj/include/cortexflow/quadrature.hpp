#pragma once

#include <vector>

#include "cortexflow/gauss.hpp"
#include "cortexflow/levelset.hpp"

namespace cortexflow {

struct QuadPoint {
  Point x;
  double w = 0.0;
  Vec2 normal{};  // unit normal (surface rules only)
};

struct CutQuadrature {
  std::vector<QuadPoint> points;
  bool fallback = false;  // grazing cut handled by the subdivided path
  double weight_sum() const {
    double s = 0.0;
    for (const auto& p : points) s += p.w;
    return s;
  }
  bool empty() const { return points.empty(); }
};

// Quadrature over {phi < 0} within one cell; plain tensor Gauss when the
// cell is uncut. `order` is the polynomial degree integrated exactly in the
// height direction (planar cuts are exact; curved cuts are limited by the
// smooth dependence of the interface graph on the base coordinate).
CutQuadrature bulk_cut_rule(const LevelSetField& phi, int cell, int order);

// Quadrature along {phi = 0} within one cell; every point carries the unit
// normal grad(phi)/|grad(phi)|.
CutQuadrature surface_cut_rule(const LevelSetField& phi, int cell, int order);

// Full-cell tensor Gauss rule.
CutQuadrature tensor_cell_rule(const BackgroundGrid& grid, int cell, int order);

struct AxisymMeasures {
  double volume = 0.0;  // 2 pi Int_{phi<0} r
  double area = 0.0;    // 2 pi Int_{phi=0} r
};
AxisymMeasures axisymmetric_measures(const LevelSetField& phi, int order = 7);

// Rules for all cells of an active mesh, built cell-parallel with
// deterministic output.
struct MeshQuadrature {
  // Indexed by active rank: rule over {phi<0} (tensor for Interior cells,
  // cut rule for Cut cells, empty for BandOnly cells).
  std::vector<CutQuadrature> bulk;
  // Indexed by position in mesh.cut_cells.
  std::vector<CutQuadrature> surface;
  // Indexed by active rank: full-cell tensor rules (narrow-band
  // stabilization integrals); built only on request.
  std::vector<CutQuadrature> full;
};

MeshQuadrature build_mesh_quadrature(const ActiveMesh& mesh,
                                     const LevelSetField& phi, int order,
                                     bool with_full_rules);

// |Omega ∩ T| / |T| per active cell (1 for Interior, 0 for BandOnly).
std::vector<double> cut_fractions(const ActiveMesh& mesh,
                                  const MeshQuadrature& quad);

}  // namespace cortexflow
