#include "cortexflow/grid.hpp"

#include <algorithm>
#include <cmath>

namespace cortexflow {

BackgroundGrid::BackgroundGrid(double r_min, double r_max, double z_min,
                               double z_max, int cells_r, int cells_z)
    : r_min_(r_min),
      r_max_(r_max),
      z_min_(z_min),
      z_max_(z_max),
      nr_(cells_r),
      nz_(cells_z) {
  if (cells_r < 1 || cells_z < 1)
    throw std::invalid_argument("BackgroundGrid: cell counts must be >= 1");
  if (!(r_max > r_min) || !(z_max > z_min))
    throw std::invalid_argument("BackgroundGrid: empty bounding box");
  const double hr = (r_max - r_min) / cells_r;
  const double hz = (z_max - z_min) / cells_z;
  if (std::abs(hr - hz) > 1e-12 * std::max(hr, hz))
    throw std::invalid_argument(
        "BackgroundGrid: cell size must match on both axes (got hr=" +
        std::to_string(hr) + ", hz=" + std::to_string(hz) + ")");
  h_ = hr;
}

int BackgroundGrid::locate_cell(Point x) const {
  int ir = static_cast<int>(std::floor((x.r - r_min_) / h_));
  int iz = static_cast<int>(std::floor((x.z - z_min_) / h_));
  ir = std::clamp(ir, 0, nr_ - 1);
  iz = std::clamp(iz, 0, nz_ - 1);
  return cell_index(ir, iz);
}

int BackgroundGrid::candidate_cells(Point x, std::array<int, 4>& out) const {
  const double fr = (x.r - r_min_) / h_;
  const double fz = (x.z - z_min_) / h_;
  const double tol = 1e-12 * std::max(1.0, std::max(nr_, nz_) * 1.0);
  int count = 0;
  const int ir0 = static_cast<int>(std::floor(fr));
  const int iz0 = static_cast<int>(std::floor(fz));
  for (int diz = -1; diz <= 0; ++diz) {
    for (int dir = -1; dir <= 0; ++dir) {
      const int ir = std::clamp(ir0 + dir, 0, nr_ - 1);
      const int iz = std::clamp(iz0 + diz, 0, nz_ - 1);
      // accept if x is inside the closed cell up to tolerance
      const double r0 = r_min_ + ir * h_, z0 = z_min_ + iz * h_;
      if (fr >= ir - tol && fr <= ir + 1 + tol && fz >= iz - tol &&
          fz <= iz + 1 + tol && x.r >= r0 - h_ * 1e-12 &&
          x.z >= z0 - h_ * 1e-12) {
        const int c = cell_index(ir, iz);
        bool seen = false;
        for (int k = 0; k < count; ++k) seen |= (out[k] == c);
        if (!seen) out[count++] = c;
      }
    }
  }
  if (count == 0) out[count++] = locate_cell(x);
  return count;
}

std::array<int, 9> BackgroundGrid::cell_q2_nodes(int c) const {
  const auto [ir, iz] = cell_coords(c);
  std::array<int, 9> nodes{};
  int k = 0;
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i)
      nodes[k++] = q2_node_index(2 * ir + i, 2 * iz + j);
  return nodes;
}

std::array<int, 4> BackgroundGrid::cell_q1_nodes(int c) const {
  const auto [ir, iz] = cell_coords(c);
  return {q1_node_index(ir, iz), q1_node_index(ir + 1, iz),
          q1_node_index(ir, iz + 1), q1_node_index(ir + 1, iz + 1)};
}

}  // namespace cortexflow
