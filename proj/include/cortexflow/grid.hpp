#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cortexflow {

// Coordinates in the meridian half-plane: first component radial (r >= 0),
// second along the symmetry axis (z).
struct Vec2 {
  double r = 0.0;
  double z = 0.0;

  Vec2() = default;
  Vec2(double r_, double z_) : r(r_), z(z_) {}

  Vec2 operator+(const Vec2& o) const { return {r + o.r, z + o.z}; }
  Vec2 operator-(const Vec2& o) const { return {r - o.r, z - o.z}; }
  Vec2 operator*(double s) const { return {r * s, z * s}; }
  Vec2 operator/(double s) const { return {r / s, z / s}; }
  double dot(const Vec2& o) const { return r * o.r + z * o.z; }
  double norm() const { return std::hypot(r, z); }
  double squared_norm() const { return r * r + z * z; }
  Vec2 normalized() const {
    const double n = norm();
    return {r / n, z / n};
  }
  // 90-degree rotation; used for tangents of level-set normals.
  Vec2 perp() const { return {-z, r}; }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

using Point = Vec2;

// Fixed uniform Cartesian grid on [r_min,r_max] x [z_min,z_max]. The cell
// size h is identical on both axes. Cells and nodes are numbered row-major
// with the r index running fastest, so all indexing is reproducible.
class BackgroundGrid {
 public:
  BackgroundGrid(double r_min, double r_max, double z_min, double z_max,
                 int cells_r, int cells_z);

  double r_min() const { return r_min_; }
  double r_max() const { return r_max_; }
  double z_min() const { return z_min_; }
  double z_max() const { return z_max_; }
  double h() const { return h_; }
  int cells_r() const { return nr_; }
  int cells_z() const { return nz_; }
  int num_cells() const { return nr_ * nz_; }

  int cell_index(int ir, int iz) const { return iz * nr_ + ir; }
  std::array<int, 2> cell_coords(int c) const { return {c % nr_, c / nr_}; }
  // Lower-left corner of a cell.
  Point cell_origin(int c) const {
    const auto [ir, iz] = cell_coords(c);
    return {r_min_ + ir * h_, z_min_ + iz * h_};
  }
  Point cell_center(int c) const {
    const Point o = cell_origin(c);
    return {o.r + 0.5 * h_, o.z + 0.5 * h_};
  }
  // Cell containing x, with coordinates clamped into the box.
  int locate_cell(Point x) const;
  // Up to four cells whose closed bounding box contains x (points on faces
  // belong to several cells). Returns the count.
  int candidate_cells(Point x, std::array<int, 4>& out) const;

  bool contains(Point x) const {
    return x.r >= r_min_ && x.r <= r_max_ && x.z >= z_min_ && x.z <= z_max_;
  }

  // Biquadratic (Q2) node lattice: (2*cells_r+1) x (2*cells_z+1) points with
  // spacing h/2.
  int q2_nodes_r() const { return 2 * nr_ + 1; }
  int q2_nodes_z() const { return 2 * nz_ + 1; }
  int num_q2_nodes() const { return q2_nodes_r() * q2_nodes_z(); }
  int q2_node_index(int ir, int iz) const { return iz * q2_nodes_r() + ir; }
  Point q2_node_point(int n) const {
    const int ir = n % q2_nodes_r();
    const int iz = n / q2_nodes_r();
    return {r_min_ + 0.5 * h_ * ir, z_min_ + 0.5 * h_ * iz};
  }
  // The nine Q2 nodes of a cell in tensor order (r fastest, bottom to top).
  std::array<int, 9> cell_q2_nodes(int c) const;

  // Bilinear (Q1) node lattice: cell corners.
  int q1_nodes_r() const { return nr_ + 1; }
  int q1_nodes_z() const { return nz_ + 1; }
  int num_q1_nodes() const { return q1_nodes_r() * q1_nodes_z(); }
  int q1_node_index(int ir, int iz) const { return iz * q1_nodes_r() + ir; }
  Point q1_node_point(int n) const {
    const int ir = n % q1_nodes_r();
    const int iz = n / q1_nodes_r();
    return {r_min_ + h_ * ir, z_min_ + h_ * iz};
  }
  std::array<int, 4> cell_q1_nodes(int c) const;

 private:
  double r_min_, r_max_, z_min_, z_max_;
  int nr_, nz_;
  double h_;
};

}  // namespace cortexflow
