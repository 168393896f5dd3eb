#include "cortexflow/fe_space.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cortexflow {

namespace {

inline void q2_shape1d(double t, double n[3]) {
  n[0] = (1.0 - t) * (1.0 - 2.0 * t);
  n[1] = 4.0 * t * (1.0 - t);
  n[2] = t * (2.0 * t - 1.0);
}

inline void q2_dshape1d(double t, double d[3]) {
  d[0] = 4.0 * t - 3.0;
  d[1] = 4.0 - 8.0 * t;
  d[2] = 4.0 * t - 1.0;
}

}  // namespace

ConstrainedFESpace::ConstrainedFESpace(std::shared_ptr<const ActiveMesh> mesh,
                                       Family family)
    : mesh_(std::move(mesh)), family_(family) {
  const BackgroundGrid& g = *mesh_->grid;
  if (family_ == Family::P1DiscScalar) {
    // one triple of dofs per active cell, no inter-cell continuity
    rank_node_.resize(3 * mesh_->num_active());
    for (int i = 0; i < static_cast<int>(rank_node_.size()); ++i) rank_node_[i] = i;
    supports_.resize(rank_node_.size());
    for (int k = 0; k < mesh_->num_active(); ++k)
      for (int j = 0; j < 3; ++j) supports_[3 * k + j] = {mesh_->active_cells[k]};
    return;
  }
  const int lattice_size = (family_ == Family::Q2Vector) ? g.num_q2_nodes()
                                                         : g.num_q1_nodes();
  node_rank_.assign(lattice_size, -1);
  for (int cell : mesh_->active_cells) {
    if (family_ == Family::Q2Vector) {
      for (int n : g.cell_q2_nodes(cell)) node_rank_[n] = 0;
    } else {
      for (int n : g.cell_q1_nodes(cell)) node_rank_[n] = 0;
    }
  }
  for (int n = 0; n < lattice_size; ++n) {
    if (node_rank_[n] == 0) {
      node_rank_[n] = static_cast<int>(rank_node_.size());
      rank_node_.push_back(n);
    }
  }
  supports_.resize(rank_node_.size());
  for (int cell : mesh_->active_cells) {
    if (family_ == Family::Q2Vector) {
      for (int n : g.cell_q2_nodes(cell)) supports_[node_rank_[n]].push_back(cell);
    } else {
      for (int n : g.cell_q1_nodes(cell)) supports_[node_rank_[n]].push_back(cell);
    }
  }
}

void ConstrainedFESpace::cell_scalar_ranks(int cell, int* out) const {
  const BackgroundGrid& g = *mesh_->grid;
  switch (family_) {
    case Family::Q2Vector: {
      const auto nodes = g.cell_q2_nodes(cell);
      for (int k = 0; k < 9; ++k) out[k] = node_rank_[nodes[k]];
      break;
    }
    case Family::Q1Vector:
    case Family::Q1Scalar: {
      const auto nodes = g.cell_q1_nodes(cell);
      for (int k = 0; k < 4; ++k) out[k] = node_rank_[nodes[k]];
      break;
    }
    case Family::P1DiscScalar: {
      const int rank = mesh_->active_rank[cell];
      if (rank < 0)
        throw std::invalid_argument("cell_scalar_ranks: inactive cell");
      for (int k = 0; k < 3; ++k) out[k] = 3 * rank + k;
      break;
    }
  }
}

void ConstrainedFESpace::cell_dofs(int cell, int* out) const {
  int ranks[9];
  cell_scalar_ranks(cell, ranks);
  const int m = scalar_nodes_per_cell();
  const int c = components();
  for (int k = 0; k < m; ++k)
    for (int d = 0; d < c; ++d) out[k * c + d] = ranks[k] * c + d;
}

void ConstrainedFESpace::scalar_basis(int cell, Point x, double* N) const {
  const BackgroundGrid& g = *mesh_->grid;
  const Point o = g.cell_origin(cell);
  const double h = g.h();
  const double xi = (x.r - o.r) / h;
  const double eta = (x.z - o.z) / h;
  switch (family_) {
    case Family::Q2Vector: {
      double nx[3], nz[3];
      q2_shape1d(xi, nx);
      q2_shape1d(eta, nz);
      for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) N[j * 3 + i] = nx[i] * nz[j];
      break;
    }
    case Family::Q1Vector:
    case Family::Q1Scalar:
      N[0] = (1.0 - xi) * (1.0 - eta);
      N[1] = xi * (1.0 - eta);
      N[2] = (1.0 - xi) * eta;
      N[3] = xi * eta;
      break;
    case Family::P1DiscScalar:
      N[0] = 1.0 - xi - eta;
      N[1] = xi;
      N[2] = eta;
      break;
  }
}

void ConstrainedFESpace::scalar_basis_grad(int cell, Point x, Vec2* G) const {
  const BackgroundGrid& g = *mesh_->grid;
  const Point o = g.cell_origin(cell);
  const double h = g.h();
  const double xi = (x.r - o.r) / h;
  const double eta = (x.z - o.z) / h;
  switch (family_) {
    case Family::Q2Vector: {
      double nx[3], nz[3], dx[3], dz[3];
      q2_shape1d(xi, nx);
      q2_shape1d(eta, nz);
      q2_dshape1d(xi, dx);
      q2_dshape1d(eta, dz);
      for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i)
          G[j * 3 + i] = Vec2{dx[i] * nz[j] / h, nx[i] * dz[j] / h};
      break;
    }
    case Family::Q1Vector:
    case Family::Q1Scalar:
      G[0] = Vec2{-(1.0 - eta) / h, -(1.0 - xi) / h};
      G[1] = Vec2{(1.0 - eta) / h, -xi / h};
      G[2] = Vec2{-eta / h, (1.0 - xi) / h};
      G[3] = Vec2{eta / h, xi / h};
      break;
    case Family::P1DiscScalar:
      G[0] = Vec2{-1.0 / h, -1.0 / h};
      G[1] = Vec2{1.0 / h, 0.0};
      G[2] = Vec2{0.0, 1.0 / h};
      break;
  }
}

Point ConstrainedFESpace::scalar_rank_point(int rank) const {
  const BackgroundGrid& g = *mesh_->grid;
  switch (family_) {
    case Family::Q2Vector:
      return g.q2_node_point(rank_node_[rank]);
    case Family::Q1Vector:
    case Family::Q1Scalar:
      return g.q1_node_point(rank_node_[rank]);
    case Family::P1DiscScalar: {
      const int cell = mesh_->active_cells[rank / 3];
      const Point o = g.cell_origin(cell);
      const double h = g.h();
      switch (rank % 3) {
        case 0: return o;
        case 1: return {o.r + h, o.z};
        default: return {o.r, o.z + h};
      }
    }
  }
  return {};
}

Point ConstrainedFESpace::dof_point(int dof) const {
  return scalar_rank_point(dof_scalar_rank(dof));
}

void ConstrainedFESpace::close_constraints() {
  for (auto& [dof, con] : constraints_) {
    std::vector<std::pair<int, double>> out;
    out.reserve(con.masters.size());
    for (const auto& [m, c] : con.masters) {
      auto it = constraints_.find(m);
      if (it == constraints_.end()) {
        out.emplace_back(m, c);
        continue;
      }
      for (const auto& [mm, cc] : it->second.masters) {
        if (constraints_.count(mm))
          throw std::runtime_error("close_constraints: chained constraints");
        out.emplace_back(mm, c * cc);
      }
      con.offset += c * it->second.offset;
    }
    con.masters = std::move(out);
  }
}

void ConstrainedFESpace::apply_constraints(Eigen::VectorXd& coeffs) const {
  for (const auto& [dof, con] : constraints_) {
    double v = con.offset;
    for (const auto& [m, c] : con.masters) v += c * coeffs[m];
    coeffs[dof] = v;
  }
}

bool ConstrainedFESpace::locate(Point x, int& cell) const {
  std::array<int, 4> cand{};
  const int n = mesh_->grid->candidate_cells(x, cand);
  for (int k = 0; k < n; ++k) {
    if (mesh_->is_active(cand[k])) {
      cell = cand[k];
      return true;
    }
  }
  return false;
}

double ConstrainedFESpace::eval_scalar_on_cell(const Eigen::VectorXd& coeffs,
                                               int cell, Point x) const {
  double N[9];
  scalar_basis(cell, x, N);
  int ranks[9];
  cell_scalar_ranks(cell, ranks);
  double s = 0.0;
  for (int k = 0; k < scalar_nodes_per_cell(); ++k) s += N[k] * coeffs[ranks[k]];
  return s;
}

Vec2 ConstrainedFESpace::eval_vector_on_cell(const Eigen::VectorXd& coeffs,
                                             int cell, Point x) const {
  double N[9];
  scalar_basis(cell, x, N);
  int ranks[9];
  cell_scalar_ranks(cell, ranks);
  Vec2 v{0.0, 0.0};
  for (int k = 0; k < scalar_nodes_per_cell(); ++k) {
    v.r += N[k] * coeffs[2 * ranks[k]];
    v.z += N[k] * coeffs[2 * ranks[k] + 1];
  }
  return v;
}

double ConstrainedFESpace::eval_scalar(const Eigen::VectorXd& coeffs,
                                       Point x) const {
  int cell;
  if (!locate(x, cell))
    throw std::runtime_error("FE evaluation outside the active mesh at r=" +
                             std::to_string(x.r) + ", z=" + std::to_string(x.z) +
                             " (band too narrow)");
  return eval_scalar_on_cell(coeffs, cell, x);
}

Vec2 ConstrainedFESpace::eval_scalar_grad(const Eigen::VectorXd& coeffs,
                                          Point x) const {
  int cell;
  if (!locate(x, cell))
    throw std::runtime_error("FE gradient outside the active mesh (band too narrow)");
  Vec2 G[9];
  scalar_basis_grad(cell, x, G);
  int ranks[9];
  cell_scalar_ranks(cell, ranks);
  Vec2 g{0.0, 0.0};
  for (int k = 0; k < scalar_nodes_per_cell(); ++k) {
    g.r += G[k].r * coeffs[ranks[k]];
    g.z += G[k].z * coeffs[ranks[k]];
  }
  return g;
}

Vec2 ConstrainedFESpace::eval_vector(const Eigen::VectorXd& coeffs, Point x) const {
  int cell;
  if (!locate(x, cell))
    throw std::runtime_error("FE evaluation outside the active mesh at r=" +
                             std::to_string(x.r) + ", z=" + std::to_string(x.z) +
                             " (band too narrow)");
  return eval_vector_on_cell(coeffs, cell, x);
}

Eigen::Matrix2d ConstrainedFESpace::eval_vector_grad(const Eigen::VectorXd& coeffs,
                                                     Point x) const {
  int cell;
  if (!locate(x, cell))
    throw std::runtime_error("FE gradient outside the active mesh (band too narrow)");
  Vec2 G[9];
  scalar_basis_grad(cell, x, G);
  int ranks[9];
  cell_scalar_ranks(cell, ranks);
  Eigen::Matrix2d J = Eigen::Matrix2d::Zero();  // J(i,j) = d u_i / d x_j
  for (int k = 0; k < scalar_nodes_per_cell(); ++k) {
    const double ur = coeffs[2 * ranks[k]];
    const double uz = coeffs[2 * ranks[k] + 1];
    J(0, 0) += ur * G[k].r;
    J(0, 1) += ur * G[k].z;
    J(1, 0) += uz * G[k].r;
    J(1, 1) += uz * G[k].z;
  }
  return J;
}

ConstrainedFESpace build_space(std::shared_ptr<const ActiveMesh> mesh,
                               Family family) {
  if (mesh->empty()) throw std::invalid_argument("build_space: empty active mesh");
  return ConstrainedFESpace(std::move(mesh), family);
}

AggregateMap aggregate_cells(const ActiveMesh& mesh,
                             const std::vector<double>& cut_fraction,
                             double eta_min) {
  if (eta_min <= 0.0 || eta_min >= 1.0)
    throw std::invalid_argument("aggregate_cells: eta_min must be in (0,1)");
  const BackgroundGrid& g = *mesh.grid;
  AggregateMap map;
  map.root.assign(g.num_cells(), -1);
  map.path_len.assign(g.num_cells(), -1);

  std::vector<int> layer;
  for (int cell : mesh.active_cells) {
    if (mesh.tag[cell] == CellTag::Interior) {
      map.root[cell] = cell;
      map.path_len[cell] = 0;
      layer.push_back(cell);
    }
  }
  bool any_badly = false;
  for (int k = 0; k < mesh.num_active(); ++k)
    any_badly |= (cut_fraction[k] < eta_min);
  if (layer.empty()) {
    if (!any_badly) return map;
    throw std::runtime_error(
        "aggregate_cells: badly cut cells but no interior cell exists");
  }

  // deterministic layered BFS; within a layer smaller cell indices claim
  // their neighbours first
  int depth = 0;
  while (!layer.empty()) {
    ++depth;
    std::sort(layer.begin(), layer.end());
    std::vector<int> next;
    for (int cell : layer) {
      const auto [ir, iz] = g.cell_coords(cell);
      const int nbors[4][2] = {
          {ir - 1, iz}, {ir + 1, iz}, {ir, iz - 1}, {ir, iz + 1}};
      for (const auto& nb : nbors) {
        if (nb[0] < 0 || nb[0] >= g.cells_r() || nb[1] < 0 || nb[1] >= g.cells_z())
          continue;
        const int c = g.cell_index(nb[0], nb[1]);
        if (!mesh.is_active(c) || map.root[c] >= 0) continue;
        map.root[c] = map.root[cell];
        map.path_len[c] = depth;
        next.push_back(c);
      }
    }
    layer = std::move(next);
  }

  for (int k = 0; k < mesh.num_active(); ++k) {
    const int cell = mesh.active_cells[k];
    if (cut_fraction[k] < eta_min && map.root[cell] < 0)
      throw std::runtime_error(
          "aggregate_cells: badly cut cell " + std::to_string(cell) +
          " has no path to an interior cell (under-resolved sliver)");
  }
  return map;
}

void build_agfem_constraints(ConstrainedFESpace& space,
                             const AggregateMap& aggregates,
                             const std::vector<double>& cut_fraction,
                             double eta_min) {
  const ActiveMesh& mesh = space.mesh();
  auto badly = [&](int cell) {
    const int rank = mesh.active_rank[cell];
    return rank >= 0 && cut_fraction[rank] < eta_min;
  };

  const int comps = space.components();
  const int m = space.scalar_nodes_per_cell();
  std::vector<double> N(m);
  for (int rank = 0; rank < space.num_scalar_nodes(); ++rank) {
    const auto& support = space.rank_supports()[rank];
    if (support.empty()) continue;
    bool ill_posed = true;
    for (int cell : support) ill_posed &= badly(cell);
    if (!ill_posed) continue;
    const int owner = *std::min_element(support.begin(), support.end());
    const int root = aggregates.root[owner];
    if (root < 0)
      throw std::runtime_error("build_agfem_constraints: missing aggregate root");
    const Point xa = space.scalar_rank_point(rank);
    space.scalar_basis(root, xa, N.data());
    int root_ranks[9];
    space.cell_scalar_ranks(root, root_ranks);
    for (int comp = 0; comp < comps; ++comp) {
      LinearConstraint con;
      con.masters.reserve(m);
      for (int k = 0; k < m; ++k)
        con.masters.emplace_back(root_ranks[k] * comps + comp, N[k]);
      space.set_constraint(rank * comps + comp, std::move(con));
    }
  }
}

}  // namespace cortexflow
