#pragma once

#include <Eigen/Dense>
#include <memory>
#include <unordered_map>
#include <vector>

#include "cortexflow/levelset.hpp"

namespace cortexflow {

enum class Family { Q2Vector, Q1Vector, Q1Scalar, P1DiscScalar };

// dof = sum_i coeff_i * master_i + offset
struct LinearConstraint {
  std::vector<std::pair<int, double>> masters;
  double offset = 0.0;
};

// Lagrangian FE space on an active mesh with linear DOF constraints (AgFEM
// extrapolation and strong boundary conditions). P1DiscScalar has three
// point-value DOFs per cell anchored at the SW/SE/NW corners, discontinuous
// across faces; the nodal anchors keep the AgFEM coefficients a partition of
// unity.
class ConstrainedFESpace {
 public:
  ConstrainedFESpace(std::shared_ptr<const ActiveMesh> mesh, Family family);

  const ActiveMesh& mesh() const { return *mesh_; }
  std::shared_ptr<const ActiveMesh> mesh_ptr() const { return mesh_; }
  Family family() const { return family_; }
  int components() const {
    return (family_ == Family::Q2Vector || family_ == Family::Q1Vector) ? 2 : 1;
  }
  int scalar_nodes_per_cell() const {
    switch (family_) {
      case Family::Q2Vector: return 9;
      case Family::Q1Vector: return 4;
      case Family::Q1Scalar: return 4;
      case Family::P1DiscScalar: return 3;
    }
    return 0;
  }
  int dofs_per_cell() const { return scalar_nodes_per_cell() * components(); }
  int num_scalar_nodes() const { return static_cast<int>(rank_node_.size()); }
  int num_dofs() const { return num_scalar_nodes() * components(); }

  // Global dof ids of a cell, node-major interleaved components.
  void cell_dofs(int cell, int* out) const;
  // Scalar basis (per node) at a physical point of the cell.
  void scalar_basis(int cell, Point x, double* N) const;
  void scalar_basis_grad(int cell, Point x, Vec2* G) const;

  Point dof_point(int dof) const;
  int dof_component(int dof) const { return dof % components(); }
  int dof_scalar_rank(int dof) const { return dof / components(); }

  // constraints
  void set_constraint(int dof, LinearConstraint c) { constraints_[dof] = std::move(c); }
  void add_dirichlet(int dof, double value) {
    constraints_[dof] = LinearConstraint{{}, value};
  }
  bool is_constrained(int dof) const { return constraints_.count(dof) > 0; }
  const LinearConstraint* constraint(int dof) const {
    auto it = constraints_.find(dof);
    return it == constraints_.end() ? nullptr : &it->second;
  }
  const std::unordered_map<int, LinearConstraint>& constraints() const {
    return constraints_;
  }
  // Folds masters that are themselves constrained (one level); throws on
  // deeper chains.
  void close_constraints();
  // Overwrites constrained entries of a full coefficient vector.
  void apply_constraints(Eigen::VectorXd& coeffs) const;

  // Active cell containing x (false when none).
  bool locate(Point x, int& cell) const;
  // Point evaluation of FE functions given full coefficient vectors.
  double eval_scalar(const Eigen::VectorXd& coeffs, Point x) const;
  Vec2 eval_scalar_grad(const Eigen::VectorXd& coeffs, Point x) const;
  Vec2 eval_vector(const Eigen::VectorXd& coeffs, Point x) const;
  Eigen::Matrix2d eval_vector_grad(const Eigen::VectorXd& coeffs, Point x) const;
  double eval_scalar_on_cell(const Eigen::VectorXd& coeffs, int cell, Point x) const;
  Vec2 eval_vector_on_cell(const Eigen::VectorXd& coeffs, int cell, Point x) const;

  // Scalar ranks of the nodes of a cell (lattice rank or 3*active_rank+k).
  void cell_scalar_ranks(int cell, int* out) const;
  Point scalar_rank_point(int rank) const;
  // Supporting active cells per scalar rank.
  const std::vector<std::vector<int>>& rank_supports() const { return supports_; }

 private:
  std::shared_ptr<const ActiveMesh> mesh_;
  Family family_;
  std::vector<int> node_rank_;  // lattice node -> rank (lattice families)
  std::vector<int> rank_node_;  // rank -> lattice node (or 3*active+k id)
  std::vector<std::vector<int>> supports_;
  std::unordered_map<int, LinearConstraint> constraints_;
};

ConstrainedFESpace build_space(std::shared_ptr<const ActiveMesh> mesh,
                               Family family);

// FE function: a space plus a full coefficient vector (constraints applied).
struct FEField {
  std::shared_ptr<const ConstrainedFESpace> space;
  Eigen::VectorXd coeffs;

  double scalar(Point x) const { return space->eval_scalar(coeffs, x); }
  Vec2 scalar_gradient(Point x) const { return space->eval_scalar_grad(coeffs, x); }
  Vec2 vector(Point x) const { return space->eval_vector(coeffs, x); }
  Eigen::Matrix2d vector_gradient(Point x) const {
    return space->eval_vector_grad(coeffs, x);
  }
  bool evaluable(Point x) const {
    int cell;
    return space && space->locate(x, cell);
  }
};

// Badly-cut cell -> root interior cell, through face-connected active cells.
struct AggregateMap {
  std::vector<int> root;      // per grid cell; -1 when not aggregated
  std::vector<int> path_len;  // BFS layers from the root's seed front
  bool empty() const {
    for (int r : root)
      if (r >= 0) return false;
    return true;
  }
};

// cut_fraction is indexed by active rank. A cell with cut fraction below
// eta_min is badly cut; every badly cut cell must reach an interior cell or
// an error names the offender.
AggregateMap aggregate_cells(const ActiveMesh& mesh,
                             const std::vector<double>& cut_fraction,
                             double eta_min);

// Constrains every ill-posed DOF (all supporting cells badly cut) to the
// extrapolated values of its root cell's DOFs.
void build_agfem_constraints(ConstrainedFESpace& space,
                             const AggregateMap& aggregates,
                             const std::vector<double>& cut_fraction,
                             double eta_min);

}  // namespace cortexflow
