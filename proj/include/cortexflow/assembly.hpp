#pragma once

#include <Eigen/Sparse>
#include <memory>
#include <string>
#include <vector>

#include "cortexflow/fe_space.hpp"

namespace cortexflow {

struct SparseSystem {
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd b;
  int num_free = 0;         // free dofs before the multiplier border
  int num_multipliers = 0;  // bordered scalar constraints
};

// Constrained assembly over one or more spaces. Constrained DOFs are
// eliminated by substituting their master expansion on both sides; global
// scalar constraints become bordered rows/columns with Lagrange multipliers.
// Matrix and right-hand side accumulate independently so a factorization can
// be reused across right-hand sides.
class SystemAssembler {
 public:
  explicit SystemAssembler(std::vector<const ConstrainedFESpace*> spaces);

  int num_spaces() const { return static_cast<int>(spaces_.size()); }
  int space_offset(int s) const { return offsets_[s]; }
  int total_dofs() const { return offsets_.back(); }
  int num_free() const { return num_free_; }
  int num_multipliers() const { return static_cast<int>(border_rows_.size()); }
  int system_size() const { return num_free_ + num_multipliers(); }
  int free_index(int global_dof) const { return free_index_[global_dof]; }

  // Dense block with rows/cols in global dof ids (space offsets applied).
  void add_block(const std::vector<int>& rows, const std::vector<int>& cols,
                 const Eigen::MatrixXd& B);
  // Scalar constraint sum_i row_i u_i = rhs over one space's dofs.
  void add_scalar_constraint(int space, const Eigen::VectorXd& row, double rhs);

  void add_rhs(const std::vector<int>& rows, const Eigen::VectorXd& v);
  void clear_rhs();

  Eigen::SparseMatrix<double> build_matrix() const;
  Eigen::VectorXd build_rhs() const;
  SparseSystem build() const;

  // Expands a solution of the reduced system into a full coefficient vector
  // for one space (constraints applied).
  Eigen::VectorXd expand(int space, const Eigen::VectorXd& reduced) const;
  double multiplier(const Eigen::VectorXd& reduced, int k) const {
    return reduced[num_free_ + k];
  }

 private:
  std::vector<const ConstrainedFESpace*> spaces_;
  std::vector<int> offsets_;
  std::vector<int> free_index_;  // per global dof: reduced index or -1
  std::vector<int> free_dofs_;   // reduced index -> global dof
  int num_free_ = 0;
  std::vector<Eigen::Triplet<double>> triplets_;
  Eigen::VectorXd rhs_;               // reduced indexing, matrix shifts included
  Eigen::VectorXd rhs_shift_;         // from inhomogeneous constraint columns
  std::vector<std::vector<Eigen::Triplet<double>>> border_rows_;  // reduced cols
  std::vector<double> border_rhs_;

  void expand_dof(int gdof, std::vector<std::pair<int, double>>& out,
                  double& offset) const;
};

// Sparse LU with a relative residual check (one refinement step if needed).
class DirectSolver {
 public:
  void factorize(const Eigen::SparseMatrix<double>& A);
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  bool factorized() const { return factorized_; }

 private:
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
  Eigen::SparseMatrix<double> A_;
  bool factorized_ = false;
};

void write_matrix_market(const Eigen::SparseMatrix<double>& A,
                         const std::string& path);

}  // namespace cortexflow
