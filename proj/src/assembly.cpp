#include "cortexflow/assembly.hpp"

#include <fstream>
#include <stdexcept>

namespace cortexflow {

SystemAssembler::SystemAssembler(std::vector<const ConstrainedFESpace*> spaces)
    : spaces_(std::move(spaces)) {
  offsets_.resize(spaces_.size() + 1, 0);
  for (size_t s = 0; s < spaces_.size(); ++s)
    offsets_[s + 1] = offsets_[s] + spaces_[s]->num_dofs();
  free_index_.assign(offsets_.back(), -1);
  for (size_t s = 0; s < spaces_.size(); ++s) {
    for (int d = 0; d < spaces_[s]->num_dofs(); ++d) {
      if (!spaces_[s]->is_constrained(d)) {
        free_index_[offsets_[s] + d] = num_free_;
        free_dofs_.push_back(offsets_[s] + d);
        ++num_free_;
      }
    }
  }
  rhs_ = Eigen::VectorXd::Zero(num_free_);
  rhs_shift_ = Eigen::VectorXd::Zero(num_free_);
}

void SystemAssembler::expand_dof(int gdof,
                                 std::vector<std::pair<int, double>>& out,
                                 double& offset) const {
  out.clear();
  offset = 0.0;
  const int fi = free_index_[gdof];
  if (fi >= 0) {
    out.emplace_back(fi, 1.0);
    return;
  }
  // find owning space
  int s = 0;
  while (gdof >= offsets_[s + 1]) ++s;
  const LinearConstraint* con = spaces_[s]->constraint(gdof - offsets_[s]);
  if (!con) throw std::logic_error("expand_dof: dangling dof");
  offset = con->offset;
  for (const auto& [m, c] : con->masters) {
    const int mi = free_index_[offsets_[s] + m];
    if (mi < 0) throw std::logic_error("expand_dof: master is constrained");
    out.emplace_back(mi, c);
  }
}

void SystemAssembler::add_block(const std::vector<int>& rows,
                                const std::vector<int>& cols,
                                const Eigen::MatrixXd& B) {
  if (B.rows() != static_cast<Eigen::Index>(rows.size()) ||
      B.cols() != static_cast<Eigen::Index>(cols.size()))
    throw std::invalid_argument("add_block: dimension mismatch");
  std::vector<std::pair<int, double>> re, ce;
  double roff, coff;
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < cols.size(); ++j) {
      const double v = B(i, j);
      if (v == 0.0) continue;
      expand_dof(rows[i], re, roff);
      expand_dof(cols[j], ce, coff);
      for (const auto& [ri, rc] : re) {
        for (const auto& [ci, cc] : ce)
          triplets_.emplace_back(ri, ci, rc * v * cc);
        // inhomogeneous column offset moves to the right-hand side
        if (coff != 0.0) rhs_shift_[ri] -= rc * v * coff;
      }
    }
  }
}

void SystemAssembler::add_scalar_constraint(int space,
                                            const Eigen::VectorXd& row,
                                            double rhs) {
  if (row.size() != spaces_[space]->num_dofs())
    throw std::invalid_argument("add_scalar_constraint: size mismatch");
  std::vector<Eigen::Triplet<double>> reduced;
  std::vector<std::pair<int, double>> ce;
  double coff;
  double rhs_adj = rhs;
  const int k = static_cast<int>(border_rows_.size());
  for (int d = 0; d < row.size(); ++d) {
    const double v = row[d];
    if (v == 0.0) continue;
    expand_dof(offsets_[space] + d, ce, coff);
    for (const auto& [ci, cc] : ce) reduced.emplace_back(k, ci, v * cc);
    rhs_adj -= v * coff;
  }
  border_rows_.push_back(std::move(reduced));
  border_rhs_.push_back(rhs_adj);
}

void SystemAssembler::add_rhs(const std::vector<int>& rows,
                              const Eigen::VectorXd& v) {
  if (v.size() != static_cast<Eigen::Index>(rows.size()))
    throw std::invalid_argument("add_rhs: size mismatch");
  std::vector<std::pair<int, double>> re;
  double roff;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (v[i] == 0.0) continue;
    expand_dof(rows[i], re, roff);
    for (const auto& [ri, rc] : re) rhs_[ri] += rc * v[i];
  }
}

void SystemAssembler::clear_rhs() { rhs_.setZero(); }

Eigen::SparseMatrix<double> SystemAssembler::build_matrix() const {
  const int n = system_size();
  std::vector<Eigen::Triplet<double>> trip = triplets_;
  trip.reserve(trip.size() + 2 * border_rows_.size() * 8 + border_rows_.size());
  for (size_t k = 0; k < border_rows_.size(); ++k) {
    for (const auto& t : border_rows_[k]) {
      trip.emplace_back(num_free_ + static_cast<int>(k), t.col(), t.value());
      trip.emplace_back(t.col(), num_free_ + static_cast<int>(k), t.value());
    }
  }
  Eigen::SparseMatrix<double> A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  A.makeCompressed();
  return A;
}

Eigen::VectorXd SystemAssembler::build_rhs() const {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(system_size());
  b.head(num_free_) = rhs_ + rhs_shift_;
  for (size_t k = 0; k < border_rhs_.size(); ++k)
    b[num_free_ + static_cast<int>(k)] = border_rhs_[k];
  return b;
}

SparseSystem SystemAssembler::build() const {
  SparseSystem sys;
  sys.A = build_matrix();
  sys.b = build_rhs();
  sys.num_free = num_free_;
  sys.num_multipliers = num_multipliers();
  return sys;
}

Eigen::VectorXd SystemAssembler::expand(int space,
                                        const Eigen::VectorXd& reduced) const {
  const ConstrainedFESpace& sp = *spaces_[space];
  Eigen::VectorXd full = Eigen::VectorXd::Zero(sp.num_dofs());
  for (int d = 0; d < sp.num_dofs(); ++d) {
    const int fi = free_index_[offsets_[space] + d];
    if (fi >= 0) full[d] = reduced[fi];
  }
  sp.apply_constraints(full);
  return full;
}

void DirectSolver::factorize(const Eigen::SparseMatrix<double>& A) {
  A_ = A;
  lu_.compute(A_);
  if (lu_.info() != Eigen::Success)
    throw std::runtime_error(
        "DirectSolver: factorization failed (singular system; missing "
        "constraints or floating dofs)");
  factorized_ = true;
}

Eigen::VectorXd DirectSolver::solve(const Eigen::VectorXd& rhs) const {
  if (!factorized_) throw std::logic_error("DirectSolver: not factorized");
  Eigen::VectorXd x = lu_.solve(rhs);
  const double bn = std::max(rhs.lpNorm<Eigen::Infinity>(), 1e-300);
  double res = (A_ * x - rhs).lpNorm<Eigen::Infinity>() / bn;
  if (res > 1e-10) {
    x += lu_.solve(rhs - A_ * x);  // one step of iterative refinement
    res = (A_ * x - rhs).lpNorm<Eigen::Infinity>() / bn;
  }
  if (res > 1e-10)
    throw std::runtime_error("DirectSolver: residual " + std::to_string(res) +
                             " exceeds tolerance");
  return x;
}

void write_matrix_market(const Eigen::SparseMatrix<double>& A,
                         const std::string& path) {
  std::ofstream out(path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << A.rows() << " " << A.cols() << " " << A.nonZeros() << "\n";
  for (int k = 0; k < A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(A, k); it; ++it)
      out << it.row() + 1 << " " << it.col() + 1 << " " << it.value() << "\n";
}

}  // namespace cortexflow
