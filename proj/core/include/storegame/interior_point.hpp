#pragma once

#include <cstddef>
#include <initializer_list>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace sg::ipm {

/// Row-compressed sparse matrix, built row by row.
class SparseRows {
 public:
  SparseRows() { start_.push_back(0); }

  /// Appends a row; columns need not be sorted but must be distinct.
  int add_row(std::initializer_list<std::pair<int, double>> entries);
  int add_row(const std::vector<std::pair<int, double>>& entries);

  int rows() const noexcept { return static_cast<int>(start_.size()) - 1; }
  int begin(int row) const noexcept { return start_[static_cast<std::size_t>(row)]; }
  int end(int row) const noexcept { return start_[static_cast<std::size_t>(row) + 1]; }
  int col(int idx) const noexcept { return col_[static_cast<std::size_t>(idx)]; }
  double val(int idx) const noexcept { return val_[static_cast<std::size_t>(idx)]; }

  void multiply(const double* x, double* y) const noexcept;                // y = A x
  void multiply_transpose_add(const double* x, double* y) const noexcept;  // y += A' x

 private:
  std::vector<int> start_;
  std::vector<int> col_;
  std::vector<double> val_;
};

/// min 1/2 z'Gz + c'z  s.t.  A z <= b, for G positive semidefinite and G + A'A banded.
struct Problem {
  struct Entry {
    int row;
    int col;
    double value;
  };

  int n = 0;
  std::vector<Entry> hessian;  // lower triangle (row >= col); duplicates are summed
  Eigen::VectorXd c;
  SparseRows A;
  Eigen::VectorXd b;
};

struct Settings {
  double primal_tol = 1e-11;
  double dual_tol = 1e-8;
  double gap_tol = 1e-13;
  int max_iterations = 200;
  double step_fraction = 0.995;
};

enum class Status { converged, max_iterations, numerical_error };

struct Result {
  Status status = Status::numerical_error;
  Eigen::VectorXd z;
  Eigen::VectorXd slack;
  Eigen::VectorXd multipliers;
  int iterations = 0;
  double primal_residual = 0.0;  // ||Az + s - b||_inf / (1 + ||b||_inf)
  double dual_residual = 0.0;    // ||Gz + c + A'lambda||_inf / (1 + ||c||_inf)
  double gap = 0.0;              // s'lambda / rows
};

/// Cholesky factorization restricted to a band of half-width `bandwidth`.
class BandCholesky {
 public:
  BandCholesky(int n, int bandwidth);

  /// Row i of the lower triangle holds columns i - bandwidth .. i.
  std::size_t offset(int i, int j) const noexcept {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(bw_ + 1) +
           static_cast<std::size_t>(j - i + bw_);
  }
  double* data() noexcept { return data_.data(); }
  std::size_t storage_size() const noexcept { return data_.size(); }
  void set_zero();
  /// Adds v to entry (i, j); requires 0 <= i - j <= bandwidth.
  void add(int i, int j, double v) noexcept { data_[offset(i, j)] += v; }
  double get(int i, int j) const noexcept { return data_[offset(i, j)]; }

  /// Factors in place. Non-positive pivots are replaced by a huge value (the corresponding
  /// direction is frozen). Returns the number of replaced pivots.
  int factor() noexcept;
  void solve_in_place(double* x) const noexcept;

  int size() const noexcept { return n_; }
  int bandwidth() const noexcept { return bw_; }

 private:
  int n_;
  int bw_;
  std::vector<double> data_;
};

/// The parts of a problem that do not depend on its linear term, precomputed for repeated solves.
class Structure {
 public:
  explicit Structure(Problem problem);

  const Problem& problem() const noexcept { return p_; }
  int bandwidth() const noexcept { return bw_; }

  /// Mehrotra predictor-corrector on the banded normal equations. Thread-safe.
  Result solve(const Eigen::VectorXd& c, const Settings& settings = {}) const;
  Result solve(const Settings& settings = {}) const { return solve(p_.c, settings); }

  /// Holds the rows flagged in `active` as equalities, solves the resulting equality-constrained
  /// problem and checks the point against the full problem. Violated rows are added and rows
  /// with negative multipliers dropped, up to `max_changes` times. Returns status converged
  /// only for a verified optimum; `active` is updated to the final working set.
  Result solve_active(const Eigen::VectorXd& c, std::vector<char>& active,
                      const Eigen::VectorXd& lambda0, const Settings& settings = {},
                      int max_changes = 6) const;

 private:
  void form_normal(const double* w, BandCholesky& chol) const noexcept;

  Problem p_;
  int bw_ = 0;
  std::vector<double> hessian_band_;
  // Row r of A contributes w_r * pair_coef_[i] at band offset pair_offset_[i], for i in
  // pair_start_[r] .. pair_start_[r+1].
  std::vector<int> pair_start_;
  std::vector<std::size_t> pair_offset_;
  std::vector<double> pair_coef_;
  // Hessian as a symmetric triplet list with duplicates merged.
  std::vector<Problem::Entry> merged_;
};

inline Result solve(const Problem& problem, const Settings& settings = {}) {
  return Structure(problem).solve(settings);
}

}  // namespace sg::ipm
