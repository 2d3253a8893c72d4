#pragma once

#include <cstddef>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "storegame/model.hpp"

namespace sg {

/// The operator's dispatch problem in matrix form:
///   min 1/2 x'Qx + r'x   s.t.   H x <= g,   Heq x = geq,
/// with x = (P, P_chg) and entries of each block ordered firm-major within each time step,
/// i.e. index k*M + m.
struct QuadraticProgram {
  int firms = 0;
  int intervals = 0;
  double eps0 = 0.0;

  Eigen::MatrixXd Q;
  Eigen::VectorXd r;
  Eigen::MatrixXd H;  // rows: H1, H2, H3, -H3, -H4
  Eigen::VectorXd g;
  Eigen::MatrixXd Heq;  // H5 padded with zeros for P_chg
  Eigen::VectorXd geq;

  int num_variables() const noexcept { return 2 * firms * intervals; }
  int p_index(int m, int k) const noexcept { return k * firms + m; }
  int chg_index(int m, int k) const noexcept { return firms * intervals + k * firms + m; }

  // First row of each inequality block.
  int row_split() const noexcept { return 0; }                     // p - p_chg <= 0
  int row_chg_nonneg() const noexcept { return firms * intervals; }  // -p_chg <= 0
  int row_soc_upper() const noexcept { return 2 * firms * intervals; }
  int row_soc_lower() const noexcept { return 3 * firms * intervals; }
  int row_floor() const noexcept { return 4 * firms * intervals; }  // -sum_m p <= p_L - p_g_min

  double objective(const Eigen::VectorXd& x) const { return 0.5 * x.dot(Q * x) + r.dot(x); }
};

inline constexpr double kDefaultEps0 = 1e-8;
inline constexpr std::size_t kDefaultMaxVariables = 2048;

/// Throws InvalidInput when 2*M*K exceeds max_variables.
QuadraticProgram assemble_qp(const MarketInstance& market, double eps0 = kDefaultEps0,
                             std::size_t max_variables = kDefaultMaxVariables);

/// Plain-text sparse dump: one "row col value" triplet per line under Q/r/Hineq/g/Heq headers.
std::string dump_triplets(const QuadraticProgram& qp);

/// KKT residuals on the per-unit problem (powers divided by base_power, objective by base_power^2).
struct KktResiduals {
  double stationarity = 0.0;
  double complementarity = 0.0;
  double primal = 0.0;
  double dual = 0.0;
  Eigen::VectorXd equality_multipliers;

  double kkt() const noexcept { return std::max(stationarity, complementarity); }
};

/// `mu` are inequality multipliers in original units. Equality multipliers are recovered by
/// least squares, so stationarity measures the distance of the gradient from the span of the
/// equality rows.
KktResiduals kkt_residuals(const QuadraticProgram& qp, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& mu, double base_power);

/// The same program with sparse matrices, for repeated evaluation.
struct SparseQuadraticProgram {
  explicit SparseQuadraticProgram(const QuadraticProgram& qp);

  Eigen::SparseMatrix<double> Q;
  Eigen::VectorXd r;
  Eigen::SparseMatrix<double> H;
  Eigen::VectorXd g;
  Eigen::SparseMatrix<double> Heq;
  Eigen::VectorXd geq;
};

/// `r`, when given, replaces the program's linear term.
KktResiduals kkt_residuals(const SparseQuadraticProgram& qp, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& mu, double base_power,
                           const Eigen::VectorXd* r = nullptr);

}  // namespace sg
