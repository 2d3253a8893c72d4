#include "storegame/qp.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "storegame/errors.hpp"

namespace sg {

QuadraticProgram assemble_qp(const MarketInstance& market, double eps0, std::size_t max_variables) {
  const int M = market.num_firms();
  const int K = market.intervals();
  const std::size_t n = 2u * static_cast<std::size_t>(M) * static_cast<std::size_t>(K);
  if (n > max_variables) {
    std::ostringstream os;
    os << "assemble_qp: " << n << " variables exceed the configured limit of " << max_variables;
    throw InvalidInput(os.str());
  }
  const int MK = M * K;
  const double dt = market.time_grid().delta();
  const auto& gen = market.generator();
  const auto& load = market.net_load();

  QuadraticProgram qp;
  qp.firms = M;
  qp.intervals = K;
  qp.eps0 = eps0;

  qp.Q = Eigen::MatrixXd::Zero(2 * MK, 2 * MK);
  for (int k = 0; k < K; ++k)
    qp.Q.block(k * M, k * M, M, M).setOnes();
  qp.Q.diagonal().array() += eps0;

  qp.r.resize(2 * MK);
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m) {
      qp.r(qp.p_index(m, k)) = load[k];
      qp.r(qp.chg_index(m, k)) = market.firm(m).bid / gen.a;
    }

  const int rows = 4 * MK + K;
  qp.H = Eigen::MatrixXd::Zero(rows, 2 * MK);
  qp.g = Eigen::VectorXd::Zero(rows);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(MK, MK);
  // H1 = [I, -I], H2 = [0, -I]
  qp.H.block(qp.row_split(), 0, MK, MK) = I;
  qp.H.block(qp.row_split(), MK, MK, MK) = -I;
  qp.H.block(qp.row_chg_nonneg(), MK, MK, MK) = -I;
  // H3: block lower-triangular of identities (cumulative power per firm)
  for (int kr = 0; kr < K; ++kr)
    for (int kc = 0; kc <= kr; ++kc) {
      qp.H.block(qp.row_soc_upper() + kr * M, kc * M, M, M) = Eigen::MatrixXd::Identity(M, M);
      qp.H.block(qp.row_soc_lower() + kr * M, kc * M, M, M) = -Eigen::MatrixXd::Identity(M, M);
    }
  // H4: row k sums the M powers of step k
  for (int k = 0; k < K; ++k)
    qp.H.block(qp.row_floor() + k, k * M, 1, M).setConstant(-1.0);

  for (int k = 0; k < K; ++k) {
    for (int m = 0; m < M; ++m) {
      const auto& f = market.firm(m);
      qp.g(qp.row_soc_upper() + k * M + m) = (f.e_max - f.e_0) / dt;
      qp.g(qp.row_soc_lower() + k * M + m) = f.e_0 / dt;
    }
    qp.g(qp.row_floor() + k) = load[k] - gen.p_g_min;
  }

  // H5 = [I I ... I]: one periodicity row per firm.
  qp.Heq = Eigen::MatrixXd::Zero(M, 2 * MK);
  for (int k = 0; k < K; ++k) qp.Heq.block(0, k * M, M, M) = Eigen::MatrixXd::Identity(M, M);
  qp.geq = Eigen::VectorXd::Zero(M);
  return qp;
}

namespace {

void dump_matrix(std::ostringstream& os, const char* name, const Eigen::MatrixXd& A) {
  os << name << ' ' << A.rows() << ' ' << A.cols() << '\n';
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      if (A(i, j) != 0.0) os << i << ' ' << j << ' ' << A(i, j) << '\n';
}

void dump_vector(std::ostringstream& os, const char* name, const Eigen::VectorXd& v) {
  os << name << ' ' << v.size() << '\n';
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v(i) != 0.0) os << i << " 0 " << v(i) << '\n';
}

}  // namespace

std::string dump_triplets(const QuadraticProgram& qp) {
  std::ostringstream os;
  os << std::setprecision(17);
  dump_matrix(os, "Q", qp.Q);
  dump_vector(os, "r", qp.r);
  dump_matrix(os, "Hineq", qp.H);
  dump_vector(os, "g", qp.g);
  dump_matrix(os, "Heq", qp.Heq);
  return os.str();
}

namespace {

template <typename Program>
KktResiduals kkt_impl(const Program& qp, const Eigen::VectorXd& r, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& mu, double base_power) {
  const double s = base_power;
  const Eigen::VectorXd xs = x / s;
  const Eigen::VectorXd mus = mu / s;
  const Eigen::VectorXd slack = qp.g / s - qp.H * xs;

  KktResiduals out;
  Eigen::VectorXd grad = qp.Q * xs;
  grad += r / s;
  grad += qp.H.transpose() * mus;
  // Equality multipliers minimizing the stationarity residual.
  const Eigen::MatrixXd A = Eigen::MatrixXd(qp.Heq * qp.Heq.transpose());
  const Eigen::VectorXd hg = qp.Heq * grad;
  out.equality_multipliers = -A.ldlt().solve(hg);
  grad += qp.Heq.transpose() * out.equality_multipliers;
  out.stationarity = grad.lpNorm<Eigen::Infinity>();

  out.primal = std::max(0.0, (-slack).maxCoeff());
  const Eigen::VectorXd eq = qp.Heq * xs - qp.geq / s;
  out.primal = std::max(out.primal, eq.lpNorm<Eigen::Infinity>());
  out.dual = std::max(0.0, (-mus).maxCoeff());
  out.complementarity = (mus.array() * slack.array()).abs().maxCoeff();
  out.equality_multipliers *= s;
  return out;
}

}  // namespace

SparseQuadraticProgram::SparseQuadraticProgram(const QuadraticProgram& qp)
    : Q(qp.Q.sparseView()), r(qp.r), H(qp.H.sparseView()), g(qp.g), Heq(qp.Heq.sparseView()),
      geq(qp.geq) {}

KktResiduals kkt_residuals(const QuadraticProgram& qp, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& mu, double base_power) {
  return kkt_impl(qp, qp.r, x, mu, base_power);
}

KktResiduals kkt_residuals(const SparseQuadraticProgram& qp, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& mu, double base_power, const Eigen::VectorXd* r) {
  return kkt_impl(qp, r ? *r : qp.r, x, mu, base_power);
}

}  // namespace sg
