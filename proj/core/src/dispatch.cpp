#include "storegame/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "storegame/errors.hpp"

namespace sg {

struct DispatchWarmStart {
  const void* owner = nullptr;
  std::vector<char> active;
  Eigen::VectorXd multipliers;
};

std::string_view to_string(DispatchStatus status) {
  switch (status) {
    case DispatchStatus::optimal:
      return "optimal";
    case DispatchStatus::infeasible:
      return "infeasible";
    case DispatchStatus::numerical_failure:
      return "numerical_failure";
  }
  return "unknown";
}

double base_power(const MarketInstance& market) {
  double s = std::max(1.0, market.generator().p_g_min);
  for (double v : market.net_load().values()) s = std::max(s, std::abs(v));
  return s;
}

std::string row_label(const QuadraticProgram& qp, int row) {
  const int M = qp.firms;
  const int MK = qp.firms * qp.intervals;
  std::ostringstream os;
  auto firm_step = [&](const char* name, int i) {
    os << name << "[firm=" << i % M << ", k=" << i / M << ']';
  };
  if (row < qp.row_chg_nonneg()) {
    firm_step("charging_split", row);
  } else if (row < qp.row_soc_upper()) {
    firm_step("charging_nonneg", row - MK);
  } else if (row < qp.row_soc_lower()) {
    firm_step("soc_upper", row - 2 * MK);
  } else if (row < qp.row_floor()) {
    firm_step("soc_lower", row - 3 * MK);
  } else {
    os << "generation_floor[k=" << row - 4 * MK << ']';
  }
  return os.str();
}

namespace {

// The QP rewritten in cumulative-power coordinates y_{m,k} = sum_{j<=k} p_{m,j} / S, in which
// H3 becomes a pair of simple bounds and every matrix is banded. Periodicity fixes
// y_{m,K-1} = 0, so those variables (and the cumulative rows at k = K-1, which periodicity
// makes constant) are eliminated. Firms without capacity have p identically zero.
class CumulativeForm {
 public:
  enum class RowKind { split, chg_nonneg, soc_upper, soc_lower, floor };
  struct RowTag {
    RowKind kind;
    int m;
    int k;
  };

  CumulativeForm(const MarketInstance& market, double eps0, double scale)
      : M_(market.num_firms()), K_(market.intervals()), S_(scale) {
    const auto& gen = market.generator();
    const auto& load = market.net_load();
    const double dt = market.time_grid().delta();

    y_index_.assign(static_cast<std::size_t>(M_ * K_), -1);
    chg_index_.assign(static_cast<std::size_t>(M_ * K_), -1);
    int n = 0;
    for (int k = 0; k < K_; ++k) {
      for (int m = 0; m < M_; ++m)
        if (k < K_ - 1 && market.firm(m).e_max > 0.0) y_index_[at(m, k)] = n++;
      for (int m = 0; m < M_; ++m) chg_index_[at(m, k)] = n++;
    }
    prob_.n = n;
    prob_.c = Eigen::VectorXd::Zero(n);

    // Objective: 1/2 sum_k (sum_m p)^2 + sum_k pL_k sum_m p + sum (c_m/a) p_chg + eps0/2 |x|^2.
    for (int k = 0; k < K_; ++k) {
      std::vector<std::pair<int, double>> step;
      for (int m = 0; m < M_; ++m) {
        const auto pm = power_terms(m, k);
        step.insert(step.end(), pm.begin(), pm.end());
        add_outer(pm, eps0);
      }
      add_outer(step, 1.0);
      for (const auto& [col, v] : step) prob_.c(col) += load[k] / S_ * v;
      for (int m = 0; m < M_; ++m) {
        const int c = chg_index_[at(m, k)];
        prob_.hessian.push_back({c, c, eps0});
      }
    }

    std::vector<double> rhs;
    for (int k = 0; k < K_; ++k)
      for (int m = 0; m < M_; ++m) {
        auto row = power_terms(m, k);
        row.emplace_back(chg_index_[at(m, k)], -1.0);
        prob_.A.add_row(row);
        rhs.push_back(0.0);
        tags_.push_back({RowKind::split, m, k});
      }
    for (int k = 0; k < K_; ++k)
      for (int m = 0; m < M_; ++m) {
        prob_.A.add_row({{chg_index_[at(m, k)], -1.0}});
        rhs.push_back(0.0);
        tags_.push_back({RowKind::chg_nonneg, m, k});
      }
    for (int k = 0; k < K_; ++k)
      for (int m = 0; m < M_; ++m) {
        const int y = y_index_[at(m, k)];
        if (y < 0) continue;
        const auto& f = market.firm(m);
        prob_.A.add_row({{y, 1.0}});
        rhs.push_back((f.e_max - f.e_0) / dt / S_);
        tags_.push_back({RowKind::soc_upper, m, k});
        prob_.A.add_row({{y, -1.0}});
        rhs.push_back(f.e_0 / dt / S_);
        tags_.push_back({RowKind::soc_lower, m, k});
      }
    for (int k = 0; k < K_; ++k) {
      std::vector<std::pair<int, double>> row;
      for (int m = 0; m < M_; ++m)
        for (const auto& [col, v] : power_terms(m, k)) row.emplace_back(col, -v);
      if (row.empty()) {
        // No storage can act at this step; the row is a constant that the screen already checked.
        continue;
      }
      prob_.A.add_row(row);
      rhs.push_back((load[k] - gen.p_g_min) / S_);
      tags_.push_back({RowKind::floor, -1, k});
    }
    prob_.b = Eigen::Map<Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
    inv_a_ = 1.0 / gen.a;
  }

  const ipm::Problem& problem() const noexcept { return prob_; }

  /// The linear term of the objective for a given bid vector.
  Eigen::VectorXd linear_term(std::span<const double> bids) const {
    Eigen::VectorXd c = prob_.c;
    for (int k = 0; k < K_; ++k)
      for (int m = 0; m < M_; ++m)
        c(chg_index_[at(m, k)]) += bids[static_cast<std::size_t>(m)] * inv_a_ / S_;
    return c;
  }

  void extract(const Eigen::VectorXd& z, Eigen::MatrixXd& p, Eigen::MatrixXd& chg) const {
    p.setZero(M_, K_);
    chg.setZero(M_, K_);
    for (int m = 0; m < M_; ++m)
      for (int k = 0; k < K_; ++k) {
        double v = 0.0;
        for (const auto& [col, c] : power_terms(m, k)) v += c * z(col);
        p(m, k) = S_ * v;
        chg(m, k) = S_ * z(chg_index_[at(m, k)]);
      }
  }

  /// Inequality multipliers in the assembled QP's row order and original units.
  Eigen::VectorXd assembled_multipliers(const QuadraticProgram& qp, const Eigen::VectorXd& lam,
                                        const Eigen::MatrixXd& p, const Eigen::VectorXd& load,
                                        const MarketInstance& market) const {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(qp.H.rows());
    for (std::size_t i = 0; i < tags_.size(); ++i) {
      const auto& t = tags_[i];
      const double v = S_ * lam(static_cast<Eigen::Index>(i));
      const int idx = t.k * M_ + t.m;
      switch (t.kind) {
        case RowKind::split:
          mu(qp.row_split() + idx) += v;
          break;
        case RowKind::chg_nonneg:
          mu(qp.row_chg_nonneg() + idx) += v;
          break;
        case RowKind::soc_upper:
          mu(qp.row_soc_upper() + idx) += v;
          break;
        case RowKind::soc_lower:
          mu(qp.row_soc_lower() + idx) += v;
          break;
        case RowKind::floor:
          mu(qp.row_floor() + t.k) += v;
          break;
      }
    }
    // Firms without capacity have no cumulative variables; their state-of-charge rows are all
    // active and their multipliers follow from stationarity in p.
    for (int m = 0; m < M_; ++m) {
      if (market.firm(m).e_max > 0.0) continue;
      std::vector<double> t(static_cast<std::size_t>(K_));
      for (int k = 0; k < K_; ++k) {
        const double q = p.col(k).sum() + load(k) + qp.eps0 * p(m, k);
        t[static_cast<std::size_t>(k)] =
            -(q + mu(qp.row_split() + k * M_ + m) - mu(qp.row_floor() + k));
      }
      for (int k = 0; k + 1 < K_; ++k) {
        const double d = t[static_cast<std::size_t>(k)] - t[static_cast<std::size_t>(k) + 1];
        mu(qp.row_soc_upper() + k * M_ + m) = std::max(d, 0.0);
        mu(qp.row_soc_lower() + k * M_ + m) = std::max(-d, 0.0);
      }
    }
    return mu;
  }

 private:
  std::size_t at(int m, int k) const noexcept { return static_cast<std::size_t>(k * M_ + m); }

  // p_{m,k} / S as a combination of cumulative variables.
  std::vector<std::pair<int, double>> power_terms(int m, int k) const {
    std::vector<std::pair<int, double>> out;
    const int y = y_index_[at(m, k)];
    if (y >= 0) out.emplace_back(y, 1.0);
    if (k > 0) {
      const int yp = y_index_[at(m, k - 1)];
      if (yp >= 0) out.emplace_back(yp, -1.0);
    }
    return out;
  }

  void add_outer(const std::vector<std::pair<int, double>>& v, double weight) {
    for (std::size_t a = 0; a < v.size(); ++a)
      for (std::size_t b = 0; b <= a; ++b) {
        int i = v[a].first;
        int j = v[b].first;
        double val = weight * v[a].second * v[b].second;
        if (i < j) std::swap(i, j);
        if (a != b && i == j) val *= 2.0;
        prob_.hessian.push_back({i, j, val});
      }
  }

  int M_;
  int K_;
  double S_;
  double inv_a_ = 0.0;
  std::vector<int> y_index_;
  std::vector<int> chg_index_;
  std::vector<RowTag> tags_;
  ipm::Problem prob_;
};

void snap(Eigen::MatrixXd& a, double tol) {
  for (Eigen::Index i = 0; i < a.size(); ++i)
    if (std::abs(a.data()[i]) < tol) a.data()[i] = 0.0;
}

// Solves sum_m clamp(tau * w_m, lo_m, hi_m) = 1 for tau.
std::vector<double> water_fill(const std::vector<double>& w, const std::vector<double>& lo,
                               const std::vector<double>& hi) {
  auto total = [&](double tau) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) s += std::clamp(tau * w[i], lo[i], hi[i]);
    return s;
  };
  double a = 0.0;
  double b = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) b = std::max(b, hi[i] / w[i]);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (a + b);
    (total(mid) < 1.0 ? a : b) = mid;
  }
  std::vector<double> theta(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) theta[i] = std::clamp(b * w[i], lo[i], hi[i]);
  return theta;
}

// Equal bids leave the split between firms undetermined; redistribute each equal-bid group's
// aggregate trajectory by shares theta_m, chosen as close to the split rule's target as the
// state-of-charge limits permit.
void reallocate_ties(const MarketInstance& market, std::span<const double> bids, SplitRule rule,
                     Eigen::MatrixXd& p, Eigen::MatrixXd& chg) {
  const int M = market.num_firms();
  const int K = market.intervals();
  const double dt = market.time_grid().delta();
  std::map<double, std::vector<int>> groups;
  for (int m = 0; m < M; ++m) groups[bids[static_cast<std::size_t>(m)]].push_back(m);

  for (const auto& [bid, members] : groups) {
    if (members.size() < 2) continue;
    Eigen::VectorXd pa = Eigen::VectorXd::Zero(K);
    Eigen::VectorXd ca = Eigen::VectorXd::Zero(K);
    for (int m : members) {
      pa += p.row(m).transpose();
      ca += chg.row(m).transpose();
    }
    std::vector<double> w, lo, hi;
    for (int m : members) {
      const auto& f = market.firm(m);
      double l = 0.0;
      double h = 1.0;
      double cum = 0.0;
      const double tol = 1e-9 * std::max(1.0, f.e_max);
      for (int k = 0; k < K; ++k) {
        cum += dt * pa(k);
        if (cum > tol) {
          h = std::min(h, (f.e_max - f.e_0) / cum);
        } else if (cum < -tol) {
          h = std::min(h, f.e_0 / -cum);
        }
      }
      w.push_back(rule == SplitRule::fair ? 1.0 : std::max(f.e_max, 1e-12));
      lo.push_back(l);
      hi.push_back(std::max(h, 0.0));
    }
    double sum_hi = 0.0;
    for (double h : hi) sum_hi += h;
    if (sum_hi < 1.0 - 1e-12) continue;  // no proportional split fits; keep the solver's
    const auto theta = water_fill(w, lo, hi);
    for (std::size_t i = 0; i < members.size(); ++i) {
      p.row(members[i]) = theta[i] * pa.transpose();
      chg.row(members[i]) = theta[i] * ca.transpose();
    }
  }
}

Eigen::VectorXd stack(const Eigen::MatrixXd& p, const Eigen::MatrixXd& chg) {
  const Eigen::Index M = p.rows();
  const Eigen::Index K = p.cols();
  Eigen::VectorXd x(2 * M * K);
  for (Eigen::Index k = 0; k < K; ++k)
    for (Eigen::Index m = 0; m < M; ++m) {
      x(k * M + m) = p(m, k);
      x(M * K + k * M + m) = chg(m, k);
    }
  return x;
}

}  // namespace

struct DispatchSolver::Impl {
  Impl(const MarketInstance& mk, const DispatchConfig& cfg)
      : market(mk),
        config(cfg),
        qp(assemble_qp(mk, cfg.eps0, cfg.max_variables)),
        sparse(qp),
        base(base_power(mk)),
        screen(screen_feasibility(mk.net_load(), mk.generator(), mk.firms())),
        form(mk, cfg.eps0, base),
        structure(form.problem()),
        load(Eigen::Map<const Eigen::VectorXd>(mk.net_load().values().data(), mk.intervals())) {}

  MarketInstance market;
  DispatchConfig config;
  QuadraticProgram qp;
  SparseQuadraticProgram sparse;
  double base;
  FeasibilityScreen screen;
  CumulativeForm form;
  ipm::Structure structure;
  Eigen::VectorXd load;
};

DispatchSolver::DispatchSolver(const MarketInstance& market, const DispatchConfig& config)
    : impl_(std::make_shared<const Impl>(market, config)) {}

const MarketInstance& DispatchSolver::market() const noexcept { return impl_->market; }
const DispatchConfig& DispatchSolver::config() const noexcept { return impl_->config; }

DispatchSolution DispatchSolver::solve() const { return solve(impl_->market.bids()); }

DispatchSolution DispatchSolver::solve(std::span<const double> bids, const DispatchSolution* hint) const {
  static const std::shared_ptr<const DispatchWarmStart> none;
  return solve(bids, hint ? hint->warm_start : none);
}

DispatchSolution DispatchSolver::solve(std::span<const double> bids,
                                       const std::shared_ptr<const DispatchWarmStart>& hint) const {
  const Impl& d = *impl_;
  const auto& market = d.market;
  const auto& config = d.config;
  const int M = market.num_firms();
  if (static_cast<int>(bids.size()) != M)
    throw InvalidInput("DispatchSolver::solve: expected one bid per firm");

  DispatchSolution sol;
  sol.base_power = d.base;
  if (!d.screen.feasible) {
    sol.status = DispatchStatus::infeasible;
    sol.diagnostic = d.screen.diagnostic;
    sol.p.setZero(M, market.intervals());
    sol.p_chg.setZero(M, market.intervals());
    return sol;
  }

  const SparseQuadraticProgram& qp = d.sparse;
  Eigen::VectorXd r = qp.r;
  const double inv_a = 1.0 / market.generator().a;
  for (int k = 0; k < market.intervals(); ++k)
    for (int m = 0; m < M; ++m) r(d.qp.chg_index(m, k)) = bids[static_cast<std::size_t>(m)] * inv_a;

  const Eigen::VectorXd c = d.form.linear_term(bids);
  ipm::Result ipm_result;
  auto warm = std::make_shared<DispatchWarmStart>();
  warm->owner = &d;
  if (hint && hint->owner == &d) {
    warm->active = hint->active;
    ipm_result = d.structure.solve_active(c, warm->active, hint->multipliers, config.solver);
    sol.warm_started = ipm_result.status == ipm::Status::converged;
  }
  if (!sol.warm_started) {
    ipm_result = d.structure.solve(c, config.solver);
    std::vector<char> guess(static_cast<std::size_t>(ipm_result.multipliers.size()));
    for (Eigen::Index i = 0; i < ipm_result.multipliers.size(); ++i)
      guess[static_cast<std::size_t>(i)] = ipm_result.multipliers(i) > ipm_result.slack(i);
    // Polish: the interior point's active set, solved exactly, is accurate to roundoff.
    warm->active = guess;
    auto polished = d.structure.solve_active(c, guess, ipm_result.multipliers, config.solver);
    if (polished.status == ipm::Status::converged) {
      polished.iterations += ipm_result.iterations;
      ipm_result = std::move(polished);
      warm->active = std::move(guess);
    }
  }
  warm->multipliers = ipm_result.multipliers;
  sol.warm_start = std::move(warm);
  sol.iterations = ipm_result.iterations;
  d.form.extract(ipm_result.z, sol.p, sol.p_chg);

  const Eigen::VectorXd mu = d.form.assembled_multipliers(d.qp, ipm_result.multipliers, sol.p, d.load, market);
  const Eigen::VectorXd x = stack(sol.p, sol.p_chg);
  const auto kkt = kkt_residuals(qp, x, mu, sol.base_power, &r);
  sol.kkt_residual = kkt.kkt();

  const Eigen::VectorXd viol = qp.H * x - qp.g;
  Eigen::Index worst = 0;
  const double max_viol = viol.maxCoeff(&worst);
  sol.primal_residual = std::max({0.0, max_viol, (qp.Heq * x).lpNorm<Eigen::Infinity>()});

  const bool certified = sol.kkt_residual <= config.kkt_tol && sol.primal_residual <= config.feas_tol &&
                         kkt.dual <= config.kkt_tol;
  if (certified) {
    sol.status = DispatchStatus::optimal;
  } else if (ipm_result.status != ipm::Status::converged &&
             ipm_result.primal_residual > 1e3 * config.solver.primal_tol &&
             max_viol > config.feas_tol) {
    sol.status = DispatchStatus::infeasible;
    std::ostringstream os;
    os << "no feasible dispatch found; most violated constraint "
       << row_label(d.qp, static_cast<int>(worst)) << " by " << max_viol;
    sol.diagnostic = os.str();
  } else {
    sol.status = DispatchStatus::numerical_failure;
    std::ostringstream os;
    os << "solver stopped after " << ipm_result.iterations << " iterations (kkt " << sol.kkt_residual
       << ", primal " << sol.primal_residual << ")";
    sol.diagnostic = os.str();
  }

  if (sol.optimal() && config.reallocate_ties)
    reallocate_ties(market, bids, config.split, sol.p, sol.p_chg);
  snap(sol.p, config.snap_tol);
  snap(sol.p_chg, config.snap_tol);
  const Eigen::VectorXd xf = stack(sol.p, sol.p_chg);
  sol.objective = 0.5 * xf.dot(qp.Q * xf) + r.dot(xf);
  return sol;
}

DispatchSolution solve_dispatch(const MarketInstance& market, const DispatchConfig& config) {
  return DispatchSolver(market, config).solve();
}

CostBreakdown cost_breakdown(const DispatchSolution& solution, const MarketInstance& market) {
  if (!solution.optimal()) throw InvalidInput("cost_breakdown: solution is not optimal");
  const int M = market.num_firms();
  const int K = market.intervals();
  const double dt = market.time_grid().delta();
  CostBreakdown out;
  for (int k = 0; k < K; ++k) {
    const double pg = market.net_load()[k] + solution.p.col(k).sum();
    out.generation_cost += market.generator().cost(pg) * dt;
  }
  out.storage_payment.resize(static_cast<std::size_t>(M));
  out.total = out.generation_cost;
  for (int m = 0; m < M; ++m) {
    const double pay = market.firm(m).bid * solution.charged(m) * dt;
    out.storage_payment[static_cast<std::size_t>(m)] = pay;
    out.total += pay;
  }
  return out;
}

bool ValidationReport::passed() const noexcept {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

double ValidationReport::max_residual() const noexcept {
  double r = 0.0;
  for (const auto& c : checks) r = std::max(r, c.residual);
  return r;
}

const ValidationCheck& ValidationReport::check(std::string_view name) const {
  for (const auto& c : checks)
    if (c.name == name) return c;
  throw InvalidInput("ValidationReport: no check named " + std::string(name));
}

ValidationReport validate_dispatch(const DispatchSolution& solution, const MarketInstance& market,
                                   double feas_tol) {
  const int M = market.num_firms();
  const int K = market.intervals();
  const double dt = market.time_grid().delta();
  const double pmin = market.generator().p_g_min;
  const auto& load = market.net_load();
  const auto& p = solution.p;
  const auto& chg = solution.p_chg;

  double floor = 0.0;
  double soc = 0.0;
  double periodic = 0.0;
  double split = 0.0;
  double chain = 0.0;
  for (int k = 0; k < K; ++k) {
    const double sum_p = p.col(k).sum();
    floor = std::max(floor, pmin - (load[k] + sum_p));
    if (load[k] <= pmin) {
      const double sum_chg = chg.col(k).sum();
      chain = std::max({chain, (pmin - load[k]) - sum_p, sum_p - sum_chg});
    }
  }
  for (int m = 0; m < M; ++m) {
    const auto& f = market.firm(m);
    double e = f.e_0;
    for (int k = 0; k < K; ++k) {
      e += dt * p(m, k);
      soc = std::max({soc, -e, e - f.e_max});
      split = std::max({split, std::abs(chg(m, k) - std::max(p(m, k), 0.0)), -chg(m, k)});
    }
    periodic = std::max(periodic, std::abs(p.row(m).sum()));
  }

  ValidationReport report;
  auto add = [&](const char* name, double residual) {
    residual = std::max(residual, 0.0);
    report.checks.push_back({name, residual <= feas_tol, residual});
  };
  add("energy_balance_floor", floor);
  add("soc_bounds", soc);
  add("periodicity", periodic);
  add("charging_split", split);
  add("lemma1_chain", chain);
  return report;
}

}  // namespace sg
