#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "storegame/interior_point.hpp"
#include "storegame/model.hpp"
#include "storegame/qp.hpp"

namespace sg {

enum class DispatchStatus { optimal, infeasible, numerical_failure };
std::string_view to_string(DispatchStatus status);

/// How charging is shared between firms that submitted identical bids.
enum class SplitRule {
  fair,          // as equal as the capacities allow
  proportional,  // in proportion to energy capacity
};

struct DispatchConfig {
  double feas_tol = 1e-6;
  double kkt_tol = 1e-6;
  double opt_tol = 1e-6;
  double eps0 = kDefaultEps0;
  double snap_tol = 1e-9;
  std::size_t max_variables = kDefaultMaxVariables;
  bool reallocate_ties = true;
  SplitRule split = SplitRule::fair;
  ipm::Settings solver{};
};

/// Solver state carried from one solve to the next by DispatchSolver.
struct DispatchWarmStart;

struct DispatchSolution {
  DispatchStatus status = DispatchStatus::numerical_failure;
  Eigen::MatrixXd p;      // M x K, MW, positive = charging
  Eigen::MatrixXd p_chg;  // M x K, MW
  double objective = 0.0;
  double kkt_residual = 0.0;     // per-unit, at the solver's point (before tie reallocation)
  double primal_residual = 0.0;  // largest constraint violation, MW
  double base_power = 1.0;       // MW used for per-unit scaling
  int iterations = 0;
  bool warm_started = false;  // accepted from the active set of a neighbouring solve
  std::string diagnostic;
  std::shared_ptr<const DispatchWarmStart> warm_start;

  bool optimal() const noexcept { return status == DispatchStatus::optimal; }
  /// MW-sum of charging for firm m (multiply by delta for MWh).
  double charged(int m) const { return p_chg.row(m).sum(); }
};

/// Solves the operator's QP. Never throws for solver trouble; inspect `status`.
DispatchSolution solve_dispatch(const MarketInstance& market, const DispatchConfig& config = {});

/// Holds everything about a market that does not depend on the bids, so that repeated solves
/// only rebuild the linear term. solve() is safe to call concurrently.
class DispatchSolver {
 public:
  explicit DispatchSolver(const MarketInstance& market, const DispatchConfig& config = {});

  /// Solves with the given bids (one per firm) in place of the market's own. A hint from an
  /// earlier solve of the same solver is tried first and used only if it verifies as optimal;
  /// results then agree with a cold solve to solver tolerance, not bitwise.
  DispatchSolution solve(std::span<const double> bids, const DispatchSolution* hint = nullptr) const;
  DispatchSolution solve(std::span<const double> bids,
                         const std::shared_ptr<const DispatchWarmStart>& hint) const;
  DispatchSolution solve() const;

  const MarketInstance& market() const noexcept;
  const DispatchConfig& config() const noexcept;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

struct CostBreakdown {
  double generation_cost = 0.0;
  std::vector<double> storage_payment;
  double total = 0.0;
};

/// Throws InvalidInput for a non-optimal solution.
CostBreakdown cost_breakdown(const DispatchSolution& solution, const MarketInstance& market);

struct ValidationCheck {
  std::string name;
  bool passed = true;
  double residual = 0.0;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;

  bool passed() const noexcept;
  double max_residual() const noexcept;
  const ValidationCheck& check(std::string_view name) const;
};

/// Checks: energy_balance_floor, soc_bounds, periodicity, charging_split, lemma1_chain.
ValidationReport validate_dispatch(const DispatchSolution& solution, const MarketInstance& market,
                                   double feas_tol = 1e-6);

/// Largest per-unit power used by the solver's scaling: max(1, max |p_L|, p_g_min).
double base_power(const MarketInstance& market);

/// Human-readable name of an inequality row of the assembled QP.
std::string row_label(const QuadraticProgram& qp, int row);

}  // namespace sg
