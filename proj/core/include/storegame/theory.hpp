#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "storegame/dispatch.hpp"
#include "storegame/model.hpp"

namespace sg {

/// Intervals where net load is at or below the generation floor.
struct AbsorbAnalysis {
  std::vector<int> k_set;
  int k1 = -1;
  int k2 = -1;
  double e_absorb = 0.0;  // MW-sum over k_set of (p_g_min - p_L,k); times delta gives MWh
  double delta = 1.0;     // interval length the MW-sums refer to

  bool empty() const noexcept { return k_set.empty(); }
};

AbsorbAnalysis absorb_analysis(const NetLoadProfile& net_load, double p_g_min);

/// Charged-energy totals (MW-sums) a firm obtains when under-, over- or equal-bidding its rival.
struct FirmBounds {
  double e_max_share = 0.0;  // e_max / delta
  double E_max = 0.0;
  double E_min = 0.0;
  std::optional<double> E_split;  // duopoly only
  std::optional<double> L;        // c_max * E_min / E_max, undefined when E_max = 0
};

struct CapacityBounds {
  std::vector<FirmBounds> firms;
  double e_absorb = 0.0;
  double c_max = 0.0;

  const FirmBounds& operator[](int m) const { return firms.at(static_cast<std::size_t>(m)); }
};

/// E_max and E_min use the aggregate capacity of all other firms; E_split and L need M = 2.
CapacityBounds capacity_bounds(const AbsorbAnalysis& absorb, const std::vector<StorageFirm>& firms,
                               const BidGrid& bid_grid);

/// Whether every interval's total charging equals max(0, p_g_min - p_L,k) within tol (MW).
bool balancing_only(const DispatchSolution& solution, const MarketInstance& market, double tol = 1e-6);

struct CMinEstimate {
  bool found = false;
  double value = 0.0;           // $/MWh, on the bid grid
  double analytic_bound = 0.0;  // a * (max p_L - min p_L)
  int solves = 0;
};

/// Smallest grid bid from which the balancing-only charging pattern holds, found by bisection
/// with the dispatch solver as oracle. The largest of three estimates is returned: all firms
/// at the bid, and each firm alone at the bid with the others at c_max.
CMinEstimate estimate_c_min(const MarketInstance& market, const DispatchConfig& config = {});
CMinEstimate estimate_c_min(const DispatchSolver& solver);

enum class StabilityVerdict { stable, unstable, assumptions_violated };
std::string_view to_string(StabilityVerdict verdict);

struct HypothesisCheck {
  std::string name;
  bool passed = false;
  double lhs = 0.0;
  double rhs = 0.0;
  std::string detail;
};

struct StabilityReport {
  AbsorbAnalysis absorb;
  CapacityBounds bounds;
  CMinEstimate c_min;
  double c1_initial = 0.0;
  StabilityVerdict predicted = StabilityVerdict::assumptions_violated;
  std::vector<HypothesisCheck> reasons;

  const HypothesisCheck* find(std::string_view name) const;
};

/// Checks the instability thresholds plus the modelling assumptions they rest on. The verdict is
/// unstable when all pass, stable when E_min = 0 for both firms (undercutting always wins, so
/// L_1 = L_2 = 0) with the assumptions intact, and assumptions_violated otherwise, including the
/// cases where the theorem says nothing: one threshold holding, or 0 < L_m <= c_min.
StabilityReport predict_stability(const MarketInstance& market, double c1_initial,
                                  const DispatchConfig& config = {});
StabilityReport predict_stability(const DispatchSolver& solver, double c1_initial);

std::string to_json(const StabilityReport& report, int indent = 2);

struct LemmaCheck {
  std::string name;
  bool applicable = true;
  bool passed = true;
  double residual = 0.0;
  std::string detail;
};

struct LemmaReport {
  std::vector<LemmaCheck> checks;

  bool passed() const noexcept;  // every applicable check passed
  const LemmaCheck& check(std::string_view name) const;
};

/// Per-lemma verification of an optimal dispatch: lemma1_chain, lemma3_equality (only when all
/// bids are at least c_min), lemma4_complementarity, lemma5_structure and lemma5_totals
/// (duopoly with lemma 3 applicable).
LemmaReport lemma_oracles(const DispatchSolution& solution, const MarketInstance& market,
                          const CapacityBounds& bounds, const CMinEstimate& c_min,
                          double tol = 1e-6);

}  // namespace sg
