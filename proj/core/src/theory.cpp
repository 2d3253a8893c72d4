#include "storegame/theory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "storegame/errors.hpp"

namespace sg {

AbsorbAnalysis absorb_analysis(const NetLoadProfile& net_load, double p_g_min) {
  AbsorbAnalysis out;
  out.delta = net_load.grid().delta();
  for (int k = 0; k < net_load.size(); ++k) {
    const double excess = p_g_min - net_load[k];
    if (excess >= 0.0) {
      out.k_set.push_back(k);
      out.e_absorb += excess;
    }
  }
  if (!out.k_set.empty()) {
    out.k1 = out.k_set.front();
    out.k2 = out.k_set.back();
  }
  return out;
}

CapacityBounds capacity_bounds(const AbsorbAnalysis& absorb, const std::vector<StorageFirm>& firms,
                               const BidGrid& bid_grid) {
  CapacityBounds out;
  out.e_absorb = absorb.e_absorb;
  out.c_max = bid_grid.c_max();
  const double E = absorb.e_absorb;
  double total = 0.0;
  for (const auto& f : firms) total += f.e_max / absorb.delta;
  for (const auto& f : firms) {
    FirmBounds b;
    b.e_max_share = f.e_max / absorb.delta;
    const double others = total - b.e_max_share;
    b.E_max = std::min(E, b.e_max_share);
    b.E_min = std::max(E - others, 0.0);
    if (firms.size() == 2) b.E_split = std::min(std::max(0.5 * E, E - others), b.e_max_share);
    if (b.E_max > 0.0) b.L = bid_grid.c_max() * b.E_min / b.E_max;
    out.firms.push_back(b);
  }
  return out;
}

bool balancing_only(const DispatchSolution& solution, const MarketInstance& market, double tol) {
  if (!solution.optimal()) return false;
  const double floor = market.generator().p_g_min;
  for (int k = 0; k < market.intervals(); ++k) {
    const double target = std::max(0.0, floor - market.net_load()[k]);
    if (std::abs(solution.p_chg.col(k).sum() - target) > tol) return false;
  }
  return true;
}

CMinEstimate estimate_c_min(const MarketInstance& market, const DispatchConfig& config) {
  return estimate_c_min(DispatchSolver(market, config));
}

CMinEstimate estimate_c_min(const DispatchSolver& solver) {
  const auto& market = solver.market();
  const auto& grid = market.bid_grid();
  const int M = market.num_firms();
  const int N = grid.size();
  CMinEstimate out;
  out.analytic_bound = market.generator().a * (market.net_load().max() - market.net_load().min());

  auto holds = [&](int config, int tick) {
    std::vector<double> bids(static_cast<std::size_t>(M), grid.bid(config == 0 ? tick : N));
    if (config > 0) bids[static_cast<std::size_t>(config - 1)] = grid.bid(tick);
    ++out.solves;
    return balancing_only(solver.solve(bids), market, solver.config().feas_tol);
  };

  int worst = 1;
  const int configs = M == 1 ? 1 : M + 1;
  for (int config = 0; config < configs; ++config) {
    if (!holds(config, N)) return out;
    if (holds(config, 1)) continue;
    int lo = 1;
    int hi = N;
    while (hi - lo > 1) {
      const int mid = lo + (hi - lo) / 2;
      (holds(config, mid) ? hi : lo) = mid;
    }
    worst = std::max(worst, hi);
  }
  out.found = true;
  out.value = grid.bid(worst);
  return out;
}

std::string_view to_string(StabilityVerdict verdict) {
  switch (verdict) {
    case StabilityVerdict::stable:
      return "stable";
    case StabilityVerdict::unstable:
      return "unstable";
    case StabilityVerdict::assumptions_violated:
      return "assumptions_violated";
  }
  return "unknown";
}

const HypothesisCheck* StabilityReport::find(std::string_view name) const {
  for (const auto& r : reasons)
    if (r.name == name) return &r;
  return nullptr;
}

namespace {

int floor_crossings(const NetLoadProfile& load, double p_g_min) {
  int changes = 0;
  for (int k = 0; k + 1 < load.size(); ++k)
    if ((load[k] <= p_g_min) != (load[k + 1] <= p_g_min)) ++changes;
  return changes;
}

}  // namespace

StabilityReport predict_stability(const MarketInstance& market, double c1_initial,
                                  const DispatchConfig& config) {
  return predict_stability(DispatchSolver(market, config), c1_initial);
}

StabilityReport predict_stability(const DispatchSolver& solver, double c1_initial) {
  const auto& market = solver.market();
  const auto& grid = market.bid_grid();
  const double floor = market.generator().p_g_min;
  StabilityReport rep;
  rep.c1_initial = c1_initial;
  rep.absorb = absorb_analysis(market.net_load(), floor);
  rep.bounds = capacity_bounds(rep.absorb, market.firms(), grid);
  rep.c_min = estimate_c_min(solver);

  std::vector<HypothesisCheck> assumptions;
  auto assume = [&](std::string name, bool ok, double lhs, double rhs, std::string detail = {}) {
    assumptions.push_back({std::move(name), ok, lhs, rhs, std::move(detail)});
  };
  const int M = market.num_firms();
  assume("duopoly", M == 2, M, 2);
  double e0 = 0.0;
  for (const auto& f : market.firms()) e0 = std::max(e0, f.e_0);
  assume("initial_soc_zero", e0 == 0.0, e0, 0.0);
  assume("floor_above_min_load", floor > market.net_load().min(), floor, market.net_load().min());
  const int crossings = floor_crossings(market.net_load(), floor);
  assume("two_crossings", crossings == 2, crossings, 2);
  assume("fine_bid_grid", grid.fine(), grid.size(), 20);
  assume("c_min_found", rep.c_min.found, rep.c_min.value, grid.c_max(),
         rep.c_min.found ? "" : "balancing-only charging fails even at c_max");

  bool defined = M == 2;
  for (int m = 0; m < M && defined; ++m) defined = rep.bounds[m].L.has_value();
  assume("thresholds_defined", defined, 0, 0, defined ? "" : "a firm has E_max = 0");

  double max_L = 0.0;
  if (defined) {
    for (int m = 0; m < 2; ++m) {
      const auto& b = rep.bounds[m];
      assume("split_below_max_firm" + std::to_string(m + 1), *b.E_split < b.E_max, *b.E_split,
             b.E_max, "a tie must pay less than undercutting");
      max_L = std::max(max_L, *b.L);
    }
    assume("cap_headroom", grid.c_max() - 2.0 * grid.delta() >= max_L,
           grid.c_max() - 2.0 * grid.delta(), max_L);
  }
  const bool assumptions_ok =
      std::all_of(assumptions.begin(), assumptions.end(), [](const auto& c) { return c.passed; });
  rep.reasons = assumptions;

  if (!defined) {
    rep.predicted = StabilityVerdict::assumptions_violated;
    return rep;
  }
  const double cmin = rep.c_min.value;
  int above = 0;
  int pivotal = 0;  // firms the rival cannot fully replace
  for (int m = 0; m < 2; ++m) {
    const double L = *rep.bounds[m].L;
    const bool ok = cmin < L;
    above += ok ? 1 : 0;
    pivotal += L > 0.0 ? 1 : 0;
    rep.reasons.push_back({"threshold_firm" + std::to_string(m + 1), ok, cmin, L, "c_min < L_m"});
  }
  const bool start_ok = cmin <= c1_initial - grid.delta();
  rep.reasons.push_back({"initial_bid", start_ok, cmin, c1_initial - grid.delta(),
                         "c_min <= c1_initial - delta"});

  if (!assumptions_ok) {
    rep.predicted = StabilityVerdict::assumptions_violated;
  } else if (above == 2 && start_ok) {
    rep.predicted = StabilityVerdict::unstable;
  } else if (pivotal == 0) {
    rep.predicted = StabilityVerdict::stable;
  } else {
    rep.predicted = StabilityVerdict::assumptions_violated;
    const char* why = above == 2   ? "theorem silent (initial bid below c_min + delta)"
                      : above == 1 ? "theorem silent (one-sided)"
                                   : "theorem silent (0 < L_m <= c_min)";
    rep.reasons.push_back({"theorem_applies", false, static_cast<double>(above), 2.0, why});
  }
  return rep;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

std::string to_json(const StabilityReport& rep, int indent) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["predicted"] = std::string(to_string(rep.predicted));
  j["c1_initial"] = rep.c1_initial;
  j["absorb"] = {{"k_set", rep.absorb.k_set},
                 {"k1", rep.absorb.k1},
                 {"k2", rep.absorb.k2},
                 {"e_absorb", rep.absorb.e_absorb},
                 {"delta", rep.absorb.delta}};
  nlohmann::json firms = nlohmann::json::array();
  for (const auto& b : rep.bounds.firms)
    firms.push_back({{"e_max_share", b.e_max_share},
                     {"E_max", b.E_max},
                     {"E_min", b.E_min},
                     {"E_split", optional_json(b.E_split)},
                     {"L", optional_json(b.L)}});
  j["bounds"] = {{"e_absorb", rep.bounds.e_absorb}, {"c_max", rep.bounds.c_max}, {"firms", firms}};
  j["c_min"] = {{"found", rep.c_min.found},
                {"value", rep.c_min.value},
                {"analytic_bound", rep.c_min.analytic_bound},
                {"solves", rep.c_min.solves}};
  nlohmann::json reasons = nlohmann::json::array();
  for (const auto& r : rep.reasons)
    reasons.push_back({{"name", r.name},
                       {"passed", r.passed},
                       {"lhs", r.lhs},
                       {"rhs", r.rhs},
                       {"detail", r.detail}});
  j["reasons"] = reasons;
  return j.dump(indent);
}

bool LemmaReport::passed() const noexcept {
  return std::all_of(checks.begin(), checks.end(),
                     [](const auto& c) { return !c.applicable || c.passed; });
}

const LemmaCheck& LemmaReport::check(std::string_view name) const {
  for (const auto& c : checks)
    if (c.name == name) return c;
  throw InvalidInput("LemmaReport: no check named " + std::string(name));
}

LemmaReport lemma_oracles(const DispatchSolution& solution, const MarketInstance& market,
                          const CapacityBounds& bounds, const CMinEstimate& c_min, double tol) {
  if (!solution.optimal()) throw InvalidInput("lemma_oracles: solution is not optimal");
  const int M = market.num_firms();
  const int K = market.intervals();
  const double floor = market.generator().p_g_min;
  const auto& load = market.net_load();
  const auto& p = solution.p;
  const auto& chg = solution.p_chg;
  LemmaReport rep;
  auto add = [&](std::string name, bool applicable, double residual, std::string detail = {}) {
    residual = std::max(residual, 0.0);
    rep.checks.push_back({std::move(name), applicable, !applicable || residual <= tol, residual,
                          std::move(detail)});
  };

  double chain = 0.0;
  double comp = 0.0;
  for (int k = 0; k < K; ++k) {
    const double sp = p.col(k).sum();
    chain = std::max({chain, (floor - load[k]) - sp, sp - chg.col(k).sum()});
    for (int m = 0; m < M; ++m) comp = std::max(comp, std::abs(chg(m, k) - std::max(p(m, k), 0.0)));
  }
  add("lemma1_chain", true, chain);
  add("lemma4_complementarity", true, comp);

  bool above = c_min.found;
  for (const auto& f : market.firms()) above = above && f.bid >= c_min.value;
  double eq = 0.0;
  for (int k = 0; k < K; ++k)
    eq = std::max(eq, std::abs(chg.col(k).sum() - std::max(0.0, floor - load[k])));
  add("lemma3_equality", above, above ? eq : 0.0, above ? "" : "some bid is below c_min");

  const auto absorb = absorb_analysis(load, floor);
  const bool duo = M == 2 && above && !absorb.empty();
  double structure = 0.0;
  double totals = 0.0;
  if (duo) {
    for (int m = 0; m < 2; ++m) {
      for (int k = 0; k < absorb.k1; ++k) structure = std::max(structure, std::abs(p(m, k)));
      for (int k = absorb.k2 + 1; k < K; ++k) structure = std::max(structure, p(m, k));
      const double own = market.firm(m).bid;
      const double other = market.firm(1 - m).bid;
      const auto& b = bounds[m];
      const double expected = own == other ? b.E_split.value_or(0.0) : own < other ? b.E_max : b.E_min;
      totals = std::max(totals, std::abs(chg.row(m).sum() - expected));
    }
  }
  const char* why = duo ? "" : "needs a duopoly with an absorb set and bids at least c_min";
  add("lemma5_structure", duo, structure, why);
  add("lemma5_totals", duo, totals, why);
  return rep;
}

}  // namespace sg
