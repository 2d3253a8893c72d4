#include "storegame/firm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "parallel.hpp"
#include "storegame/errors.hpp"
#include "storegame/io.hpp"

namespace sg {

FirmProfit firm_profit(const MarketInstance& market, int firm_index, const DispatchSolution& solution) {
  if (!solution.optimal()) throw InvalidInput("firm_profit: solution is not optimal");
  FirmProfit out;
  out.firm_index = firm_index;
  out.bid = market.firm(firm_index).bid;
  out.charged_energy = std::max(0.0, solution.charged(firm_index) * market.time_grid().delta());
  out.profit = out.bid * out.charged_energy;
  return out;
}

std::string_view to_string(BestResponseMethod method) {
  return method == BestResponseMethod::enumeration ? "enumeration" : "closed_form";
}

bool strictly_better(double candidate, double incumbent) noexcept {
  const double scale = std::max({1.0, std::abs(candidate), std::abs(incumbent)});
  return candidate > incumbent + kProfitTieTolerance * scale;
}

std::size_t DispatchCache::Hash::operator()(const std::vector<int>& v) const noexcept {
  std::size_t h = 1469598103934665603ull;
  for (int x : v) h = (h ^ static_cast<std::size_t>(x)) * 1099511628211ull;
  return h;
}

std::optional<DispatchCache::Entry> DispatchCache::find(const std::vector<int>& ticks) const {
  std::lock_guard lock(mutex_);
  const auto it = map_.find(ticks);
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

void DispatchCache::insert(const std::vector<int>& ticks, Entry entry) {
  std::lock_guard lock(mutex_);
  map_.insert_or_assign(ticks, std::move(entry));
}

std::size_t DispatchCache::size() const {
  std::lock_guard lock(mutex_);
  return map_.size();
}

void DispatchCache::clear() {
  std::lock_guard lock(mutex_);
  map_.clear();
}

namespace {

// Candidates are solved in fixed runs of consecutive bids, each run warm-starting from its
// previous point, so results do not depend on how runs are spread over workers.
constexpr int kRunLength = 10;

DispatchCache::Entry make_entry(const DispatchSolution& sol, double dt) {
  DispatchCache::Entry e;
  e.status = sol.status;
  e.diagnostic = sol.diagnostic;
  e.warm_start = sol.warm_start;
  if (sol.optimal())
    for (Eigen::Index m = 0; m < sol.p_chg.rows(); ++m)
      e.charged.push_back(std::max(0.0, sol.p_chg.row(m).sum() * dt));
  return e;
}

}  // namespace

BestResponse best_response_enumerate(const DispatchSolver& solver, std::span<const int> ticks,
                                     int firm, const EnumerateOptions& options) {
  const auto& market = solver.market();
  const auto& grid = market.bid_grid();
  const int M = market.num_firms();
  const int N = grid.size();
  if (static_cast<int>(ticks.size()) != M) throw InvalidInput("best_response_enumerate: profile size");
  if (firm < 0 || firm >= M) throw InvalidInput("best_response_enumerate: firm index out of range");
  const double dt = market.time_grid().delta();

  DispatchCache local;
  DispatchCache& cache = options.cache ? *options.cache : local;
  std::vector<DispatchCache::Entry> results(static_cast<std::size_t>(N));
  const int runs = (N + kRunLength - 1) / kRunLength;

  detail::parallel_for(runs, options.workers, [&](int run) {
    std::vector<int> key(ticks.begin(), ticks.end());
    std::vector<double> bids(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) bids[static_cast<std::size_t>(m)] = grid.bid(key[static_cast<std::size_t>(m)]);
    std::shared_ptr<const DispatchWarmStart> hint;
    const int first = run * kRunLength + 1;
    const int last = std::min(N, first + kRunLength - 1);
    for (int t = first; t <= last; ++t) {
      key[static_cast<std::size_t>(firm)] = t;
      auto found = cache.find(key);
      if (!found) {
        bids[static_cast<std::size_t>(firm)] = grid.bid(t);
        const auto sol = solver.solve(bids, hint);
        found = make_entry(sol, dt);
        cache.insert(key, *found);
      }
      hint = found->warm_start;
      results[static_cast<std::size_t>(t - 1)] = std::move(*found);
    }
  });

  BestResponse br;
  br.firm_index = firm;
  br.method = BestResponseMethod::enumeration;
  bool any = false;
  for (int t = 1; t <= N; ++t) {
    const auto& e = results[static_cast<std::size_t>(t - 1)];
    const double bid = grid.bid(t);
    if (e.status != DispatchStatus::optimal) {
      std::ostringstream os;
      os << "bid " << bid << " skipped: " << to_string(e.status) << ' ' << e.diagnostic;
      br.warnings.push_back(os.str());
      continue;
    }
    const double charged = e.charged[static_cast<std::size_t>(firm)];
    const double profit = bid * charged;
    if (options.keep_curve) br.profit_curve.push_back({bid, charged, profit});
    if (!any || strictly_better(profit, br.profit)) {
      br.chosen_bid = bid;
      br.profit = profit;
      any = true;
    }
  }
  if (!any) throw SolverFailure("best_response_enumerate: every candidate dispatch failed");
  return br;
}

BestResponse best_response_enumerate(const MarketInstance& market, int firm,
                                     const EnumerateOptions& options, const DispatchConfig& config) {
  const DispatchSolver solver(market, config);
  std::vector<int> ticks;
  for (const auto& f : market.firms()) ticks.push_back(market.bid_grid().tick(f.bid));
  return best_response_enumerate(solver, ticks, firm, options);
}

double closed_form_bid(double c_other, double E_min, double E_max, const BidGrid& grid) {
  const double under = c_other - grid.delta();
  return grid.c_max() * E_min <= under * E_max ? under : grid.c_max();
}

BestResponse best_response_closed_form(const DispatchSolver& solver, std::span<const int> ticks,
                                       int firm, const CapacityBounds& bounds,
                                       const CMinEstimate& c_min) {
  const auto& market = solver.market();
  const auto& grid = market.bid_grid();
  auto refuse = [](const std::string& why) {
    throw PreconditionsNotMet("best_response_closed_form: " + why);
  };
  if (market.num_firms() != 2 || ticks.size() != 2) refuse("needs exactly two firms");
  if (firm != 0 && firm != 1) refuse("firm index out of range");
  if (bounds.firms.size() != 2) refuse("bounds do not describe a duopoly");
  for (const auto& b : bounds.firms)
    if (!b.L) refuse("E_max = 0 for a firm");
  if (!c_min.found) refuse("c_min not found");
  for (const auto& b : bounds.firms)
    if (!(c_min.value < *b.L)) refuse("c_min >= L for a firm");

  const double dt = market.time_grid().delta();
  const double c_other = grid.bid(ticks[static_cast<std::size_t>(1 - firm)]);
  if (c_other < c_min.value + grid.delta()) refuse("opponent bid below c_min + delta");

  const auto& own = bounds[firm];
  const double choice = closed_form_bid(c_other, own.E_min, own.E_max, grid);
  double profit = 0.0;
  if (choice < c_other) {
    profit = choice * own.E_max * dt;
  } else if (choice > c_other) {
    profit = choice * own.E_min * dt;
  } else {
    profit = choice * own.E_split.value_or(0.0) * dt;
  }
  const double tie = c_other * own.E_split.value_or(0.0) * dt;
  if (!strictly_better(profit, tie)) refuse("tying the opponent is as good as the rule's choice");

  // Charging is non-increasing in the own bid, so bids below c_min earn at most
  // (c_min - delta) times the energy charged at the lowest bid.
  std::vector<double> bids{grid.bid(ticks[0]), grid.bid(ticks[1])};
  bids[static_cast<std::size_t>(firm)] = grid.delta();
  const auto low = solver.solve(bids);
  if (!low.optimal()) refuse("dispatch at the lowest bid failed");
  const double low_bound = (c_min.value - grid.delta()) * std::max(0.0, low.charged(firm) * dt);
  if (!strictly_better(profit, low_bound)) refuse("a bid below c_min may beat the rule");

  BestResponse br;
  br.firm_index = firm;
  br.chosen_bid = choice;
  br.profit = profit;
  br.method = BestResponseMethod::closed_form;
  return br;
}

BestResponse best_response_closed_form(const MarketInstance& market, int firm,
                                       const DispatchConfig& config) {
  const DispatchSolver solver(market, config);
  const auto absorb = absorb_analysis(market.net_load(), market.generator().p_g_min);
  const auto bounds = capacity_bounds(absorb, market.firms(), market.bid_grid());
  const auto c_min = estimate_c_min(solver);
  std::vector<int> ticks;
  for (const auto& f : market.firms()) ticks.push_back(market.bid_grid().tick(f.bid));
  return best_response_closed_form(solver, ticks, firm, bounds, c_min);
}

std::string profit_curve_csv(const BestResponse& response) {
  std::string out = "bid,charged_energy,profit\n";
  for (const auto& p : response.profit_curve)
    out += format_number(p.bid) + ',' + format_number(p.charged_energy) + ',' +
           format_number(p.profit) + '\n';
  return out;
}

}  // namespace sg
