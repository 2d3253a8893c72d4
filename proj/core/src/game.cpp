#include "storegame/game.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "storegame/errors.hpp"
#include "storegame/io.hpp"

namespace sg {

BidProfile BidProfile::from_bids(std::span<const double> bids, const BidGrid& grid) {
  BidProfile p;
  for (double b : bids) p.ticks.push_back(grid.tick(b));
  return p;
}

BidProfile BidProfile::all_at_cap(int firms, const BidGrid& grid) {
  return BidProfile{std::vector<int>(static_cast<std::size_t>(firms), grid.size())};
}

std::vector<double> BidProfile::bids(const BidGrid& grid) const {
  std::vector<double> out;
  for (int t : ticks) out.push_back(grid.bid(t));
  return out;
}

GameState GameTrace::state(std::size_t i) const {
  if (i > moves.size()) throw InvalidInput("GameTrace::state: index past the end");
  if (order.empty()) throw InvalidInput("GameTrace::state: empty move order");
  return {i == 0 ? initial : moves[i - 1].profile, order[i % order.size()]};
}

std::optional<CycleInfo> detect_cycle(const GameTrace& trace) {
  std::map<std::pair<std::vector<int>, int>, std::size_t> seen;
  for (std::size_t i = 0; i <= trace.moves.size(); ++i) {
    auto s = trace.state(i);
    auto [it, fresh] = seen.try_emplace({std::move(s.profile.ticks), s.next_mover}, i);
    if (!fresh) return CycleInfo{it->second, i - it->second};
  }
  return std::nullopt;
}

std::string_view to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::nash_equilibrium: return "nash_equilibrium";
    case OutcomeKind::cycle: return "cycle";
    case OutcomeKind::iteration_cap: return "iteration_cap";
  }
  return "unknown";
}

int default_max_iter(const MarketInstance& market) {
  return 4 * market.bid_grid().size() * market.num_firms();
}

namespace {

std::vector<int> resolve_order(const GameOptions& options, int M) {
  std::vector<int> order = options.order;
  if (order.empty()) {
    for (int m = 0; m < M; ++m) order.push_back(m);
    return order;
  }
  std::vector<int> sorted = order;
  std::sort(sorted.begin(), sorted.end());
  for (int m = 0; m < M; ++m)
    if (static_cast<int>(sorted.size()) != M || sorted[static_cast<std::size_t>(m)] != m)
      throw InvalidInput("game: move order must be a permutation of the firms");
  return order;
}

}  // namespace

GameOutcome run_best_response(const DispatchSolver& solver, const BidProfile& initial,
                              const GameOptions& options, DispatchCache* cache) {
  const auto& market = solver.market();
  const auto& grid = market.bid_grid();
  const int M = market.num_firms();
  if (static_cast<int>(initial.ticks.size()) != M) throw InvalidInput("game: profile size differs from M");
  for (int t : initial.ticks)
    if (t < 1 || t > grid.size()) throw InvalidInput("game: initial bid off the grid");
  const int max_iter = options.max_iter > 0 ? options.max_iter : default_max_iter(market);
  if (max_iter < 2 * M) throw InvalidInput("game: max_iter must be at least 2M");

  DispatchCache local;
  EnumerateOptions enum_opts;
  enum_opts.workers = options.workers;
  enum_opts.keep_curve = false;
  enum_opts.cache = cache ? cache : &local;

  GameOutcome out;
  out.trace.initial = initial;
  out.trace.order = resolve_order(options, M);
  const auto& order = out.trace.order;

  std::map<std::pair<std::vector<int>, int>, std::size_t> seen;
  seen.emplace(std::make_pair(initial.ticks, order[0]), 0);
  BidProfile profile = initial;
  int unchanged = 0;
  for (int t = 0; t < max_iter; ++t) {
    const int mover = order[static_cast<std::size_t>(t) % order.size()];
    BestResponse br;
    try {
      br = best_response_enumerate(solver, profile.ticks, mover, enum_opts);
    } catch (const SolverFailure& e) {
      std::ostringstream os;
      os << e.what() << " (move " << t + 1 << ", firm " << mover + 1 << ")\n"
         << trace_csv(out.trace, grid);
      throw SolverFailure(os.str());
    }
    const int tick = grid.tick(br.chosen_bid);
    unchanged = tick == profile.ticks[static_cast<std::size_t>(mover)] ? unchanged + 1 : 0;
    profile.ticks[static_cast<std::size_t>(mover)] = tick;
    out.trace.moves.push_back({t + 1, mover, profile, br.profit});
    out.iterations_used = t + 1;
    if (unchanged >= M) {
      out.kind = OutcomeKind::nash_equilibrium;
      out.final_profile = profile;
      return out;
    }
    const int next = order[static_cast<std::size_t>(t + 1) % order.size()];
    auto [it, fresh] = seen.try_emplace({profile.ticks, next}, static_cast<std::size_t>(t + 1));
    if (!fresh) {
      out.kind = OutcomeKind::cycle;
      out.cycle_start = it->second;
      out.cycle_period = static_cast<std::size_t>(t + 1) - it->second;
      for (std::size_t i = out.cycle_start; i < out.cycle_start + out.cycle_period; ++i)
        out.cycle_profiles.push_back(out.trace.state(i).profile);
      out.final_profile = profile;
      return out;
    }
  }
  out.kind = OutcomeKind::iteration_cap;
  out.final_profile = profile;
  out.diagnostic = "no equilibrium or recurrence within " + std::to_string(max_iter) + " moves";
  return out;
}

GameOutcome run_best_response(const MarketInstance& market, const BidProfile& initial,
                              const GameOptions& options, const DispatchConfig& config) {
  const DispatchSolver solver(market, config);
  return run_best_response(solver, initial, options);
}

NashCertificate is_nash(const DispatchSolver& solver, const BidProfile& profile, int workers,
                        DispatchCache* cache) {
  const auto& market = solver.market();
  const auto& grid = market.bid_grid();
  const int M = market.num_firms();
  if (static_cast<int>(profile.ticks.size()) != M) throw InvalidInput("is_nash: profile size differs from M");
  for (int t : profile.ticks)
    if (t < 1 || t > grid.size()) throw InvalidInput("is_nash: bid off the grid");

  DispatchCache local;
  EnumerateOptions opts;
  opts.workers = workers;
  opts.cache = cache ? cache : &local;

  NashCertificate cert;
  cert.certified = true;
  double best_gain = 0.0;
  for (int m = 0; m < M; ++m) {
    const auto br = best_response_enumerate(solver, profile.ticks, m, opts);
    const double own = grid.bid(profile.ticks[static_cast<std::size_t>(m)]);
    const auto at = std::find_if(br.profit_curve.begin(), br.profit_curve.end(),
                                 [&](const ProfitPoint& p) { return p.bid == own; });
    if (at == br.profit_curve.end()) throw SolverFailure("is_nash: dispatch at the profile failed");
    cert.profits.push_back(at->profit);
    if (strictly_better(br.profit, at->profit)) {
      cert.certified = false;
      const double gain = br.profit - at->profit;
      if (!cert.best_deviation || gain > best_gain) {
        cert.best_deviation = Deviation{m, br.chosen_bid, br.profit, at->profit};
        best_gain = gain;
      }
    }
  }
  return cert;
}

NashCertificate is_nash(const MarketInstance& market, const BidProfile& profile,
                        const DispatchConfig& config) {
  const DispatchSolver solver(market, config);
  return is_nash(solver, profile);
}

std::string trace_csv(const GameTrace& trace, const BidGrid& grid) {
  std::string out = "iteration,mover";
  for (std::size_t m = 0; m < trace.initial.ticks.size(); ++m) out += ",bid_" + std::to_string(m + 1);
  out += ",profit\n";
  auto row = [&](int it, std::string mover, const BidProfile& p, std::string profit) {
    out += std::to_string(it) + ',' + mover;
    for (int t : p.ticks) out += ',' + format_number(grid.bid(t));
    out += ',' + profit + '\n';
  };
  row(0, "", trace.initial, "");
  for (const auto& e : trace.moves)
    row(e.iteration, std::to_string(e.mover + 1), e.profile, format_number(e.profit));
  return out;
}

std::string outcome_json(const GameOutcome& outcome, const BidGrid& grid, int indent) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["kind"] = std::string(to_string(outcome.kind));
  j["iterations_used"] = outcome.iterations_used;
  j["final_bids"] = outcome.final_profile.bids(grid);
  if (outcome.kind == OutcomeKind::cycle) {
    j["cycle"]["start"] = outcome.cycle_start;
    j["cycle"]["period"] = outcome.cycle_period;
    auto& states = j["cycle"]["profiles"] = nlohmann::ordered_json::array();
    for (const auto& p : outcome.cycle_profiles) states.push_back(p.bids(grid));
  }
  j["initial_bids"] = outcome.trace.initial.bids(grid);
  j["moves"] = outcome.trace.moves.size();
  j["diagnostic"] = outcome.diagnostic;
  return j.dump(indent);
}

}  // namespace sg
