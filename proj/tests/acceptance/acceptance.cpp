// Acceptance run: one PASS/FAIL line per criterion. Tolerances are pinned below.
//
//   storegame_acceptance [--only N[,N...]]
//
// The exit status is non-zero when a criterion fails, except for those listed in
// kKnownFailures, which still print FAIL with their evidence. A known failure that starts
// passing is reported and also fails the run, so the list cannot go stale.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "brute_force.hpp"
#include "instances.hpp"
#include "random.hpp"
#include "storegame/dispatch.hpp"
#include "storegame/errors.hpp"
#include "storegame/firm.hpp"
#include "storegame/game.hpp"
#include "storegame/harness.hpp"
#include "storegame/io.hpp"
#include "storegame/theory.hpp"

namespace {

constexpr double kFeasTol = 1e-6;        // MW, criteria 2 and 3
constexpr double kOracleRepro = 1e-9;    // relative, frozen brute-force values
constexpr double kObjectiveSlack = 1e-7; // relative, QP optimum may not exceed the grid optimum
constexpr double kBruteForceBudget = 60.0;
constexpr double kKktBudget = 300.0;
constexpr double kSweepBudget = 1800.0;

// Criterion 7: the solar-share margin rises once (0.4 -> 0.5) because capacity-constrained
// best replies keep cycling at low bids for solar 0.4 at the largest capacity while the
// same capacity at solar 0.5 leaves no firm with a retreat incentive.
const std::set<int> kKnownFailures{7};

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

sg::BaseProfiles synthetic_day() {
  auto p = sg::synth_profile(sg::ProfileKind::two_peak);
  return {p.demand, p.solar_shape, sg::TimeGrid{}};
}

// Objective values of the exhaustive grid search (41 points per power variable), computed
// once from the seeds below with sgtest::brute_force_dispatch. Seed 17 admits no grid point
// and is left out.
struct FrozenOracle {
  std::uint64_t seed;
  double objective;
};
const FrozenOracle kFrozen[] = {
    {0, 0},
    {1, 3215.3100000661502},
    {2, 15961.312500413436},
    {3, 75354.240014601586},
    {4, 61693.440008073601},
    {5, 0},
    {6, 12050.062500413436},
    {7, 6079.5000000735745},
    {8, 0},
    {9, 0},
    {10, 2255.8900000253498},
    {11, 19195.610001427776},
    {12, 0},
    {13, 0},
    {14, 0},
    {15, 0},
    {16, 22802.422500766836},
    {18, 33224.500004194364},
    {19, 37604.840004968595},
    {20, 42719.062514250938},
    {21, 2164.0000002400002},
    {22, 0},
    {23, 0},
};

Verdict criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  int ok = 0;
  int total = 0;
  double worst_gap = 0.0;
  std::string first_bad;
  for (const auto& f : kFrozen) {
    ++total;
    const auto market = sgtest::small_instance(f.seed);
    const auto bf = sgtest::brute_force_dispatch(market, sg::kDefaultEps0);
    const auto sol = sg::solve_dispatch(market);
    const double scale = std::max(1.0, std::abs(bf.objective));
    const bool repro = std::abs(bf.objective - f.objective) <= kOracleRepro * scale;
    const double gap = bf.objective - sol.objective;
    const bool below = sol.optimal() && gap >= -kObjectiveSlack * scale;
    const bool within = gap <= bf.resolution;
    worst_gap = std::max(worst_gap, gap / std::max(bf.resolution, 1e-300));
    if (repro && below && within) {
      ++ok;
    } else if (first_bad.empty()) {
      first_bad = " first mismatch seed " + std::to_string(f.seed);
    }
  }
  const double t = seconds_since(t0);
  Verdict v;
  v.pass = ok == total && total >= 20 && t < kBruteForceBudget;
  v.detail = std::to_string(ok) + "/" + std::to_string(total) + " instances within grid resolution, worst gap " +
             fmt("%.3f", worst_gap) + " of resolution, " + fmt("%.2f", t) + " s" + first_bad;
  return v;
}

Verdict criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kInstances = 200;
  int ok = 0;
  double worst = 0.0;
  std::string first_bad;
  for (int s = 0; s < kInstances; ++s) {
    const auto market = sgtest::day_instance(static_cast<std::uint64_t>(s));
    const auto sol = sg::solve_dispatch(market);
    bool good = sol.optimal();
    if (good) {
      const auto report = sg::validate_dispatch(sol, market, kFeasTol);
      const auto absorb = sg::absorb_analysis(market.net_load(), market.generator().p_g_min);
      const auto bounds = sg::capacity_bounds(absorb, market.firms(), market.bid_grid());
      const auto lemmas = sg::lemma_oracles(sol, market, bounds, sg::CMinEstimate{}, kFeasTol);
      const auto& comp = lemmas.check("lemma4_complementarity");
      const auto& chain = lemmas.check("lemma1_chain");
      worst = std::max({worst, report.max_residual(), comp.residual, chain.residual});
      good = report.passed() && comp.passed && chain.passed;
    }
    if (good) {
      ++ok;
    } else if (first_bad.empty()) {
      first_bad = " first failure seed " + std::to_string(s) + " (" + std::string(sg::to_string(sol.status)) + ")";
    }
  }
  const double t = seconds_since(t0);
  Verdict v;
  v.pass = ok == kInstances && t < kKktBudget;
  v.detail = std::to_string(ok) + "/" + std::to_string(kInstances) + " optimal and valid, worst residual " +
             fmt("%.2e", worst) + ", " + fmt("%.1f", t) + " s" + first_bad;
  return v;
}

Verdict criterion3() {
  constexpr int kWanted = 50;
  int checked = 0;
  int ok = 0;
  int skipped = 0;
  double worst = 0.0;
  std::string first_bad;
  for (std::uint64_t s = 0; checked < kWanted && s < 400; ++s) {
    const auto market = sgtest::duopoly_absorb_instance(s);
    const sg::DispatchSolver solver(market);
    const auto c_min = sg::estimate_c_min(solver);
    const auto& grid = market.bid_grid();
    if (!c_min.found || c_min.value >= grid.c_max()) {
      ++skipped;
      continue;
    }
    sgtest::Rng rng(s + 1000);
    const int lo = grid.tick(c_min.value);
    std::vector<int> ticks{rng.integer(lo, grid.size()), rng.integer(lo, grid.size())};
    if (s % 3 == 0) ticks[1] = ticks[0];
    const std::vector<double> bids{grid.bid(ticks[0]), grid.bid(ticks[1])};
    const auto sol = solver.solve(bids);
    ++checked;
    if (!sol.optimal()) {
      if (first_bad.empty()) first_bad = " solver failed at seed " + std::to_string(s);
      continue;
    }
    const auto absorb = sg::absorb_analysis(market.net_load(), market.generator().p_g_min);
    const auto bounds = sg::capacity_bounds(absorb, market.firms(), grid);
    double dev = 0.0;
    for (int k = 0; k < market.intervals(); ++k) {
      const double need = std::max(0.0, market.generator().p_g_min - market.net_load()[k]);
      dev = std::max(dev, std::abs(sol.p_chg.col(k).sum() - need));
    }
    for (int m = 0; m < 2; ++m) {
      const auto& b = bounds[m];
      const int own = ticks[static_cast<std::size_t>(m)];
      const int other = ticks[static_cast<std::size_t>(1 - m)];
      const double expect = own < other ? b.E_max : own > other ? b.E_min : b.E_split.value_or(-1.0);
      dev = std::max(dev, std::abs(sol.charged(m) - expect));
    }
    worst = std::max(worst, dev);
    if (dev <= kFeasTol) {
      ++ok;
    } else if (first_bad.empty()) {
      first_bad = " first mismatch seed " + std::to_string(s) + " by " + fmt("%.3e", dev);
    }
  }
  Verdict v;
  v.pass = checked >= kWanted && ok == checked;
  v.detail = std::to_string(ok) + "/" + std::to_string(checked) + " instances match per-k and per-firm totals, worst " +
             fmt("%.2e", worst) + " MW, " + std::to_string(skipped) + " without c_min skipped" + first_bad;
  return v;
}

Verdict criterion4() {
  constexpr int kWanted = 100;
  int applicable = 0;
  int ok = 0;
  int refused = 0;
  std::string first_bad;
  for (std::uint64_t s = 0; applicable < kWanted && s < 1000; ++s) {
    const auto market = sgtest::duopoly_absorb_instance(s + 5000, 0.3, 1.2);
    const sg::DispatchSolver solver(market);
    const auto c_min = sg::estimate_c_min(solver);
    const auto absorb = sg::absorb_analysis(market.net_load(), market.generator().p_g_min);
    const auto bounds = sg::capacity_bounds(absorb, market.firms(), market.bid_grid());
    const auto& grid = market.bid_grid();
    sgtest::Rng rng(s + 77);
    const int firm = static_cast<int>(s % 2);
    const int lo = c_min.found ? std::min(grid.size(), grid.tick(c_min.value) + 1) : 1;
    std::vector<int> ticks(2, grid.size());
    ticks[static_cast<std::size_t>(1 - firm)] = rng.integer(lo, grid.size());
    ticks[static_cast<std::size_t>(firm)] = rng.integer(1, grid.size());
    sg::BestResponse closed;
    try {
      closed = sg::best_response_closed_form(solver, ticks, firm, bounds, c_min);
    } catch (const sg::PreconditionsNotMet&) {
      ++refused;
      continue;
    }
    ++applicable;
    sg::EnumerateOptions opts;
    opts.keep_curve = false;
    const auto enumerated = sg::best_response_enumerate(solver, ticks, firm, opts);
    if (enumerated.chosen_bid == closed.chosen_bid) {
      ++ok;
    } else if (first_bad.empty()) {
      first_bad = " first mismatch seed " + std::to_string(s) + ": closed form " + fmt("%g", closed.chosen_bid) +
                  ", enumeration " + fmt("%g", enumerated.chosen_bid);
    }
  }
  Verdict v;
  v.pass = applicable >= kWanted && ok == applicable;
  v.detail = std::to_string(ok) + "/" + std::to_string(applicable) + " exact bid matches, " + std::to_string(refused) +
             " instances refused by the preconditions" + first_bad;
  return v;
}

// Two symmetric firms each holding rho * E_absorb on days whose excess and floor vary. Small
// rho leaves each firm a positive retreat threshold L above c_min; rho >= 1 gives L = 0.
struct FamilyPoint {
  double solar;
  double flexibility;
  double rho;
};

std::vector<FamilyPoint> threshold_family() {
  const std::pair<double, double> days[] = {{0.4, 0.25}, {0.4, 0.35}, {0.5, 0.125}, {0.5, 0.25}, {0.6, 0.125}};
  std::vector<FamilyPoint> out;
  for (const auto& [s, f] : days)
    for (int i = 0; i < 16; ++i) out.push_back({s, f, 0.56 + 0.06 * i});
  return out;
}

struct FamilyRun {
  int counted = 0;
  int agree = 0;
  int traces_ok = 0;
  int cycles = 0;
  std::string first_bad;
  std::string exports;
};

// Every move in a cycling trace either undercuts the rival by one tick or retreats to c_max.
bool descent_and_retreat(const sg::GameOutcome& out, const sg::BidGrid& grid) {
  bool saw_descent = false;
  bool saw_retreat = false;
  for (std::size_t i = out.cycle_start; i < out.trace.moves.size(); ++i) {
    const auto& mv = out.trace.moves[i];
    const auto before = out.trace.state(i).profile.ticks;
    const int other = before[static_cast<std::size_t>(1 - mv.mover)];
    const int now = mv.profile.ticks[static_cast<std::size_t>(mv.mover)];
    if (now == other - 1) {
      saw_descent = true;
    } else if (now == grid.size()) {
      saw_retreat = true;
    } else {
      return false;
    }
  }
  return saw_descent && saw_retreat;
}

FamilyRun run_family(int workers) {
  const auto base = synthetic_day();
  const double peak = *std::max_element(base.demand.begin(), base.demand.end());
  FamilyRun run;
  for (const auto& pt : threshold_family()) {
    const auto solar = sg::scale_solar_to_share(base.demand, base.solar_shape, pt.solar);
    auto net = sg::build_net_load(base.demand, solar, base.grid);
    sg::GeneratorModel gen;
    gen.p_g_min = pt.flexibility * peak;
    const double E = sg::absorb_analysis(net, gen.p_g_min).e_absorb;
    const double e = pt.rho * E * base.grid.delta();
    const sg::MarketInstance market(net, gen, {{e, 0.0, 100.0}, {e, 0.0, 100.0}}, sg::BidGrid{});
    const sg::DispatchSolver solver(market);
    const auto report = sg::predict_stability(solver, market.bid_grid().c_max());
    sg::GameOptions opts;
    opts.workers = workers;
    const auto out = sg::run_best_response(solver, sg::BidProfile::all_at_cap(2, market.bid_grid()), opts);
    run.exports += sg::outcome_json(out, market.bid_grid(), 0) + '\n';
    if (report.predicted == sg::StabilityVerdict::assumptions_violated) continue;
    ++run.counted;
    const bool unstable = report.predicted == sg::StabilityVerdict::unstable;
    const bool agree = unstable ? out.kind == sg::OutcomeKind::cycle : out.kind == sg::OutcomeKind::nash_equilibrium;
    run.agree += agree ? 1 : 0;
    if (out.kind == sg::OutcomeKind::cycle) {
      ++run.cycles;
      run.traces_ok += descent_and_retreat(out, market.bid_grid()) ? 1 : 0;
    }
    if (!agree && run.first_bad.empty())
      run.first_bad = " first disagreement solar " + fmt("%g", pt.solar) + " flexibility " + fmt("%g", pt.flexibility) +
                      " rho " + fmt("%.2f", pt.rho);
  }
  return run;
}

Verdict criterion5(FamilyRun& run) {
  run = run_family(1);
  Verdict v;
  v.pass = run.counted >= 40 && run.agree == run.counted && run.traces_ok == run.cycles && run.cycles > 0;
  v.detail = std::to_string(run.agree) + "/" + std::to_string(run.counted) + " verdicts match the dynamics, " +
             std::to_string(run.traces_ok) + "/" + std::to_string(run.cycles) + " cycles descend by delta and retreat to c_max" +
             run.first_bad;
  return v;
}

Verdict criterion6() {
  const auto base = synthetic_day();
  int checked = 0;
  int ok = 0;
  std::string first_bad;
  auto check = [&](const sg::MarketInstance& market, double expect, const std::string& label) {
    ++checked;
    const auto out = sg::run_best_response(market, sg::BidProfile::all_at_cap(1, market.bid_grid()));
    const double bid = market.bid_grid().bid(out.final_profile.ticks[0]);
    if (out.kind == sg::OutcomeKind::nash_equilibrium && bid == expect) {
      ++ok;
    } else if (first_bad.empty()) {
      first_bad = " first miss " + label + " settled at " + fmt("%g", bid);
    }
  };
  // Without excess energy: storage sized from the (zero) excess, and a flat day whose
  // storage has capacity but no price spread to trade on.
  for (double s : {0.0, 0.1, 0.2})
    for (double f : {0.125, 0.25}) {
      sg::InstanceParams p;
      p.structure = sg::MarketStructure::monopoly;
      p.solar_share = s;
      p.flexibility = f;
      const auto market = sg::build_instance(base.demand, base.solar_shape, p, base.grid);
      if (!sg::absorb_analysis(market.net_load(), market.generator().p_g_min).empty()) continue;
      check(market, market.bid_grid().delta(), "no-absorb solar " + fmt("%g", s));
    }
  const auto flat = sg::synth_profile(sg::ProfileKind::flat);
  for (double e : {10.0, 100.0, 1000.0}) {
    sg::GeneratorModel gen;
    gen.p_g_min = 50.0;
    const sg::MarketInstance market(sg::build_net_load(flat.demand, std::vector<double>(24, 0.0), sg::TimeGrid{}), gen,
                                    {{e, 0.0, 100.0}}, sg::BidGrid{});
    check(market, market.bid_grid().delta(), "flat e_max " + fmt("%g", e));
  }
  // With excess energy the operator must buy it at any price. Every point of the sweep grid;
  // at far more flexible floors a large store can earn more from arbitrage than from the cap.
  const sg::SweepGrid table;
  for (double s : table.solar_shares)
    for (double f : table.flexibility_levels)
      for (double cap : table.ess_caps) {
        sg::InstanceParams p;
        p.structure = sg::MarketStructure::monopoly;
        p.solar_share = s;
        p.flexibility = f;
        p.ess_cap = cap;
        try {
          const auto market = sg::build_instance(base.demand, base.solar_shape, p, base.grid);
          check(market, market.bid_grid().c_max(), "absorb solar " + fmt("%g", s) + " flexibility " + fmt("%g", f));
        } catch (const sg::InfeasibleInstance&) {
        }
      }
  Verdict v;
  v.pass = ok == checked && checked >= 10;
  v.detail = std::to_string(ok) + "/" + std::to_string(checked) + " monopolies settle at the expected bid" + first_bad;
  return v;
}

std::string margins(const sg::SweepResult& r, const char* axis) {
  std::string s = std::string(axis) + " [";
  bool first = true;
  for (const auto& [value, share] : sg::stable_margin(r, axis)) {
    s += (first ? "" : " ") + sg::format_number(value) + ":" + fmt("%.3f", share);
    first = false;
  }
  return s + "]";
}

Verdict criterion7(std::string& exported, int workers) {
  const auto t0 = std::chrono::steady_clock::now();
  sg::SweepOptions opts;
  opts.workers = workers;
  const auto result = sg::sweep_stability(sg::SweepGrid{}, synthetic_day(), opts);
  exported = sg::sweep_csv(result);
  const auto violations = sg::trend_violations(result);
  const double t = seconds_since(t0);
  Verdict v;
  v.pass = violations.empty() && t < kSweepBudget;
  v.detail = std::to_string(result.records.size()) + " points, " + std::to_string(violations.size()) + " margin violations";
  for (const auto& m : violations)
    v.detail += " (" + m.axis + " " + sg::format_number(m.from) + "->" + sg::format_number(m.to) + ": " +
                fmt("%.3f", m.share_from) + "->" + fmt("%.3f", m.share_to) + ")";
  v.detail += "; " + margins(result, "solar_share") + " " + margins(result, "ess_cap") + " " +
              margins(result, "flexibility") + ", " + fmt("%.0f", t) + " s";
  return v;
}

const std::vector<double> kCapLadder{100, 80, 60, 40, 20, 10};

Verdict criterion8(std::string& exported, int workers) {
  sg::SweepOptions opts;
  opts.workers = workers;
  const auto result = sg::price_cap_study(sg::SweepGrid{}, kCapLadder, synthetic_day(), opts);
  exported = sg::price_cap_csv(result);
  const auto violations = sg::price_cap_violations(result);
  Verdict v;
  v.pass = violations.empty() && result.rows.size() == 2 * kCapLadder.size();
  v.detail = std::to_string(violations.size()) + " violations; shares";
  for (const auto& row : result.rows)
    v.detail += " " + sg::format_number(row.cap) + "/" + sg::format_number(row.flexibility) + ":" + fmt("%.3f", row.share());
  return v;
}

Verdict criterion9() {
  const auto scenarios = sg::arbitrage_study(synthetic_day(), sg::ArbitrageParams{});
  bool ok = scenarios.size() == 3;
  std::string detail = "acceptance bids";
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const auto& sc = scenarios[i];
    detail += " " + sg::format_number(sc.solar_share) + ":" + (sc.acceptance_bid ? sg::format_number(*sc.acceptance_bid) : "none");
    if (!sc.acceptance_bid) ok = false;
    if (i > 0 && sc.acceptance_bid && scenarios[i - 1].acceptance_bid && *sc.acceptance_bid > *scenarios[i - 1].acceptance_bid)
      ok = false;
    const auto& top = sc.points.back();
    if (top.bid != sg::BidGrid{}.c_max() || top.share != 0.0 || top.arbitrage_energy != 0.0) ok = false;
  }
  detail += "; share at c_max";
  for (const auto& sc : scenarios) detail += " " + sg::format_number(sc.points.back().share);
  return {ok, detail};
}

Verdict criterion10(const FamilyRun& family, const std::string& sweep, const std::string& caps) {
  constexpr int kWorkers = 2;
  const auto family2 = run_family(kWorkers);
  std::string sweep2;
  std::string caps2;
  criterion7(sweep2, kWorkers);
  criterion8(caps2, kWorkers);
  const bool a = family2.exports == family.exports;
  const bool b = sweep2 == sweep;
  const bool c = caps2 == caps;
  Verdict v;
  v.pass = a && b && c && !family.exports.empty() && !sweep.empty() && !caps.empty();
  v.detail = std::string("workers 1 vs ") + std::to_string(kWorkers) + ": family " + (a ? "identical" : "differs") +
             ", sweep " + (b ? "identical" : "differs") + ", price caps " + (c ? "identical" : "differs") + " (" +
             std::to_string(family.exports.size() + sweep.size() + caps.size()) + " bytes)";
  return v;
}

std::set<int> parse_only(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--only") {
      std::stringstream ss(argv[i + 1]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    }
  return only;
}

}  // namespace

int main(int argc, char** argv) {
  auto only = parse_only(argc, argv);
  auto wanted = [&](int n) { return only.empty() || only.count(n) > 0; };
  // Determinism compares against the outputs of criteria 5, 7 and 8.
  if (!only.empty() && wanted(10)) only.insert({5, 7, 8});

  FamilyRun family;
  std::string sweep;
  std::string caps;
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
      {1, criterion1},
      {2, criterion2},
      {3, criterion3},
      {4, criterion4},
      {5, [&] { return criterion5(family); }},
      {6, criterion6},
      {7, [&] { return criterion7(sweep, 1); }},
      {8, [&] { return criterion8(caps, 1); }},
      {9, criterion9},
      {10, [&] { return criterion10(family, sweep, caps); }},
  };

  int unexpected = 0;
  for (const auto& [n, run] : criteria) {
    if (!wanted(n)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const bool known = kKnownFailures.count(n) > 0;
    std::printf("criterion %2d: %s  %s [%.1f s]%s\n", n, v.pass ? "PASS" : "FAIL", v.detail.c_str(), seconds_since(t0),
                !v.pass && known ? " (known failure)" : v.pass && known ? " (listed as known failure but passed)" : "");
    std::fflush(stdout);
    if (v.pass == known) ++unexpected;
  }
  std::printf("%d unexpected result(s)\n", unexpected);
  return unexpected == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
