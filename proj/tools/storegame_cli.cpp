// storegame: command-line front end for dispatch solves, best responses, games and sweeps.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "storegame/dispatch.hpp"
#include "storegame/errors.hpp"
#include "storegame/firm.hpp"
#include "storegame/game.hpp"
#include "storegame/harness.hpp"
#include "storegame/io.hpp"
#include "storegame/theory.hpp"

namespace {

enum Exit { kOk = 0, kInfeasible = 2, kSolver = 3, kBadInput = 4 };

struct Common {
  std::string profiles;
  std::string synthetic = "two-peak";
  double solar_share = 0.5;
  double ess_cap = 1.2;
  double flexibility = 0.25;
  std::string structure = "duopoly";
  double ess_frac = 2.0 / 3.0;
  double delta_bid = 1.0;
  double c_max = 100.0;
  int max_iter = 0;
  std::string out;
  std::string format = "csv";
  unsigned long long seed = 1;
  int workers = 1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--profiles", c.profiles, "CSV with hour,demand_mw,solar_mw");
  cmd->add_option("--synthetic", c.synthetic, "flat | triangle-dip | two-peak (used without --profiles)");
  cmd->add_option("--solar-share", c.solar_share, "solar energy / demand energy");
  cmd->add_option("--ess-cap", c.ess_cap, "storage energy / daily excess energy");
  cmd->add_option("--flexibility", c.flexibility, "p_g_min / peak demand");
  cmd->add_option("--structure", c.structure, "monopoly | duopoly");
  cmd->add_option("--ess-frac", c.ess_frac, "first firm's capacity share (duopoly)");
  cmd->add_option("--delta-bid", c.delta_bid, "bid increment, $/MWh");
  cmd->add_option("--c-max", c.c_max, "bid cap, $/MWh");
  cmd->add_option("--max-iter", c.max_iter, "game move limit (0 = 4 c_max/delta M)");
  cmd->add_option("--out", c.out, "output file (stdout when omitted)");
  cmd->add_option("--format", c.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  cmd->add_option("--seed", c.seed, "seed for randomized initial profiles");
  cmd->add_option("--workers", c.workers, "concurrent solves");
}

sg::BaseProfiles base_profiles(const Common& c) {
  sg::BaseProfiles base;
  if (!c.profiles.empty()) {
    auto s = sg::load_profiles_csv(c.profiles, 0);
    base.demand = std::move(s.demand);
    base.solar_shape = std::move(s.solar);
    base.grid = s.grid;
  } else {
    auto s = sg::synth_profile(sg::parse_profile_kind(c.synthetic));
    base.demand = std::move(s.demand);
    base.solar_shape = std::move(s.solar_shape);
  }
  return base;
}

sg::BidGrid bid_grid(const Common& c) {
  return c.c_max / c.delta_bid >= 20.0 ? sg::BidGrid(c.delta_bid, c.c_max)
                                       : sg::BidGrid::capped(c.delta_bid, c.c_max);
}

sg::InstanceParams instance_params(const Common& c) {
  sg::InstanceParams p;
  p.solar_share = c.solar_share;
  p.ess_cap = c.ess_cap;
  p.flexibility = c.flexibility;
  p.structure = sg::parse_market_structure(c.structure);
  p.ess_frac = c.ess_frac;
  p.bid_grid = bid_grid(c);
  return p;
}

sg::MarketInstance market(const Common& c, const std::vector<double>& bids) {
  const auto base = base_profiles(c);
  auto m = sg::build_instance(base.demand, base.solar_shape, instance_params(c), base.grid);
  if (bids.empty()) return m;
  if (static_cast<int>(bids.size()) != m.num_firms())
    throw sg::InvalidInput("--bids needs one value per firm");
  return m.with_bids(bids);
}

sg::SweepOptions sweep_options(const Common& c) {
  sg::SweepOptions o;
  o.bid_grid = bid_grid(c);
  o.max_iter = c.max_iter;
  o.workers = c.workers;
  return o;
}

void emit(const Common& c, const std::string& text) {
  if (c.out.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
  } else {
    sg::write_text_file(c.out, text);
  }
}

std::string vec_cell(const Eigen::MatrixXd& m, int row) {
  std::string s;
  for (Eigen::Index k = 0; k < m.cols(); ++k) s += (k ? ";" : "") + sg::format_number(m(row, k));
  return s;
}

int run_dispatch(const Common& c, const std::vector<double>& bids, const std::string& dump) {
  const auto mk = market(c, bids);
  if (!dump.empty()) sg::write_text_file(dump, sg::dump_triplets(sg::assemble_qp(mk)));
  const auto sol = sg::solve_dispatch(mk);
  if (!sol.optimal()) {
    std::cerr << "dispatch: " << sg::to_string(sol.status) << ": " << sol.diagnostic << '\n';
    return sol.status == sg::DispatchStatus::infeasible ? kInfeasible : kSolver;
  }
  const auto cost = sg::cost_breakdown(sol, mk);
  const auto val = sg::validate_dispatch(sol, mk);
  if (c.format == "json") {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["status"] = std::string(sg::to_string(sol.status));
    j["objective"] = sol.objective;
    j["kkt_residual"] = sol.kkt_residual;
    j["generation_cost"] = cost.generation_cost;
    j["storage_payment"] = cost.storage_payment;
    j["total_cost"] = cost.total;
    for (const auto& ch : val.checks) j["validation"][ch.name] = {{"passed", ch.passed}, {"residual", ch.residual}};
    for (int m = 0; m < mk.num_firms(); ++m) {
      j["p"].push_back(std::vector<double>(sol.p.row(m).begin(), sol.p.row(m).end()));
      j["p_chg"].push_back(std::vector<double>(sol.p_chg.row(m).begin(), sol.p_chg.row(m).end()));
    }
    emit(c, j.dump(2));
  } else {
    std::string s = "quantity,value\n";
    s += "objective," + sg::format_number(sol.objective) + '\n';
    s += "generation_cost," + sg::format_number(cost.generation_cost) + '\n';
    for (std::size_t m = 0; m < cost.storage_payment.size(); ++m)
      s += "storage_payment_" + std::to_string(m + 1) + ',' + sg::format_number(cost.storage_payment[m]) + '\n';
    s += "total_cost," + sg::format_number(cost.total) + '\n';
    for (const auto& ch : val.checks)
      s += "check_" + ch.name + ',' + (ch.passed ? "pass" : "fail") + ' ' + sg::format_number(ch.residual) + '\n';
    for (int m = 0; m < mk.num_firms(); ++m) {
      s += "p_" + std::to_string(m + 1) + ',' + vec_cell(sol.p, m) + '\n';
      s += "p_chg_" + std::to_string(m + 1) + ',' + vec_cell(sol.p_chg, m) + '\n';
    }
    emit(c, s);
  }
  return val.passed() ? kOk : kSolver;
}

int run_best_response(const Common& c, const std::vector<double>& bids, int firm, const std::string& method) {
  const auto mk = market(c, bids);
  if (firm < 1 || firm > mk.num_firms()) throw sg::InvalidInput("--firm out of range");
  sg::BestResponse br;
  if (method == "closed-form") {
    br = sg::best_response_closed_form(mk, firm - 1);
  } else {
    sg::EnumerateOptions o;
    o.workers = c.workers;
    br = sg::best_response_enumerate(mk, firm - 1, o);
  }
  for (const auto& w : br.warnings) std::cerr << "warning: " << w << '\n';
  std::cerr << "firm " << firm << " best bid " << sg::format_number(br.chosen_bid) << " profit "
            << sg::format_number(br.profit) << " (" << sg::to_string(br.method) << ")\n";
  if (c.format == "json") {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["firm"] = firm;
    j["method"] = std::string(sg::to_string(br.method));
    j["chosen_bid"] = br.chosen_bid;
    j["profit"] = br.profit;
    for (const auto& p : br.profit_curve)
      j["profit_curve"].push_back({{"bid", p.bid}, {"charged_energy", p.charged_energy}, {"profit", p.profit}});
    emit(c, j.dump(2));
  } else {
    emit(c, sg::profit_curve_csv(br));
  }
  return kOk;
}

int run_game(const Common& c, const std::vector<double>& bids, bool random_initial) {
  const auto mk = market(c, {});
  const auto& grid = mk.bid_grid();
  sg::BidProfile initial = sg::BidProfile::all_at_cap(mk.num_firms(), grid);
  if (random_initial) {
    std::mt19937_64 rng(c.seed);
    std::uniform_int_distribution<int> tick(1, grid.size());
    for (auto& t : initial.ticks) t = tick(rng);
  } else if (!bids.empty()) {
    if (static_cast<int>(bids.size()) != mk.num_firms()) throw sg::InvalidInput("--bids needs one value per firm");
    initial = sg::BidProfile::from_bids(bids, grid);
  }
  sg::GameOptions o;
  o.max_iter = c.max_iter;
  o.workers = c.workers;
  const auto outcome = sg::run_best_response(mk, initial, o);
  std::cerr << "outcome " << sg::to_string(outcome.kind) << " after " << outcome.iterations_used << " moves";
  if (outcome.kind == sg::OutcomeKind::cycle) std::cerr << ", period " << outcome.cycle_period;
  std::cerr << '\n';
  emit(c, c.format == "json" ? sg::outcome_json(outcome, grid) : sg::trace_csv(outcome.trace, grid));
  return kOk;
}

int run_predict(const Common& c, std::optional<double> c1) {
  const auto mk = market(c, {});
  const auto rep = sg::predict_stability(mk, c1.value_or(mk.bid_grid().c_max()));
  emit(c, sg::to_json(rep));
  return kOk;
}

struct GridArgs {
  std::vector<double> solar{0.3, 0.4, 0.5, 0.6, 0.7};
  std::vector<double> caps{1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.4, 2.6, 2.8, 3.0};
  std::vector<double> flex{0.125, 0.25};
};

void add_grid(CLI::App* cmd, GridArgs& g) {
  cmd->add_option("--solar-shares", g.solar, "solar share axis")->delimiter(',');
  cmd->add_option("--ess-caps", g.caps, "storage capacity axis")->delimiter(',');
  cmd->add_option("--flexibility-levels", g.flex, "p_g_min / peak axis")->delimiter(',');
}

sg::SweepGrid sweep_grid(const Common& c, const GridArgs& g) {
  sg::SweepGrid grid;
  grid.solar_shares = g.solar;
  grid.ess_caps = g.caps;
  grid.flexibility_levels = g.flex;
  grid.structure = sg::parse_market_structure(c.structure);
  grid.ess_frac = c.ess_frac;
  return grid;
}

int run_sweep(const Common& c, const GridArgs& g) {
  const auto result = sg::sweep_stability(sweep_grid(c, g), base_profiles(c), sweep_options(c));
  std::cerr << "stable fraction " << sg::format_number(result.stable_fraction()) << " over "
            << result.records.size() << " points\n";
  for (const auto& v : sg::trend_violations(result))
    std::cerr << "trend violation on " << v.axis << ": " << sg::format_number(v.from) << " -> "
              << sg::format_number(v.to) << '\n';
  emit(c, c.format == "json" ? sg::sweep_json(result) + '\n' : sg::sweep_csv(result));
  return kOk;
}

int run_price_cap(const Common& c, const GridArgs& g, const std::vector<double>& caps) {
  const auto result = sg::price_cap_study(sweep_grid(c, g), caps, base_profiles(c), sweep_options(c));
  for (const auto& v : sg::price_cap_violations(result))
    std::cerr << "share fell on " << v.axis << " from cap " << sg::format_number(v.from) << " to "
              << sg::format_number(v.to) << '\n';
  if (c.format == "json") {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    for (const auto& r : result.rows)
      j["rows"].push_back({{"cap", r.cap}, {"flexibility", r.flexibility}, {"stable", r.stable},
                           {"feasible", r.feasible}, {"total", r.total}, {"stable_share", r.share()}});
    emit(c, j.dump(2));
  } else {
    emit(c, sg::price_cap_csv(result));
  }
  return kOk;
}

int run_arbitrage(const Common& c, const std::vector<double>& scenarios, const std::string& profiles_out,
                  double ess_cap, double flexibility) {
  sg::ArbitrageParams p;
  p.solar_scenarios = scenarios;
  p.ess_cap = ess_cap;
  p.flexibility = flexibility;
  p.bid_grid = bid_grid(c);
  p.workers = c.workers;
  const auto result = sg::arbitrage_study(base_profiles(c), p);
  for (const auto& s : result)
    std::cerr << "solar " << sg::format_number(s.solar_share) << ": largest bid accepted for arbitrage "
              << (s.acceptance_bid ? sg::format_number(*s.acceptance_bid) : std::string("none")) << '\n';
  if (!profiles_out.empty()) sg::write_text_file(profiles_out, sg::arbitrage_profiles_csv(result));
  emit(c, sg::arbitrage_csv(result));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Storage competition in a wholesale market: dispatch, best responses and games"};
  app.require_subcommand(1);
  Common common;
  std::vector<double> bids;
  GridArgs grid;

  auto* dispatch = app.add_subcommand("dispatch", "solve the operator's dispatch once");
  add_common(dispatch, common);
  dispatch->add_option("--bids", bids, "one bid per firm (default c_max)")->delimiter(',');
  std::string dump;
  dispatch->add_option("--dump-qp", dump, "write the assembled QP as sparse triplets");

  auto* best = app.add_subcommand("best-response", "one firm's profit curve and best bid");
  add_common(best, common);
  best->add_option("--bids", bids, "current bid profile")->delimiter(',');
  int firm = 1;
  best->add_option("--firm", firm, "1-based firm index");
  std::string method = "enumeration";
  best->add_option("--method", method, "enumeration | closed-form")
      ->check(CLI::IsMember({"enumeration", "closed-form"}));

  auto* game = app.add_subcommand("game", "best-response dynamics from an initial profile");
  add_common(game, common);
  game->add_option("--bids", bids, "initial profile (default all at c_max)")->delimiter(',');
  bool random_initial = false;
  game->add_flag("--random-initial", random_initial, "draw the initial profile from --seed");

  auto* predict = app.add_subcommand("predict", "stability report for one instance");
  add_common(predict, common);
  std::optional<double> c1;
  predict->add_option("--c1-initial", c1, "firm 1's opening bid (default c_max)");

  auto* sweep = app.add_subcommand("sweep", "stability map over solar share, capacity and flexibility");
  add_common(sweep, common);
  add_grid(sweep, grid);

  auto* cap = app.add_subcommand("price-cap", "stable share per price cap");
  add_common(cap, common);
  add_grid(cap, grid);
  std::vector<double> caps{100, 80, 60, 40, 20, 10};
  cap->add_option("--caps", caps, "price caps, $/MWh")->delimiter(',');

  auto* arb = app.add_subcommand("arbitrage", "storage used for arbitrage against the bid level");
  add_common(arb, common);
  std::vector<double> scenarios{0.0, 0.05, 0.10};
  arb->add_option("--solar-scenarios", scenarios, "solar shares")->delimiter(',');
  std::string profiles_out;
  arb->add_option("--profiles-out", profiles_out, "write net load and supply profiles here");
  double arb_cap = 1.5;
  double arb_flex = 0.6;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadInput;
  }
  if (arb->parsed()) {
    // Arbitrage has its own defaults for the shared capacity and flexibility flags.
    if (arb->count("--ess-cap")) arb_cap = common.ess_cap;
    if (arb->count("--flexibility")) arb_flex = common.flexibility;
  }

  try {
    if (dispatch->parsed()) return run_dispatch(common, bids, dump);
    if (best->parsed()) return run_best_response(common, bids, firm, method);
    if (game->parsed()) return run_game(common, bids, random_initial);
    if (predict->parsed()) return run_predict(common, c1);
    if (sweep->parsed()) return run_sweep(common, grid);
    if (cap->parsed()) return run_price_cap(common, grid, caps);
    if (arb->parsed()) return run_arbitrage(common, scenarios, profiles_out, arb_cap, arb_flex);
  } catch (const sg::InfeasibleInstance& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kInfeasible;
  } catch (const sg::SolverFailure& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolver;
  } catch (const sg::PreconditionsNotMet& e) {
    std::cerr << "closed form not applicable: " << e.what() << " (use --method enumeration)\n";
    return kBadInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "bad input: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kSolver;
  }
  return kBadInput;
}
