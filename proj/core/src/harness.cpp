#include "storegame/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "parallel.hpp"
#include "storegame/errors.hpp"
#include "storegame/io.hpp"

namespace sg {

MarketStructure parse_market_structure(std::string_view name) {
  if (name == "monopoly") return MarketStructure::monopoly;
  if (name == "duopoly") return MarketStructure::duopoly;
  throw InvalidInput("unknown market structure '" + std::string(name) + "'");
}

std::string_view to_string(MarketStructure structure) {
  return structure == MarketStructure::monopoly ? "monopoly" : "duopoly";
}

MarketInstance build_instance(std::span<const double> demand, std::span<const double> solar_shape,
                              const InstanceParams& params, const TimeGrid& grid) {
  if (!(params.solar_share >= 0.0 && params.solar_share < 1.0))
    throw InvalidInput("build_instance: solar share must lie in [0, 1)");
  if (!(params.ess_cap >= 0.0) || !std::isfinite(params.ess_cap))
    throw InvalidInput("build_instance: ess_cap must be a finite non-negative number");
  if (!(params.flexibility >= 0.0 && params.flexibility <= 1.0))
    throw InvalidInput("build_instance: flexibility must lie in [0, 1]");
  if (params.structure == MarketStructure::duopoly && !(params.ess_frac > 0.0 && params.ess_frac < 1.0))
    throw InvalidInput("build_instance: ess_frac must lie in (0, 1)");
  if (demand.empty()) throw InvalidInput("build_instance: empty demand");

  const double peak = *std::max_element(demand.begin(), demand.end());
  GeneratorModel gen;
  gen.a = params.a;
  gen.b = params.b;
  gen.p_g_min = params.flexibility * peak;
  gen.validate();
  const auto solar = params.solar_share > 0.0
                         ? scale_solar_to_share(demand, solar_shape, params.solar_share)
                         : std::vector<double>(demand.size(), 0.0);
  auto net = build_net_load(demand, solar, grid);
  const auto absorb = absorb_analysis(net, gen.p_g_min);
  const double total = params.ess_cap * grid.delta() * absorb.e_absorb;
  std::vector<StorageFirm> firms;
  const double c_max = params.bid_grid.c_max();
  if (params.structure == MarketStructure::monopoly) {
    firms.push_back({total, 0.0, c_max});
  } else {
    firms.push_back({params.ess_frac * total, 0.0, c_max});
    firms.push_back({(1.0 - params.ess_frac) * total, 0.0, c_max});
  }
  return MarketInstance(std::move(net), gen, std::move(firms), params.bid_grid);
}

void SweepGrid::validate() const {
  if (solar_shares.empty() || ess_caps.empty() || flexibility_levels.empty())
    throw InvalidInput("sweep grid: every axis needs at least one value");
  for (double s : solar_shares)
    if (!(s > 0.0 && s < 1.0)) throw InvalidInput("sweep grid: solar shares must lie in (0, 1)");
  for (double c : ess_caps)
    if (!(c > 0.0) || !std::isfinite(c)) throw InvalidInput("sweep grid: ess caps must be positive");
  for (double f : flexibility_levels)
    if (!(f > 0.0 && f <= 1.0)) throw InvalidInput("sweep grid: flexibility levels must lie in (0, 1]");
  if (structure == MarketStructure::duopoly && !(ess_frac > 0.0 && ess_frac < 1.0))
    throw InvalidInput("sweep grid: ess_frac must lie in (0, 1)");
}

bool SweepRecord::agrees() const noexcept {
  if (!feasible || !outcome) return true;
  switch (predicted) {
    case StabilityVerdict::unstable: return *outcome == OutcomeKind::cycle;
    case StabilityVerdict::stable: return *outcome == OutcomeKind::nash_equilibrium;
    case StabilityVerdict::assumptions_violated: return true;
  }
  return true;
}

double SweepResult::stable_fraction() const noexcept {
  if (records.empty()) return 0.0;
  const auto n = std::count_if(records.begin(), records.end(), [](const auto& r) { return r.stable(); });
  return static_cast<double>(n) / static_cast<double>(records.size());
}

SweepRecord evaluate_point(const BaseProfiles& base, const InstanceParams& params,
                           const SweepOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  SweepRecord rec;
  rec.solar_share = params.solar_share;
  rec.ess_cap = params.ess_cap;
  rec.flexibility = params.flexibility;
  const int M = params.structure == MarketStructure::monopoly ? 1 : 2;
  rec.L.assign(static_cast<std::size_t>(M), std::nullopt);
  auto finish = [&] {
    rec.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
  };
  std::optional<MarketInstance> market;
  try {
    market.emplace(build_instance(base.demand, base.solar_shape, params, base.grid));
  } catch (const InfeasibleInstance& e) {
    rec.feasible = false;
    rec.diagnostic = e.what();
    return finish();
  }
  const DispatchSolver solver(*market, options.dispatch);
  const auto& grid = market->bid_grid();
  auto report = predict_stability(solver, grid.c_max());
  rec.predicted = report.predicted;
  rec.e_absorb = report.absorb.e_absorb;
  if (report.c_min.found) rec.c_min = report.c_min.value;
  for (int m = 0; m < M; ++m) rec.L[static_cast<std::size_t>(m)] = report.bounds[m].L;
  if (options.keep_reports) rec.report = std::move(report);

  DispatchCache cache;
  GameOptions game;
  game.max_iter = options.max_iter;
  try {
    const auto outcome = run_best_response(solver, BidProfile::all_at_cap(M, grid), game, &cache);
    rec.outcome = outcome.kind;
    rec.iterations = outcome.iterations_used;
    rec.cycle_period = outcome.cycle_period;
    rec.final_bids = outcome.final_profile.bids(grid);
    rec.diagnostic = outcome.diagnostic;
    auto entry = cache.find(outcome.final_profile.ticks);
    if (!entry) {
      auto sol = solver.solve(rec.final_bids);
      DispatchCache::Entry e;
      e.status = sol.status;
      e.diagnostic = sol.diagnostic;
      if (sol.optimal())
        for (int m = 0; m < M; ++m) e.charged.push_back(std::max(0.0, sol.charged(m) * base.grid.delta()));
      entry = std::move(e);
    }
    if (entry->status == DispatchStatus::optimal)
      for (int m = 0; m < M; ++m)
        rec.profits.push_back(rec.final_bids[static_cast<std::size_t>(m)] *
                              entry->charged[static_cast<std::size_t>(m)]);
  } catch (const SolverFailure& e) {
    rec.outcome.reset();
    std::string what = e.what();
    rec.diagnostic = what.substr(0, what.find('\n'));
  }
  return finish();
}

SweepResult sweep_stability(const SweepGrid& grid, const BaseProfiles& base, const SweepOptions& options) {
  grid.validate();
  std::vector<InstanceParams> points;
  for (double s : grid.solar_shares)
    for (double c : grid.ess_caps)
      for (double f : grid.flexibility_levels) {
        InstanceParams p;
        p.solar_share = s;
        p.ess_cap = c;
        p.flexibility = f;
        p.structure = grid.structure;
        p.ess_frac = grid.ess_frac;
        p.bid_grid = options.bid_grid;
        p.a = options.a;
        p.b = options.b;
        points.push_back(p);
      }
  SweepResult result;
  result.structure = grid.structure;
  result.records.resize(points.size());
  detail::parallel_for(static_cast<int>(points.size()), options.workers, [&](int i) {
    result.records[static_cast<std::size_t>(i)] =
        evaluate_point(base, points[static_cast<std::size_t>(i)], options);
  });
  return result;
}

std::vector<std::pair<double, double>> stable_margin(const SweepResult& result, std::string_view axis) {
  auto key = [&](const SweepRecord& r) {
    if (axis == "solar_share") return r.solar_share;
    if (axis == "ess_cap") return r.ess_cap;
    if (axis == "flexibility") return r.flexibility;
    throw InvalidInput("stable_margin: unknown axis '" + std::string(axis) + "'");
  };
  std::map<double, std::pair<int, int>> counts;
  for (const auto& r : result.records) {
    auto& c = counts[key(r)];
    c.first += r.stable() ? 1 : 0;
    ++c.second;
  }
  std::vector<std::pair<double, double>> out;
  for (const auto& [v, c] : counts) out.emplace_back(v, static_cast<double>(c.first) / c.second);
  return out;
}

namespace {

void check_monotone(const std::vector<std::pair<double, double>>& margin, std::string_view axis,
                    bool increasing, std::vector<MarginViolation>& out) {
  for (std::size_t i = 1; i < margin.size(); ++i) {
    const double before = margin[i - 1].second;
    const double after = margin[i].second;
    if (increasing ? after < before : after > before)
      out.push_back({std::string(axis), margin[i - 1].first, margin[i].first, before, after});
  }
}

}  // namespace

std::vector<MarginViolation> trend_violations(const SweepResult& result) {
  std::vector<MarginViolation> out;
  check_monotone(stable_margin(result, "solar_share"), "solar_share", false, out);
  check_monotone(stable_margin(result, "ess_cap"), "ess_cap", true, out);
  check_monotone(stable_margin(result, "flexibility"), "flexibility", false, out);
  return out;
}

PriceCapResult price_cap_study(const SweepGrid& grid, std::span<const double> caps,
                               const BaseProfiles& base, const SweepOptions& options) {
  if (caps.empty()) throw InvalidInput("price_cap_study: no caps given");
  PriceCapResult out;
  for (double cap : caps) {
    SweepOptions opts = options;
    opts.bid_grid = BidGrid::capped(options.bid_grid.delta(), cap);
    auto sweep = sweep_stability(grid, base, opts);
    std::map<double, PriceCapRow> rows;
    for (const auto& r : sweep.records) {
      auto& row = rows[r.flexibility];
      row.cap = cap;
      row.flexibility = r.flexibility;
      row.stable += r.stable() ? 1 : 0;
      row.feasible += r.feasible ? 1 : 0;
      ++row.total;
    }
    for (const auto& [f, row] : rows) out.rows.push_back(row);
    out.sweeps.push_back(std::move(sweep));
  }
  return out;
}

std::vector<MarginViolation> price_cap_violations(const PriceCapResult& result) {
  std::map<double, std::vector<std::pair<double, double>>> by_flex;
  for (const auto& row : result.rows) by_flex[row.flexibility].emplace_back(row.cap, row.share());
  std::vector<MarginViolation> out;
  for (auto& [f, series] : by_flex) {
    std::sort(series.begin(), series.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
    for (std::size_t i = 1; i < series.size(); ++i)
      if (series[i].second < series[i - 1].second)
        out.push_back({"cap@flexibility=" + format_number(f), series[i - 1].first, series[i].first,
                       series[i - 1].second, series[i].second});
  }
  return out;
}

std::vector<ArbitrageScenario> arbitrage_study(const BaseProfiles& base, const ArbitrageParams& params) {
  if (params.solar_scenarios.empty()) throw InvalidInput("arbitrage_study: no scenarios");
  std::vector<ArbitrageScenario> out(params.solar_scenarios.size());
  const double dt = base.grid.delta();
  detail::parallel_for(static_cast<int>(out.size()), params.workers, [&](int i) {
    InstanceParams ip;
    ip.solar_share = params.solar_scenarios[static_cast<std::size_t>(i)];
    ip.ess_cap = params.ess_cap;
    ip.flexibility = params.flexibility;
    ip.structure = MarketStructure::monopoly;
    ip.bid_grid = params.bid_grid;
    ip.a = params.a;
    ip.b = params.b;
    const auto market = build_instance(base.demand, base.solar_shape, ip, base.grid);
    const DispatchSolver solver(market, params.dispatch);
    const auto& grid = market.bid_grid();
    auto& sc = out[static_cast<std::size_t>(i)];
    sc.solar_share = ip.solar_share;
    sc.capacity = market.firm(0).e_max;
    sc.balancing_energy = dt * absorb_analysis(market.net_load(), market.generator().p_g_min).e_absorb;
    sc.net_load = market.net_load().values();
    const double free_capacity = sc.capacity - sc.balancing_energy;
    const double tol = params.dispatch.feas_tol * market.intervals() * dt;
    auto supply = [&](const DispatchSolution& sol) {
      std::vector<double> s(sc.net_load);
      for (int k = 0; k < market.intervals(); ++k) s[static_cast<std::size_t>(k)] += sol.p.col(k).sum();
      return s;
    };
    std::shared_ptr<const DispatchWarmStart> hint;
    for (int t = 1; t <= grid.size(); ++t) {
      const double bid = grid.bid(t);
      const std::vector<double> bids{bid};
      const auto sol = solver.solve(bids, hint);
      if (!sol.optimal())
        throw SolverFailure("arbitrage_study: dispatch failed at bid " + format_number(bid) + ": " +
                            sol.diagnostic);
      hint = sol.warm_start;
      ArbitragePoint pt;
      pt.bid = bid;
      pt.charged_energy = std::max(0.0, sol.charged(0) * dt);
      const double extra = pt.charged_energy - sc.balancing_energy;
      pt.arbitrage_energy = extra > tol ? extra : 0.0;
      pt.share = free_capacity > 0.0 ? pt.arbitrage_energy / free_capacity : 0.0;
      if (pt.arbitrage_energy > 0.0) sc.acceptance_bid = bid;
      if (t == 1) sc.supply_min_bid = supply(sol);
      if (t == grid.size()) sc.supply_max_bid = supply(sol);
      sc.points.push_back(pt);
    }
  });
  return out;
}

namespace {

std::string opt_cell(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

std::optional<double> opt_parse(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

int firm_count(MarketStructure s) { return s == MarketStructure::monopoly ? 1 : 2; }

StabilityVerdict parse_verdict(std::string_view s) {
  if (s == "stable") return StabilityVerdict::stable;
  if (s == "unstable") return StabilityVerdict::unstable;
  if (s == "assumptions_violated") return StabilityVerdict::assumptions_violated;
  throw InvalidInput("unknown verdict '" + std::string(s) + "'");
}

std::optional<OutcomeKind> parse_outcome(std::string_view s) {
  if (s == "none") return std::nullopt;
  if (s == "nash_equilibrium") return OutcomeKind::nash_equilibrium;
  if (s == "cycle") return OutcomeKind::cycle;
  if (s == "iteration_cap") return OutcomeKind::iteration_cap;
  throw InvalidInput("unknown outcome '" + std::string(s) + "'");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string csv_header(int M) {
  std::string h = "structure,solar_share,ess_cap,flexibility,feasible,predicted,e_absorb,c_min";
  for (int m = 1; m <= M; ++m) h += ",L_" + std::to_string(m);
  h += ",outcome,iterations,cycle_period";
  for (int m = 1; m <= M; ++m) h += ",bid_" + std::to_string(m);
  for (int m = 1; m <= M; ++m) h += ",profit_" + std::to_string(m);
  return h + '\n';
}

}  // namespace

std::string sweep_csv(const SweepResult& result) {
  const int M = firm_count(result.structure);
  std::string out = csv_header(M);
  for (const auto& r : result.records) {
    out += std::string(to_string(result.structure)) + ',' + format_number(r.solar_share) + ',' +
           format_number(r.ess_cap) + ',' + format_number(r.flexibility) + ',' +
           (r.feasible ? "1" : "0") + ',' + std::string(to_string(r.predicted)) + ',' +
           format_number(r.e_absorb) + ',' + opt_cell(r.c_min);
    for (int m = 0; m < M; ++m)
      out += ',' + (static_cast<std::size_t>(m) < r.L.size() ? opt_cell(r.L[static_cast<std::size_t>(m)]) : "");
    out += ',' + (r.outcome ? std::string(to_string(*r.outcome)) : std::string("none")) + ',' +
           std::to_string(r.iterations) + ',' + std::to_string(r.cycle_period);
    for (int m = 0; m < M; ++m)
      out += ',' + (static_cast<std::size_t>(m) < r.final_bids.size()
                        ? format_number(r.final_bids[static_cast<std::size_t>(m)])
                        : std::string());
    for (int m = 0; m < M; ++m)
      out += ',' + (static_cast<std::size_t>(m) < r.profits.size()
                        ? format_number(r.profits[static_cast<std::size_t>(m)])
                        : std::string());
    out += '\n';
  }
  return out;
}

SweepResult parse_sweep_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("sweep csv: empty input");
  SweepResult result;
  int M = 0;
  if ((line + '\n') == csv_header(1)) {
    M = 1;
    result.structure = MarketStructure::monopoly;
  } else if ((line + '\n') == csv_header(2)) {
    M = 2;
    result.structure = MarketStructure::duopoly;
  } else {
    throw InvalidInput("sweep csv: unrecognized header");
  }
  const std::size_t width = 11 + 3 * static_cast<std::size_t>(M);
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    auto c = split_csv(line);
    if (c.size() != width)
      throw InvalidInput("sweep csv: row " + std::to_string(row) + " has " + std::to_string(c.size()) +
                         " cells, expected " + std::to_string(width));
    if (parse_market_structure(c[0]) != result.structure)
      throw InvalidInput("sweep csv: row " + std::to_string(row) + " mixes market structures");
    SweepRecord r;
    try {
      std::size_t i = 1;
      r.solar_share = std::stod(c[i++]);
      r.ess_cap = std::stod(c[i++]);
      r.flexibility = std::stod(c[i++]);
      r.feasible = c[i++] == "1";
      r.predicted = parse_verdict(c[i++]);
      r.e_absorb = std::stod(c[i++]);
      r.c_min = opt_parse(c[i++]);
      for (int m = 0; m < M; ++m) r.L.push_back(opt_parse(c[i++]));
      r.outcome = parse_outcome(c[i++]);
      r.iterations = std::stoi(c[i++]);
      r.cycle_period = static_cast<std::size_t>(std::stoul(c[i++]));
      for (int m = 0; m < M; ++m)
        if (auto v = opt_parse(c[i++])) r.final_bids.push_back(*v);
      for (int m = 0; m < M; ++m)
        if (auto v = opt_parse(c[i++])) r.profits.push_back(*v);
    } catch (const std::logic_error& e) {
      throw InvalidInput("sweep csv: row " + std::to_string(row) + ": " + e.what());
    }
    result.records.push_back(std::move(r));
  }
  return result;
}

namespace {

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::optional<double> json_opt(const nlohmann::ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

std::string sweep_json(const SweepResult& result, int indent) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["structure"] = std::string(to_string(result.structure));
  auto& recs = j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : result.records) {
    nlohmann::ordered_json o;
    o["solar_share"] = r.solar_share;
    o["ess_cap"] = r.ess_cap;
    o["flexibility"] = r.flexibility;
    o["feasible"] = r.feasible;
    o["predicted"] = std::string(to_string(r.predicted));
    o["e_absorb"] = r.e_absorb;
    o["c_min"] = opt_json(r.c_min);
    auto& L = o["L"] = nlohmann::ordered_json::array();
    for (const auto& v : r.L) L.push_back(opt_json(v));
    o["outcome"] = r.outcome ? std::string(to_string(*r.outcome)) : std::string("none");
    o["iterations"] = r.iterations;
    o["cycle_period"] = r.cycle_period;
    o["final_bids"] = r.final_bids;
    o["profits"] = r.profits;
    o["diagnostic"] = r.diagnostic;
    recs.push_back(std::move(o));
  }
  return j.dump(indent);
}

SweepResult parse_sweep_json(std::string_view text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("sweep json: ") + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != 1) throw InvalidInput("sweep json: unsupported schema_version");
    SweepResult result;
    result.structure = parse_market_structure(j.at("structure").get<std::string>());
    for (const auto& o : j.at("records")) {
      SweepRecord r;
      r.solar_share = o.at("solar_share").get<double>();
      r.ess_cap = o.at("ess_cap").get<double>();
      r.flexibility = o.at("flexibility").get<double>();
      r.feasible = o.at("feasible").get<bool>();
      r.predicted = parse_verdict(o.at("predicted").get<std::string>());
      r.e_absorb = o.at("e_absorb").get<double>();
      r.c_min = json_opt(o.at("c_min"));
      for (const auto& v : o.at("L")) r.L.push_back(json_opt(v));
      r.outcome = parse_outcome(o.at("outcome").get<std::string>());
      r.iterations = o.at("iterations").get<int>();
      r.cycle_period = o.at("cycle_period").get<std::size_t>();
      r.final_bids = o.at("final_bids").get<std::vector<double>>();
      r.profits = o.at("profits").get<std::vector<double>>();
      r.diagnostic = o.at("diagnostic").get<std::string>();
      result.records.push_back(std::move(r));
    }
    return result;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("sweep json: ") + e.what());
  }
}

std::string price_cap_csv(const PriceCapResult& result) {
  std::string out = "cap,flexibility,stable,feasible,total,stable_share\n";
  for (const auto& r : result.rows)
    out += format_number(r.cap) + ',' + format_number(r.flexibility) + ',' + std::to_string(r.stable) +
           ',' + std::to_string(r.feasible) + ',' + std::to_string(r.total) + ',' +
           format_number(r.share()) + '\n';
  return out;
}

std::string arbitrage_csv(const std::vector<ArbitrageScenario>& scenarios) {
  std::string out = "solar_share,bid,charged_energy,arbitrage_energy,arbitrage_share\n";
  for (const auto& s : scenarios)
    for (const auto& p : s.points)
      out += format_number(s.solar_share) + ',' + format_number(p.bid) + ',' +
             format_number(p.charged_energy) + ',' + format_number(p.arbitrage_energy) + ',' +
             format_number(p.share) + '\n';
  return out;
}

std::string arbitrage_profiles_csv(const std::vector<ArbitrageScenario>& scenarios) {
  std::string out = "solar_share,hour,net_load,supply_max_bid,supply_min_bid\n";
  for (const auto& s : scenarios)
    for (std::size_t k = 0; k < s.net_load.size(); ++k)
      out += format_number(s.solar_share) + ',' + std::to_string(k) + ',' + format_number(s.net_load[k]) +
             ',' + format_number(s.supply_max_bid[k]) + ',' + format_number(s.supply_min_bid[k]) + '\n';
  return out;
}

ExportFormat parse_export_format(std::string_view name) {
  if (name == "csv") return ExportFormat::csv;
  if (name == "json") return ExportFormat::json;
  throw InvalidInput("unknown format '" + std::string(name) + "'");
}

void export_results(const SweepResult& result, const std::filesystem::path& path, ExportFormat format) {
  write_text_file(path, format == ExportFormat::csv ? sweep_csv(result) : sweep_json(result) + '\n');
}

SweepResult import_results(const std::filesystem::path& path, ExportFormat format) {
  const auto text = read_text_file(path);
  return format == ExportFormat::csv ? parse_sweep_csv(text) : parse_sweep_json(text);
}

}  // namespace sg
