#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "storegame/errors.hpp"
#include "storegame/harness.hpp"
#include "storegame/io.hpp"
#include "storegame/theory.hpp"

namespace {

sg::BaseProfiles base() {
  const auto p = sg::synth_profile(sg::ProfileKind::two_peak);
  return {p.demand, p.solar_shape, sg::TimeGrid{}};
}

TEST(BuildInstance, CapacityFollowsTheAbsorbEnergy) {
  const auto b = base();
  sg::InstanceParams ip;
  ip.ess_cap = 1.2;
  const auto m = sg::build_instance(b.demand, b.solar_shape, ip);
  const double E = sg::absorb_analysis(m.net_load(), m.generator().p_g_min).e_absorb;
  ASSERT_GT(E, 0.0);
  EXPECT_NEAR(m.firm(0).e_max + m.firm(1).e_max, 1.2 * E, 1e-9 * E);
  EXPECT_NEAR(m.firm(0).e_max, 2 * m.firm(1).e_max, 1e-9 * E);
  EXPECT_DOUBLE_EQ(m.firm(0).bid, 100.0);
  EXPECT_NEAR(m.generator().p_g_min, 0.25 * *std::max_element(b.demand.begin(), b.demand.end()),
              1e-12);
}

TEST(BuildInstance, NoSolarMeansNoAbsorbSet) {
  const auto b = base();
  sg::InstanceParams ip;
  ip.solar_share = 0.0;
  ip.structure = sg::MarketStructure::monopoly;
  const auto m = sg::build_instance(b.demand, b.solar_shape, ip);
  EXPECT_TRUE(sg::absorb_analysis(m.net_load(), m.generator().p_g_min).empty());
  EXPECT_DOUBLE_EQ(m.firm(0).e_max, 0.0);
}

TEST(BuildInstance, RejectsBadParameters) {
  const auto b = base();
  sg::InstanceParams ip;
  ip.solar_share = 1.0;
  EXPECT_THROW(sg::build_instance(b.demand, b.solar_shape, ip), sg::InvalidInput);
  ip = {};
  ip.ess_frac = 1.0;
  EXPECT_THROW(sg::build_instance(b.demand, b.solar_shape, ip), sg::InvalidInput);
}

TEST(Sweep, SinglePointAgreesWithEvaluatePoint) {
  const auto b = base();
  sg::SweepGrid g;
  g.solar_shares = {0.5};
  g.ess_caps = {1.2};
  g.flexibility_levels = {0.25};
  const auto r = sg::sweep_stability(g, b);
  ASSERT_EQ(r.records.size(), 1u);
  sg::InstanceParams ip;
  const auto p = sg::evaluate_point(b, ip, {});
  EXPECT_EQ(r.records[0].outcome, p.outcome);
  EXPECT_EQ(r.records[0].final_bids, p.final_bids);
  EXPECT_TRUE(r.records[0].agrees());
}

TEST(Sweep, WorkersDoNotChangeTheExport) {
  const auto b = base();
  sg::SweepGrid g;
  g.solar_shares = {0.4, 0.6};
  g.ess_caps = {1.2, 2.4};
  g.flexibility_levels = {0.25};
  sg::SweepOptions one, two;
  two.workers = 2;
  EXPECT_EQ(sg::sweep_csv(sg::sweep_stability(g, b, one)), sg::sweep_csv(sg::sweep_stability(g, b, two)));
}

TEST(Sweep, InfeasiblePointsCountAsNotStable) {
  sg::SweepResult r;
  sg::SweepRecord ok;
  ok.outcome = sg::OutcomeKind::nash_equilibrium;
  sg::SweepRecord bad;
  bad.feasible = false;
  r.records = {ok, bad};
  EXPECT_DOUBLE_EQ(r.stable_fraction(), 0.5);
  EXPECT_TRUE(bad.agrees());
}

TEST(Sweep, RejectsEmptyAxes) {
  sg::SweepGrid g;
  g.ess_caps.clear();
  EXPECT_THROW(sg::sweep_stability(g, base()), sg::InvalidInput);
}

TEST(PriceCap, CapAtDeltaIsAlwaysStable) {
  sg::SweepGrid g;
  g.solar_shares = {0.5};
  g.ess_caps = {1.2, 3.0};
  g.flexibility_levels = {0.125};
  const std::vector<double> caps{1.0};
  const auto r = sg::price_cap_study(g, caps, base());
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows[0].stable, r.rows[0].feasible);
  EXPECT_GT(r.rows[0].feasible, 0);
  EXPECT_DOUBLE_EQ(r.rows[0].share(), 1.0);
}

TEST(Arbitrage, NoArbitrageAtTheCap) {
  sg::ArbitrageParams ap;
  ap.solar_scenarios = {0.05};
  const auto s = sg::arbitrage_study(base(), ap);
  ASSERT_EQ(s.size(), 1u);
  ASSERT_FALSE(s[0].points.empty());
  EXPECT_DOUBLE_EQ(s[0].points.back().bid, 100.0);
  EXPECT_DOUBLE_EQ(s[0].points.back().share, 0.0);
  EXPECT_GT(s[0].points.front().arbitrage_energy, 0.0);
  ASSERT_TRUE(s[0].acceptance_bid);
  EXPECT_LT(*s[0].acceptance_bid, 100.0);
}

sg::SweepResult small_sweep() {
  sg::SweepGrid g;
  g.solar_shares = {0.3, 0.5};
  g.ess_caps = {1.2};
  g.flexibility_levels = {0.125, 0.25};
  return sg::sweep_stability(g, base());
}

TEST(Export, EmptyResultIsHeaderOnly) {
  const auto csv = sg::sweep_csv(sg::SweepResult{});
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1);
  EXPECT_TRUE(sg::parse_sweep_csv(csv).records.empty());
}

TEST(Export, RoundTripsAreIdempotent) {
  const auto r = small_sweep();
  const auto csv = sg::sweep_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + static_cast<long>(r.records.size()));
  EXPECT_EQ(sg::sweep_csv(sg::parse_sweep_csv(csv)), csv);
  const auto json = sg::sweep_json(r);
  EXPECT_EQ(sg::sweep_json(sg::parse_sweep_json(json)), json);

  const auto dir = std::filesystem::temp_directory_path() / "storegame_export_test";
  std::filesystem::create_directories(dir);
  for (auto fmt : {sg::ExportFormat::csv, sg::ExportFormat::json}) {
    const auto path = dir / (fmt == sg::ExportFormat::csv ? "s.csv" : "s.json");
    sg::export_results(r, path, fmt);
    const auto first = sg::read_text_file(path);
    sg::export_results(sg::import_results(path, fmt), path, fmt);
    EXPECT_EQ(sg::read_text_file(path), first);
  }
  std::filesystem::remove_all(dir);
  EXPECT_THROW(sg::parse_export_format("xml"), sg::InvalidInput);
}

std::string profile_text(int rows, int bad_row = 0) {  // bad_row counts data rows from 1
  std::string s = "hour,demand_mw,solar_mw\n";
  for (int i = 0; i < rows; ++i)
    s += std::to_string(i) + ',' + (i + 1 == bad_row ? std::string("nan") : std::to_string(100 + i)) + ",5\n";
  return s;
}

TEST(Profiles, ParsesAndRoundTrips) {
  const auto p = sg::parse_profiles_csv(profile_text(24));
  ASSERT_EQ(p.demand.size(), 24u);
  EXPECT_DOUBLE_EQ(p.demand[3], 103.0);
  EXPECT_DOUBLE_EQ(p.solar[3], 5.0);
  const auto text = sg::profiles_csv(p);
  EXPECT_EQ(sg::profiles_csv(sg::parse_profiles_csv(text)), text);
}

TEST(Profiles, ErrorsNameTheRow) {
  try {
    sg::parse_profiles_csv(profile_text(24, 7));
    FAIL() << "NaN accepted";
  } catch (const sg::InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("row 7"), std::string::npos) << e.what();
  }
  EXPECT_THROW(sg::parse_profiles_csv(profile_text(23)), sg::InvalidInput);
  EXPECT_NO_THROW(sg::parse_profiles_csv(profile_text(23), 0));
}

}  // namespace
