#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "storegame/errors.hpp"
#include "storegame/model.hpp"

namespace {

using sg::TimeGrid;

TEST(NetLoad, SubtractsRenewable) {
  const TimeGrid g(2, 1.0);
  EXPECT_EQ(sg::build_net_load(std::vector<double>{10, 10}, std::vector<double>{0, 0}, g).values(),
            (std::vector<double>{10, 10}));
  EXPECT_EQ(sg::build_net_load(std::vector<double>{10, 10}, std::vector<double>{4, 12}, g).values(),
            (std::vector<double>{6, -2}));
}

TEST(NetLoad, IsLinear) {
  const TimeGrid g(3, 1.0);
  const std::vector<double> d1{5, 7, 9}, d2{1, 2, 3}, r1{0, 4, 1}, r2{2, 0, 1};
  std::vector<double> d(3), r(3);
  for (int i = 0; i < 3; ++i) {
    d[i] = d1[i] + d2[i];
    r[i] = r1[i] + r2[i];
  }
  const auto sum = sg::build_net_load(d, r, g);
  const auto a = sg::build_net_load(d1, r1, g);
  const auto b = sg::build_net_load(d2, r2, g);
  for (int k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(sum[k], a[k] + b[k]);
}

TEST(NetLoad, RejectsBadInput) {
  const TimeGrid g(2, 1.0);
  EXPECT_THROW(sg::build_net_load(std::vector<double>{1, 2, 3}, std::vector<double>{0, 0}, g), sg::InvalidInput);
  EXPECT_THROW(sg::build_net_load(std::vector<double>{1, NAN}, std::vector<double>{0, 0}, g), sg::InvalidInput);
  EXPECT_THROW(sg::build_net_load(std::vector<double>{1, 2}, std::vector<double>{0, -1}, g), sg::InvalidInput);
}

TEST(TimeGrid, Invariants) {
  EXPECT_THROW(TimeGrid(1, 1.0), sg::InvalidInput);
  EXPECT_THROW(TimeGrid(24, 0.0), sg::InvalidInput);
  EXPECT_EQ(TimeGrid().intervals(), 24);
  EXPECT_EQ(TimeGrid().delta(), 1.0);
}

TEST(SolarScaling, ZeroShareGivesZeros) {
  const std::vector<double> demand(24, 100.0), shape(24, 1.0);
  const auto s = sg::scale_solar_to_share(demand, shape, 0.0);
  EXPECT_TRUE(std::all_of(s.begin(), s.end(), [](double v) { return v == 0.0; }));
}

TEST(SolarScaling, TwoMiddayHours) {
  const std::vector<double> demand(24, 100.0);
  std::vector<double> shape(24, 0.0);
  shape[11] = shape[12] = 1.0;
  const auto s = sg::scale_solar_to_share(demand, shape, 0.5);
  EXPECT_NEAR(s[11], 600.0, 1e-9);
  EXPECT_NEAR(s[12], 600.0, 1e-9);
  EXPECT_EQ(s[10], 0.0);
}

TEST(SolarScaling, HitsRequestedShareOnSyntheticDay) {
  const auto p = sg::synth_profile(sg::ProfileKind::two_peak);
  for (double share : {0.1, 0.3, 0.7}) {
    const auto s = sg::scale_solar_to_share(p.demand, p.solar_shape, share);
    const double ratio = std::accumulate(s.begin(), s.end(), 0.0) /
                         std::accumulate(p.demand.begin(), p.demand.end(), 0.0);
    EXPECT_NEAR(ratio / share, 1.0, 1e-9);
  }
}

TEST(SolarScaling, RejectsBadShapeOrShare) {
  const std::vector<double> demand(4, 1.0);
  EXPECT_THROW(sg::scale_solar_to_share(demand, std::vector<double>(4, 0.0), 0.2), sg::InvalidInput);
  EXPECT_THROW(sg::scale_solar_to_share(demand, std::vector<double>(4, 1.0), 1.0), sg::InvalidInput);
  EXPECT_THROW(sg::scale_solar_to_share(demand, std::vector<double>(4, 1.0), -0.1), sg::InvalidInput);
}

TEST(SynthProfile, FlatAndTriangle) {
  const auto flat = sg::synth_profile(sg::ProfileKind::flat);
  ASSERT_EQ(flat.demand.size(), 24u);
  for (double v : flat.demand) EXPECT_EQ(v, 100.0);
  const auto tri = sg::synth_profile(sg::ProfileKind::triangle_dip);
  EXPECT_DOUBLE_EQ(tri.demand[12], 40.0);
  EXPECT_DOUBLE_EQ(tri.demand[9], 70.0);
  EXPECT_DOUBLE_EQ(tri.demand[0], 100.0);
  EXPECT_EQ(sg::parse_profile_kind("triangle-dip"), sg::ProfileKind::triangle_dip);
  EXPECT_THROW(sg::parse_profile_kind("sawtooth"), sg::InvalidInput);
}

TEST(SynthProfile, TwoPeakCrossesMidLevelsTwiceAfterNoon) {
  const auto p = sg::synth_profile(sg::ProfileKind::two_peak);
  const double lo = *std::min_element(p.demand.begin() + 8, p.demand.begin() + 19);
  // Between the morning and evening peaks the curve dips; every level between the valley
  // and the lower of the two peaks is crossed going down and coming back up.
  const double low_peak = std::min(p.demand[8], p.demand[19]);
  for (double f : {0.25, 0.5, 0.75}) {
    const double level = lo + f * (low_peak - lo);
    int crossings = 0;
    for (int k = 8; k < 19; ++k)
      if ((p.demand[k] - level) * (p.demand[k + 1] - level) < 0) ++crossings;
    EXPECT_EQ(crossings, 2) << level;
  }
}

TEST(SynthDay, SolarDipsBelowFloorAtNoon) {
  const auto p = sg::synth_profile(sg::ProfileKind::two_peak);
  const auto solar = sg::scale_solar_to_share(p.demand, p.solar_shape, 0.5);
  const auto net = sg::build_net_load(p.demand, solar, TimeGrid{});
  const double floor = 0.25 * *std::max_element(p.demand.begin(), p.demand.end());
  const auto it = std::min_element(net.values().begin(), net.values().end());
  EXPECT_LT(*it, floor);
  const auto k = it - net.values().begin();
  EXPECT_GE(k, 10);
  EXPECT_LE(k, 14);
}

TEST(BidGrid, TicksAndInvariants) {
  const sg::BidGrid g;
  EXPECT_EQ(g.size(), 100);
  EXPECT_EQ(g.bid(37), 37.0);
  EXPECT_EQ(g.tick(37.0), 37);
  EXPECT_TRUE(g.on_grid(5.0));
  EXPECT_FALSE(g.on_grid(5.5));
  EXPECT_THROW(sg::BidGrid(3.0, 100.0), sg::InvalidInput);  // does not divide
  EXPECT_THROW(sg::BidGrid(10.0, 100.0), sg::InvalidInput); // too coarse
  EXPECT_NO_THROW(sg::BidGrid(0.5, 10.0));
  const auto capped = sg::BidGrid::capped(1.0, 10.0);
  EXPECT_EQ(capped.size(), 10);
  EXPECT_FALSE(capped.fine());
  EXPECT_EQ(sg::BidGrid::capped(1.0, 1.0).size(), 1);
}

TEST(MarketInstance, ValidatesFirmsAndFeasibility) {
  const sg::NetLoadProfile load({8, 6, 12, 14, 12}, TimeGrid(5, 1.0));
  sg::GeneratorModel gen;
  gen.p_g_min = 10.0;
  EXPECT_NO_THROW(sg::MarketInstance(load, gen, {{7.0, 0.0, 5.0}}, sg::BidGrid{}));
  // Pooled capacity below the cumulative excess.
  EXPECT_THROW(sg::MarketInstance(load, gen, {{3.0, 0.0, 5.0}, {2.0, 0.0, 5.0}}, sg::BidGrid{}),
               sg::InfeasibleInstance);
  EXPECT_THROW(sg::MarketInstance(load, gen, {{7.0, 8.0, 5.0}}, sg::BidGrid{}), sg::InvalidInput);
  EXPECT_THROW(sg::MarketInstance(load, gen, {{7.0, 0.0, 0.0}}, sg::BidGrid{}), sg::InvalidInput);
  EXPECT_THROW(sg::MarketInstance(load, gen, {}, sg::BidGrid{}), sg::InvalidInput);
  gen.a = 0.0;
  EXPECT_THROW(sg::MarketInstance(load, gen, {{7.0, 0.0, 5.0}}, sg::BidGrid{}), sg::InvalidInput);
}

TEST(MarketInstance, WithBidsKeepsEverythingElse) {
  const sg::NetLoadProfile load({8, 6, 12, 14, 12}, TimeGrid(5, 1.0));
  sg::GeneratorModel gen;
  gen.p_g_min = 10.0;
  const sg::MarketInstance m(load, gen, {{5.0, 0.0, 5.0}, {4.0, 0.0, 6.0}}, sg::BidGrid{});
  const auto n = m.with_bid(1, 42.0);
  EXPECT_EQ(n.firm(1).bid, 42.0);
  EXPECT_EQ(n.firm(0).bid, 5.0);
  EXPECT_EQ(n.firm(1).e_max, 4.0);
  EXPECT_THROW(m.with_bid(0, -1.0), sg::InvalidInput);
}

}  // namespace
