#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sg {

/// Uniform time discretization for one market day.
class TimeGrid {
 public:
  explicit TimeGrid(int intervals = 24, double delta_hours = 1.0);

  int intervals() const noexcept { return intervals_; }
  double delta() const noexcept { return delta_; }

  bool operator==(const TimeGrid&) const = default;

 private:
  int intervals_;
  double delta_;
};

/// Net load p_L,k in MW (demand minus renewable output).
class NetLoadProfile {
 public:
  NetLoadProfile(std::vector<double> values, TimeGrid grid);

  const std::vector<double>& values() const noexcept { return values_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  int size() const noexcept { return static_cast<int>(values_.size()); }
  double operator[](int k) const { return values_[static_cast<std::size_t>(k)]; }
  double min() const;
  double max() const;

 private:
  std::vector<double> values_;
  TimeGrid grid_;
};

/// Aggregate conventional generation: c_g(p) = a/2 p^2 + b, output bounded below by p_g_min.
struct GeneratorModel {
  double a = 0.02;
  double b = 0.0;
  double p_g_min = 0.0;

  void validate() const;
  double cost(double p) const noexcept { return 0.5 * a * p * p + b; }
};

struct StorageFirm {
  double e_max = 0.0;  // MWh
  double e_0 = 0.0;    // MWh
  double bid = 100.0;  // $/MWh
};

/// Discrete bid set {delta, 2 delta, ..., c_max}. Bids are addressed by tick n (bid = n * delta).
class BidGrid {
 public:
  /// Requires c_max / delta_bid >= 20.
  explicit BidGrid(double delta_bid = 1.0, double c_max = 100.0);

  /// Grid for price-cap experiments; only divisibility is enforced.
  static BidGrid capped(double delta_bid, double cap);

  double delta() const noexcept { return delta_; }
  double c_max() const noexcept { return c_max_; }
  int size() const noexcept { return size_; }
  double bid(int tick) const noexcept { return tick * delta_; }
  int tick(double bid) const;
  bool on_grid(double bid) const noexcept;
  /// The delta << c_max assumption, rendered as c_max / delta >= 20.
  bool fine() const noexcept { return size_ >= 20; }

  bool operator==(const BidGrid&) const = default;

 private:
  BidGrid(double delta_bid, double c_max, bool require_fine);

  double delta_;
  double c_max_;
  int size_;
};

struct FeasibilityScreen {
  bool feasible = true;
  int interval = -1;  // offending interval, -1 when not interval-specific
  std::string diagnostic;
};

/// Necessary feasibility test: the Lemma-1 floor must be reachable by the pooled storage
/// (capacity and daily energy balance). Exact when every e_0 is zero.
FeasibilityScreen screen_feasibility(const NetLoadProfile& net_load,
                                     const GeneratorModel& generator,
                                     const std::vector<StorageFirm>& firms);

class MarketInstance {
 public:
  /// Throws InvalidInput on invariant violations and InfeasibleInstance when the screen fails.
  MarketInstance(NetLoadProfile net_load, GeneratorModel generator, std::vector<StorageFirm> firms,
                 BidGrid bid_grid);

  const NetLoadProfile& net_load() const noexcept { return net_load_; }
  const GeneratorModel& generator() const noexcept { return generator_; }
  const std::vector<StorageFirm>& firms() const noexcept { return firms_; }
  const StorageFirm& firm(int m) const { return firms_.at(static_cast<std::size_t>(m)); }
  const BidGrid& bid_grid() const noexcept { return bid_grid_; }
  const TimeGrid& time_grid() const noexcept { return net_load_.grid(); }
  int num_firms() const noexcept { return static_cast<int>(firms_.size()); }
  int intervals() const noexcept { return net_load_.size(); }

  std::vector<double> bids() const;
  MarketInstance with_bids(std::span<const double> bids) const;
  MarketInstance with_bid(int firm, double bid) const;
  MarketInstance with_bid_grid(const BidGrid& grid) const;

 private:
  struct Unchecked {};
  MarketInstance(Unchecked, const MarketInstance& base, std::vector<StorageFirm> firms);

  NetLoadProfile net_load_;
  GeneratorModel generator_;
  std::vector<StorageFirm> firms_;
  BidGrid bid_grid_;
};

NetLoadProfile build_net_load(std::span<const double> demand, std::span<const double> renewable,
                              const TimeGrid& grid);

/// Scales solar_shape so that its energy is `share` of the demand energy.
std::vector<double> scale_solar_to_share(std::span<const double> demand,
                                         std::span<const double> solar_shape, double share);

enum class ProfileKind { flat, triangle_dip, two_peak };

ProfileKind parse_profile_kind(std::string_view name);
std::string_view to_string(ProfileKind kind);

struct SynthParams {
  // flat
  double level = 100.0;
  // triangle-dip: demand = base - dip * max(0, 1 - |k - center| / width)
  double base = 100.0;
  double dip = 60.0;
  double center = 12.0;
  double width = 6.0;
  // two-peak demand (MW) and solar bell between sunrise and sunset (hours)
  double night_level = 1200.0;
  double morning_peak = 550.0;
  double morning_hour = 8.0;
  double evening_peak = 800.0;
  double evening_hour = 19.0;
  double peak_width = 2.5;
  double midday_level = 300.0;
  double sunrise = 6.5;
  double sunset = 18.5;
};

struct SyntheticProfile {
  std::vector<double> demand;
  std::vector<double> solar_shape;
};

/// Deterministic test profiles. Every kind also returns a solar shape.
SyntheticProfile synth_profile(ProfileKind kind, const SynthParams& params = {},
                               const TimeGrid& grid = TimeGrid{});

}  // namespace sg
