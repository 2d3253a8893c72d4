#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "storegame/dispatch.hpp"
#include "storegame/game.hpp"
#include "storegame/model.hpp"
#include "storegame/theory.hpp"

namespace sg {

enum class MarketStructure { monopoly, duopoly };
MarketStructure parse_market_structure(std::string_view name);
std::string_view to_string(MarketStructure structure);

/// One experiment point. Storage is sized from the excess energy of the scaled instance.
struct InstanceParams {
  double solar_share = 0.5;
  double ess_cap = 1.2;      // total storage energy / (delta * E_absorb)
  double flexibility = 0.25; // p_g_min / peak demand
  MarketStructure structure = MarketStructure::duopoly;
  double ess_frac = 2.0 / 3.0;  // first firm's capacity share in a duopoly
  BidGrid bid_grid{};
  double a = 0.02;
  double b = 0.0;
};

/// Throws InfeasibleInstance when the floor cannot be met, InvalidInput for bad parameters.
/// Every firm starts bidding c_max.
MarketInstance build_instance(std::span<const double> demand, std::span<const double> solar_shape,
                              const InstanceParams& params, const TimeGrid& grid = TimeGrid{});

struct SweepGrid {
  std::vector<double> solar_shares{0.3, 0.4, 0.5, 0.6, 0.7};
  std::vector<double> ess_caps{1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.4, 2.6, 2.8, 3.0};
  std::vector<double> flexibility_levels{0.125, 0.25};
  MarketStructure structure = MarketStructure::duopoly;
  double ess_frac = 2.0 / 3.0;

  void validate() const;
  std::size_t size() const noexcept {
    return solar_shares.size() * ess_caps.size() * flexibility_levels.size();
  }
};

struct BaseProfiles {
  std::vector<double> demand;
  std::vector<double> solar_shape;
  TimeGrid grid{};
};

struct SweepOptions {
  BidGrid bid_grid{};
  double a = 0.02;
  double b = 0.0;
  int max_iter = 0;  // 0 = game default
  int workers = 1;   // grid points evaluated concurrently
  DispatchConfig dispatch{};
  bool keep_reports = false;
};

struct SweepRecord {
  double solar_share = 0.0;
  double ess_cap = 0.0;
  double flexibility = 0.0;
  bool feasible = true;
  std::string diagnostic;
  StabilityVerdict predicted = StabilityVerdict::assumptions_violated;
  double e_absorb = 0.0;        // MW-sum
  std::optional<double> c_min;  // when found
  std::vector<std::optional<double>> L;
  std::optional<OutcomeKind> outcome;  // empty for infeasible points
  int iterations = 0;
  std::size_t cycle_period = 0;
  std::vector<double> final_bids;
  std::vector<double> profits;  // at the final profile
  double runtime_seconds = 0.0;  // not exported
  std::optional<StabilityReport> report;  // with SweepOptions::keep_reports, not exported

  bool stable() const noexcept { return outcome == OutcomeKind::nash_equilibrium; }
  /// unstable <-> cycle and stable <-> equilibrium; vacuous when the verdict is
  /// assumptions_violated or the point is infeasible.
  bool agrees() const noexcept;
};

struct SweepResult {
  MarketStructure structure = MarketStructure::duopoly;
  std::vector<SweepRecord> records;  // solar-major, then ess_cap, then flexibility

  /// Infeasible points count as not stable.
  double stable_fraction() const noexcept;
};

SweepRecord evaluate_point(const BaseProfiles& base, const InstanceParams& params,
                           const SweepOptions& options);
SweepResult sweep_stability(const SweepGrid& grid, const BaseProfiles& base,
                            const SweepOptions& options = {});

struct MarginViolation {
  std::string axis;
  double from = 0.0;
  double to = 0.0;
  double share_from = 0.0;
  double share_to = 0.0;
};

/// Stable fraction per value of one axis, averaged over the others (all flexibility levels).
std::vector<std::pair<double, double>> stable_margin(const SweepResult& result, std::string_view axis);
/// Non-increasing in solar share, non-decreasing in capacity, non-increasing in p_g_min share.
std::vector<MarginViolation> trend_violations(const SweepResult& result);

struct PriceCapRow {
  double cap = 0.0;
  double flexibility = 0.0;
  int stable = 0;
  int feasible = 0;
  int total = 0;
  /// Over feasible points; the infeasible set does not depend on the cap.
  double share() const noexcept { return feasible ? static_cast<double>(stable) / feasible : 0.0; }
};

struct PriceCapResult {
  std::vector<PriceCapRow> rows;  // caps in the given order, flexibility ascending within
  std::vector<SweepResult> sweeps;
};

/// Sweeps the grid once per cap with the bid grid capped there (delta kept).
PriceCapResult price_cap_study(const SweepGrid& grid, std::span<const double> caps,
                               const BaseProfiles& base, const SweepOptions& options = {});
/// Pairs (flexibility, cap_hi, cap_lo) where the share fell as the cap was lowered.
std::vector<MarginViolation> price_cap_violations(const PriceCapResult& result);

struct ArbitrageParams {
  std::vector<double> solar_scenarios{0.0, 0.05, 0.10};
  double ess_cap = 1.5;
  double flexibility = 0.6;
  BidGrid bid_grid{};
  double a = 0.02;
  double b = 0.0;
  int workers = 1;
  DispatchConfig dispatch{};
};

struct ArbitragePoint {
  double bid = 0.0;
  double charged_energy = 0.0;    // MWh
  double arbitrage_energy = 0.0;  // MWh beyond balancing, zero below the feasibility tolerance
  double share = 0.0;  // of the capacity not needed for balancing; above 1 when cycling more than once
};

struct ArbitrageScenario {
  double solar_share = 0.0;
  double capacity = 0.0;           // MWh
  double balancing_energy = 0.0;   // MWh
  std::vector<ArbitragePoint> points;  // ascending bids
  std::vector<double> net_load;
  std::vector<double> supply_max_bid;  // p_L + storage at bid = c_max
  std::vector<double> supply_min_bid;  // at bid = delta
  std::optional<double> acceptance_bid;  // largest bid with arbitrage > 0
};

std::vector<ArbitrageScenario> arbitrage_study(const BaseProfiles& base, const ArbitrageParams& params);

/// Stable column order, floats via format_number. runtime and full reports are never exported.
std::string sweep_csv(const SweepResult& result);
std::string sweep_json(const SweepResult& result, int indent = 2);
SweepResult parse_sweep_csv(std::string_view text);
SweepResult parse_sweep_json(std::string_view text);
std::string price_cap_csv(const PriceCapResult& result);
std::string arbitrage_csv(const std::vector<ArbitrageScenario>& scenarios);
std::string arbitrage_profiles_csv(const std::vector<ArbitrageScenario>& scenarios);

enum class ExportFormat { csv, json };
ExportFormat parse_export_format(std::string_view name);
void export_results(const SweepResult& result, const std::filesystem::path& path, ExportFormat format);
SweepResult import_results(const std::filesystem::path& path, ExportFormat format);

}  // namespace sg
