#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "storegame/dispatch.hpp"
#include "storegame/model.hpp"
#include "storegame/theory.hpp"

namespace sg {

struct FirmProfit {
  int firm_index = 0;
  double bid = 0.0;
  double charged_energy = 0.0;  // MWh
  double profit = 0.0;          // $
};

FirmProfit firm_profit(const MarketInstance& market, int firm_index, const DispatchSolution& solution);

enum class BestResponseMethod { enumeration, closed_form };
std::string_view to_string(BestResponseMethod method);

struct ProfitPoint {
  double bid = 0.0;
  double charged_energy = 0.0;
  double profit = 0.0;
};

struct BestResponse {
  int firm_index = 0;
  double chosen_bid = 0.0;
  double profit = 0.0;
  BestResponseMethod method = BestResponseMethod::enumeration;
  std::vector<ProfitPoint> profit_curve;
  std::vector<std::string> warnings;  // skipped candidates
};

/// Dispatch outcomes keyed by the bid profile in grid ticks. Thread-safe.
class DispatchCache {
 public:
  struct Entry {
    DispatchStatus status = DispatchStatus::numerical_failure;
    std::vector<double> charged;  // MWh per firm
    std::string diagnostic;
    std::shared_ptr<const DispatchWarmStart> warm_start;
  };

  std::optional<Entry> find(const std::vector<int>& ticks) const;
  void insert(const std::vector<int>& ticks, Entry entry);
  std::size_t size() const;
  void clear();

 private:
  struct Hash {
    std::size_t operator()(const std::vector<int>& v) const noexcept;
  };
  mutable std::mutex mutex_;
  std::unordered_map<std::vector<int>, Entry, Hash> map_;
};

struct EnumerateOptions {
  int workers = 1;
  bool keep_curve = true;
  DispatchCache* cache = nullptr;  // a private cache is used when null
};

/// Best response of `firm` to the other entries of `ticks`, solving every grid bid.
BestResponse best_response_enumerate(const DispatchSolver& solver, std::span<const int> ticks,
                                     int firm, const EnumerateOptions& options = {});
/// Against the market's own bids.
BestResponse best_response_enumerate(const MarketInstance& market, int firm,
                                     const EnumerateOptions& options = {},
                                     const DispatchConfig& config = {});

/// The undercut-or-retreat rule: c_other - delta when c_max * E_min <= (c_other - delta) * E_max,
/// else c_max.
double closed_form_bid(double c_other, double E_min, double E_max, const BidGrid& grid);

/// Throws PreconditionsNotMet unless the rule is known to coincide with the true best response:
/// a duopoly with c_min found, c_min < L_m for both firms, c_other >= c_min + delta, the chosen
/// bid beating a tie, and no bid below c_min able to beat the choice (one dispatch solve).
BestResponse best_response_closed_form(const DispatchSolver& solver, std::span<const int> ticks,
                                       int firm, const CapacityBounds& bounds,
                                       const CMinEstimate& c_min);
BestResponse best_response_closed_form(const MarketInstance& market, int firm,
                                       const DispatchConfig& config = {});

/// Columns bid, charged_energy, profit.
std::string profit_curve_csv(const BestResponse& response);

/// Relative tolerance separating a strict profit improvement from a tie.
inline constexpr double kProfitTieTolerance = 1e-9;
bool strictly_better(double candidate, double incumbent) noexcept;

}  // namespace sg
