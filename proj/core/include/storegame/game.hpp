#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "storegame/dispatch.hpp"
#include "storegame/firm.hpp"
#include "storegame/model.hpp"

namespace sg {

/// Bids held as grid ticks so that comparisons and hashing are exact.
struct BidProfile {
  std::vector<int> ticks;

  static BidProfile from_bids(std::span<const double> bids, const BidGrid& grid);
  static BidProfile all_at_cap(int firms, const BidGrid& grid);
  std::vector<double> bids(const BidGrid& grid) const;

  bool operator==(const BidProfile&) const = default;
};

struct GameState {
  BidProfile profile;
  int next_mover = 0;

  bool operator==(const GameState&) const = default;
};

struct TraceEntry {
  int iteration = 0;  // 1-based move counter
  int mover = 0;
  BidProfile profile;  // after the move
  double profit = 0.0;
};

struct GameTrace {
  BidProfile initial;
  std::vector<int> order;  // mover sequence, repeated
  std::vector<TraceEntry> moves;

  /// State before move i (i = 0 is the initial state); i may equal moves.size().
  GameState state(std::size_t i) const;
};

struct CycleInfo {
  std::size_t start = 0;   // index of the first state of the cycle
  std::size_t period = 0;  // moves per cycle
};

/// First recurrence of a (profile, next mover) state along the trace.
std::optional<CycleInfo> detect_cycle(const GameTrace& trace);

enum class OutcomeKind { nash_equilibrium, cycle, iteration_cap };
std::string_view to_string(OutcomeKind kind);

struct GameOutcome {
  OutcomeKind kind = OutcomeKind::iteration_cap;
  BidProfile final_profile;
  std::vector<BidProfile> cycle_profiles;  // states of one period, kind = cycle
  std::size_t cycle_start = 0;
  std::size_t cycle_period = 0;
  int iterations_used = 0;
  GameTrace trace;
  std::string diagnostic;
};

struct GameOptions {
  int max_iter = 0;  // 0 selects 4 * (c_max / delta) * M
  std::vector<int> order;  // empty = round robin from firm 0
  int workers = 1;
};

int default_max_iter(const MarketInstance& market);

/// Throws SolverFailure when every candidate of a move fails; the message carries the trace.
GameOutcome run_best_response(const DispatchSolver& solver, const BidProfile& initial,
                              const GameOptions& options = {}, DispatchCache* cache = nullptr);
GameOutcome run_best_response(const MarketInstance& market, const BidProfile& initial,
                              const GameOptions& options = {}, const DispatchConfig& config = {});

struct Deviation {
  int firm = 0;
  double bid = 0.0;
  double profit = 0.0;
  double current_profit = 0.0;
};

struct NashCertificate {
  bool certified = false;
  std::optional<Deviation> best_deviation;  // largest strict improvement when not certified
  std::vector<double> profits;              // at the profile
};

NashCertificate is_nash(const DispatchSolver& solver, const BidProfile& profile, int workers = 1,
                        DispatchCache* cache = nullptr);
NashCertificate is_nash(const MarketInstance& market, const BidProfile& profile,
                        const DispatchConfig& config = {});

/// Columns iteration, mover, bid_1..bid_M, profit; row 0 is the initial profile.
std::string trace_csv(const GameTrace& trace, const BidGrid& grid);
std::string outcome_json(const GameOutcome& outcome, const BidGrid& grid, int indent = 2);

}  // namespace sg
