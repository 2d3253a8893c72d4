#include "storegame/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "storegame/errors.hpp"

namespace sg {

namespace {

void require_finite(std::span<const double> xs, const char* what) {
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (!std::isfinite(xs[k])) {
      std::ostringstream os;
      os << what << ": non-finite value at interval " << k;
      throw InvalidInput(os.str());
    }
  }
}

// Circular distance in hours on a day of `period` hours.
double circular_distance(double h, double c, double period) {
  double d = std::fmod(std::abs(h - c), period);
  return std::min(d, period - d);
}

double gaussian(double h, double center, double width, double period) {
  const double d = circular_distance(h, center, period) / width;
  return std::exp(-0.5 * d * d);
}

}  // namespace

TimeGrid::TimeGrid(int intervals, double delta_hours) : intervals_(intervals), delta_(delta_hours) {
  if (intervals < 2) throw InvalidInput("TimeGrid: need at least 2 intervals");
  if (!(delta_hours > 0.0) || !std::isfinite(delta_hours))
    throw InvalidInput("TimeGrid: interval length must be positive");
}

NetLoadProfile::NetLoadProfile(std::vector<double> values, TimeGrid grid)
    : values_(std::move(values)), grid_(grid) {
  if (static_cast<int>(values_.size()) != grid_.intervals()) {
    std::ostringstream os;
    os << "NetLoadProfile: " << values_.size() << " values for " << grid_.intervals()
       << " intervals";
    throw InvalidInput(os.str());
  }
  require_finite(values_, "NetLoadProfile");
}

double NetLoadProfile::min() const { return *std::min_element(values_.begin(), values_.end()); }
double NetLoadProfile::max() const { return *std::max_element(values_.begin(), values_.end()); }

void GeneratorModel::validate() const {
  if (!(a > 0.0) || !std::isfinite(a)) throw InvalidInput("GeneratorModel: a must be positive");
  if (!std::isfinite(b)) throw InvalidInput("GeneratorModel: b must be finite");
  if (!(p_g_min >= 0.0) || !std::isfinite(p_g_min))
    throw InvalidInput("GeneratorModel: p_g_min must be non-negative");
}

BidGrid::BidGrid(double delta_bid, double c_max) : BidGrid(delta_bid, c_max, true) {}

BidGrid BidGrid::capped(double delta_bid, double cap) { return BidGrid(delta_bid, cap, false); }

BidGrid::BidGrid(double delta_bid, double c_max, bool require_fine)
    : delta_(delta_bid), c_max_(c_max), size_(0) {
  if (!(delta_bid > 0.0) || !std::isfinite(delta_bid))
    throw InvalidInput("BidGrid: delta_bid must be positive");
  if (!(c_max >= delta_bid) || !std::isfinite(c_max))
    throw InvalidInput("BidGrid: c_max must be at least delta_bid");
  const double ratio = c_max / delta_bid;
  const double n = std::round(ratio);
  if (std::abs(ratio - n) > 1e-9 * std::max(1.0, ratio))
    throw InvalidInput("BidGrid: delta_bid must divide c_max");
  size_ = static_cast<int>(n);
  if (require_fine && size_ < 20)
    throw InvalidInput("BidGrid: c_max / delta_bid must be at least 20");
}

int BidGrid::tick(double bid) const {
  const double n = std::round(bid / delta_);
  if (!on_grid(bid)) {
    std::ostringstream os;
    os << "BidGrid: bid " << bid << " is not on the grid {" << delta_ << ", ..., " << c_max_
       << "}";
    throw InvalidInput(os.str());
  }
  return static_cast<int>(n);
}

bool BidGrid::on_grid(double bid) const noexcept {
  if (!std::isfinite(bid)) return false;
  const double r = bid / delta_;
  const double n = std::round(r);
  return n >= 1.0 && n <= size_ && std::abs(r - n) <= 1e-9 * std::max(1.0, r);
}

FeasibilityScreen screen_feasibility(const NetLoadProfile& net_load,
                                     const GeneratorModel& generator,
                                     const std::vector<StorageFirm>& firms) {
  FeasibilityScreen out;
  const int K = net_load.size();
  const double dt = net_load.grid().delta();
  const double pmin = generator.p_g_min;

  double daily = 0.0;
  for (int k = 0; k < K; ++k) daily += (pmin - net_load[k]) * dt;
  const double slack = 1e-9 * std::max(1.0, std::abs(pmin) * K * dt);
  if (daily > slack) {
    std::ostringstream os;
    os << "daily minimum-generation energy exceeds net-load energy by " << daily << " MWh";
    out.feasible = false;
    out.diagnostic = os.str();
    return out;
  }

  double capacity = 0.0;
  double start = 0.0;
  for (const auto& f : firms) {
    capacity += f.e_max;
    start += f.e_0;
  }
  // Lowest reachable pooled state of charge after each interval.
  double lo = start;
  for (int k = 0; k < K; ++k) {
    const double need = lo + (pmin - net_load[k]) * dt;
    if (need > capacity + slack) {
      std::ostringstream os;
      os << "storage capacity " << capacity << " MWh cannot absorb the excess at interval " << k
         << " (needs " << need << " MWh)";
      out.feasible = false;
      out.interval = k;
      out.diagnostic = os.str();
      return out;
    }
    lo = std::max(need, 0.0);
  }
  if (lo > start + slack) {
    std::ostringstream os;
    os << "storage cannot return to its initial state of charge (ends at least " << lo - start
       << " MWh above it)";
    out.feasible = false;
    out.interval = K - 1;
    out.diagnostic = os.str();
  }
  return out;
}

MarketInstance::MarketInstance(NetLoadProfile net_load, GeneratorModel generator,
                               std::vector<StorageFirm> firms, BidGrid bid_grid)
    : net_load_(std::move(net_load)),
      generator_(generator),
      firms_(std::move(firms)),
      bid_grid_(bid_grid) {
  generator_.validate();
  if (firms_.empty()) throw InvalidInput("MarketInstance: need at least one storage firm");
  for (std::size_t m = 0; m < firms_.size(); ++m) {
    const auto& f = firms_[m];
    std::ostringstream os;
    os << "MarketInstance: firm " << m << ": ";
    if (!(f.e_max >= 0.0) || !std::isfinite(f.e_max))
      throw InvalidInput(os.str() + "e_max must be non-negative");
    if (!(f.e_0 >= 0.0) || f.e_0 > f.e_max)
      throw InvalidInput(os.str() + "e_0 must lie in [0, e_max]");
    if (!(f.bid > 0.0) || !std::isfinite(f.bid))
      throw InvalidInput(os.str() + "bid must be positive");
  }
  const auto screen = screen_feasibility(net_load_, generator_, firms_);
  if (!screen.feasible) throw InfeasibleInstance("MarketInstance: " + screen.diagnostic);
}

MarketInstance::MarketInstance(Unchecked, const MarketInstance& base,
                               std::vector<StorageFirm> firms)
    : net_load_(base.net_load_),
      generator_(base.generator_),
      firms_(std::move(firms)),
      bid_grid_(base.bid_grid_) {}

std::vector<double> MarketInstance::bids() const {
  std::vector<double> out;
  out.reserve(firms_.size());
  for (const auto& f : firms_) out.push_back(f.bid);
  return out;
}

MarketInstance MarketInstance::with_bids(std::span<const double> bids) const {
  if (bids.size() != firms_.size()) throw InvalidInput("with_bids: one bid per firm required");
  auto firms = firms_;
  for (std::size_t m = 0; m < firms.size(); ++m) {
    if (!(bids[m] > 0.0) || !std::isfinite(bids[m]))
      throw InvalidInput("with_bids: bids must be positive");
    firms[m].bid = bids[m];
  }
  // Bids do not enter the feasibility screen.
  return MarketInstance(Unchecked{}, *this, std::move(firms));
}

MarketInstance MarketInstance::with_bid(int firm, double bid) const {
  auto b = bids();
  b.at(static_cast<std::size_t>(firm)) = bid;
  return with_bids(b);
}

MarketInstance MarketInstance::with_bid_grid(const BidGrid& grid) const {
  MarketInstance out(Unchecked{}, *this, firms_);
  out.bid_grid_ = grid;
  return out;
}

NetLoadProfile build_net_load(std::span<const double> demand, std::span<const double> renewable,
                              const TimeGrid& grid) {
  if (demand.size() != renewable.size() ||
      static_cast<int>(demand.size()) != grid.intervals()) {
    std::ostringstream os;
    os << "build_net_load: demand has " << demand.size() << " values, renewable has "
       << renewable.size() << ", grid expects " << grid.intervals();
    throw InvalidInput(os.str());
  }
  require_finite(demand, "build_net_load demand");
  require_finite(renewable, "build_net_load renewable");
  std::vector<double> values(demand.size());
  for (std::size_t k = 0; k < demand.size(); ++k) {
    if (renewable[k] < 0.0) {
      std::ostringstream os;
      os << "build_net_load: negative renewable output at interval " << k;
      throw InvalidInput(os.str());
    }
    values[k] = demand[k] - renewable[k];
  }
  return NetLoadProfile(std::move(values), grid);
}

std::vector<double> scale_solar_to_share(std::span<const double> demand,
                                         std::span<const double> solar_shape, double share) {
  if (!(share >= 0.0 && share < 1.0))
    throw InvalidInput("scale_solar_to_share: share must lie in [0, 1)");
  if (demand.size() != solar_shape.size())
    throw InvalidInput("scale_solar_to_share: demand and shape lengths differ");
  require_finite(demand, "scale_solar_to_share demand");
  require_finite(solar_shape, "scale_solar_to_share shape");
  double shape_sum = 0.0;
  for (double s : solar_shape) {
    if (s < 0.0) throw InvalidInput("scale_solar_to_share: shape must be non-negative");
    shape_sum += s;
  }
  if (!(shape_sum > 0.0)) throw InvalidInput("scale_solar_to_share: shape is all zero");
  const double demand_sum = std::accumulate(demand.begin(), demand.end(), 0.0);
  const double scale = share * demand_sum / shape_sum;
  std::vector<double> out(solar_shape.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = scale * solar_shape[k];
  return out;
}

ProfileKind parse_profile_kind(std::string_view name) {
  if (name == "flat") return ProfileKind::flat;
  if (name == "triangle-dip" || name == "triangle_dip") return ProfileKind::triangle_dip;
  if (name == "two-peak" || name == "two_peak") return ProfileKind::two_peak;
  throw InvalidInput("unknown profile kind '" + std::string(name) +
                     "' (expected flat, triangle-dip or two-peak)");
}

std::string_view to_string(ProfileKind kind) {
  switch (kind) {
    case ProfileKind::flat:
      return "flat";
    case ProfileKind::triangle_dip:
      return "triangle-dip";
    case ProfileKind::two_peak:
      return "two-peak";
  }
  return "unknown";
}

SyntheticProfile synth_profile(ProfileKind kind, const SynthParams& p, const TimeGrid& grid) {
  const int K = grid.intervals();
  const double dt = grid.delta();
  const double day = K * dt;
  SyntheticProfile out;
  out.demand.resize(static_cast<std::size_t>(K));
  out.solar_shape.resize(static_cast<std::size_t>(K));

  auto solar_bell = [&](double h) {
    if (!(p.sunset > p.sunrise)) throw InvalidInput("synth_profile: sunset must follow sunrise");
    if (h <= p.sunrise || h >= p.sunset) return 0.0;
    return std::sin(std::numbers::pi * (h - p.sunrise) / (p.sunset - p.sunrise));
  };

  for (int k = 0; k < K; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double h = (k + 0.5) * dt;  // interval midpoint
    switch (kind) {
      case ProfileKind::flat:
        out.demand[i] = p.level;
        out.solar_shape[i] = solar_bell(h);
        break;
      case ProfileKind::triangle_dip: {
        if (!(p.width > 0.0)) throw InvalidInput("synth_profile: width must be positive");
        const double tri = std::max(0.0, 1.0 - std::abs(k - p.center) / p.width);
        out.demand[i] = p.base - p.dip * tri;
        out.solar_shape[i] = tri;
        break;
      }
      case ProfileKind::two_peak:
        if (!(p.peak_width > 0.0)) throw InvalidInput("synth_profile: peak_width must be positive");
        out.demand[i] = p.night_level + p.morning_peak * gaussian(h, p.morning_hour, p.peak_width, day) +
                        p.evening_peak * gaussian(h, p.evening_hour, p.peak_width, day) +
                        p.midday_level * gaussian(h, 0.5 * (p.morning_hour + p.evening_hour),
                                                  2.0 * p.peak_width, day);
        out.solar_shape[i] = solar_bell(h);
        break;
    }
  }
  return out;
}

}  // namespace sg
