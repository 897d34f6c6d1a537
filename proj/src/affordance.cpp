#include "dpd/affordance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dpd/errors.hpp"

namespace dpd {

std::string_view indicator_name(Indicator i) {
  static constexpr std::array<std::string_view, kIndicatorCount> kNames{
      "angle",       "toMarking_LL", "toMarking_ML", "toMarking_MR", "toMarking_RR",
      "dist_LL",     "dist_MM",      "dist_RR",      "toMarking_L",  "toMarking_M",
      "toMarking_R", "dist_L",       "dist_R"};
  return kNames[index_of(i)];
}

bool is_distance(Indicator i) {
  switch (i) {
    case Indicator::DistLL:
    case Indicator::DistMM:
    case Indicator::DistRR:
    case Indicator::DistL:
    case Indicator::DistR:
      return true;
    default:
      return false;
  }
}

bool in_lane_system(Indicator i) {
  const auto k = index_of(i);
  return k >= index_of(Indicator::ToMarkingLL) && k <= index_of(Indicator::DistRR);
}

bool on_marking_system(Indicator i) { return index_of(i) >= index_of(Indicator::ToMarkingL); }

void AffordanceConfig::validate() const {
  if (!(in_lane_fraction > 0.0 && in_lane_fraction < 0.5) ||
      !(on_marking_fraction > 0.0 && on_marking_fraction < 0.5) ||
      !(in_lane_fraction + on_marking_fraction > 0.5)) {
    std::ostringstream os;
    os << "activation thresholds (" << in_lane_fraction << ", " << on_marking_fraction
       << ") must each be below 0.5 lane widths and sum above 0.5";
    throw Error(ErrorCode::ConfigError, os.str());
  }
  if (!(max_range > 0.0)) throw Error(ErrorCode::ConfigError, "max_range must be positive");
}

SystemActivation system_activation(const LaneFrame& frame, const TrackGeometry& track,
                                   const AffordanceConfig& config) {
  const double w = track.lane_width();
  const int n = track.lane_count(frame.station);
  const double hw = n * w / 2.0;
  const double lat = frame.lateral;
  if (!(std::abs(lat) <= hw)) {
    std::ostringstream os;
    os << "lateral " << lat << " m is outside the road (half-width " << hw << " m)";
    throw Error(ErrorCode::OffRoad, os.str());
  }
  SystemActivation act;
  act.lane_index = *track.lane_index_at(frame.station, lat);
  const double center = track.lane_center_lateral(frame.station, act.lane_index);
  act.in_lane_active = std::abs(lat - center) <= config.in_lane_fraction * w;

  const int j = std::clamp(static_cast<int>(std::lround((hw - lat) / w)), 0, n);
  const double marking = hw - j * w;
  act.on_marking_active = std::abs(lat - marking) <= config.on_marking_fraction * w;
  if (act.on_marking_active) act.straddled_marking = j;
  return act;
}

AffordanceVector compute_affordance(const WorldState& world, int ego_id,
                                    const AffordanceConfig& config) {
  const TrackGeometry& track = *world.track;
  const CarState& ego = world.car(ego_id);
  const LaneFrame& f = ego.frame;
  const SystemActivation act = system_activation(f, track, config);

  const double w = track.lane_width();
  const int n = track.lane_count(f.station);
  const double hw = n * w / 2.0;

  // Nearest preceding car per lane, by the car's lateral center.
  std::array<double, 3> nearest{};
  nearest.fill(std::numeric_limits<double>::infinity());
  for (const auto& other : world.cars) {
    if (other.id == ego.id) continue;
    const auto lane = track.lane_index_at(other.frame.station, other.frame.lateral);
    if (!lane || *lane >= n) continue;
    const double gap = following_gap(track, ego, other, config.gap);
    const double center_gap = track.forward_gap(f.station, other.frame.station);
    if (!(center_gap > 0.0) || !(gap > 0.0) || gap > config.max_range) continue;
    nearest[static_cast<std::size_t>(*lane)] = std::min(nearest[static_cast<std::size_t>(*lane)], gap);
  }
  auto set_dist = [&](AffordanceVector& a, Indicator ind, int lane) {
    const double g = nearest[static_cast<std::size_t>(lane)];
    if (std::isfinite(g)) a.set(ind, g);
  };

  AffordanceVector a;
  a.set(Indicator::Angle, f.angle);

  double m = 0.0;
  int j = -1;
  if (act.on_marking_active) {
    j = *act.straddled_marking;
    m = f.lateral - (hw - j * w);
    // Round m so that w - m and w + m are exact (Sterbenz), which makes the
    // cross-system identities below hold bit for bit.
    m = m >= 0.0 ? w - (w - m) : (w + m) - w;
  }

  if (act.in_lane_active) {
    const int i = act.lane_index;
    double ml = 0.0;
    if (j == i + 1) {
      ml = w - m;  // straddling this lane's right marking: MR = M
    } else if (j == i) {
      ml = -m;  // straddling this lane's left marking
    } else {
      ml = w / 2.0 - (f.lateral - track.lane_center_lateral(f.station, i));
      ml = w - (w - ml);  // ml + (w - ml) == w exactly
    }
    const double mr = (j == i + 1) ? m : w - ml;
    a.set(Indicator::ToMarkingML, ml);
    a.set(Indicator::ToMarkingMR, mr);
    set_dist(a, Indicator::DistMM, i);
    if (i > 0) {
      a.set(Indicator::ToMarkingLL, ml + w);
      set_dist(a, Indicator::DistLL, i - 1);
    }
    if (i < n - 1) {
      a.set(Indicator::ToMarkingRR, mr + w);
      set_dist(a, Indicator::DistRR, i + 1);
    }
  }

  if (act.on_marking_active) {
    a.set(Indicator::ToMarkingM, m);
    if (j > 0) {
      a.set(Indicator::ToMarkingL, w - m);
      set_dist(a, Indicator::DistL, j - 1);
    }
    if (j < n) {
      a.set(Indicator::ToMarkingR, w + m);
      set_dist(a, Indicator::DistR, j);
    }
  }
  return a;
}

NormalizationSpec NormalizationSpec::defaults(double lane_width, double max_range) {
  NormalizationSpec spec;
  auto with_sentinel = [](double lo, double hi) {
    return IndicatorRange{lo, hi, hi + 0.1 * (hi - lo)};
  };
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    const Indicator i = indicator_at(k);
    if (i == Indicator::Angle) {
      spec.ranges[k] = with_sentinel(-0.5, 0.5);
    } else if (is_distance(i)) {
      spec.ranges[k] = with_sentinel(0.0, max_range);
    } else if (i == Indicator::ToMarkingM) {
      spec.ranges[k] = with_sentinel(-lane_width / 2.0, lane_width / 2.0);
    } else if (on_marking_system(i)) {
      spec.ranges[k] = with_sentinel(0.0, 2.0 * lane_width);
    } else {
      spec.ranges[k] = with_sentinel(-0.5, 9.5);
    }
  }
  return spec;
}

void NormalizationSpec::validate() const {
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    const auto& r = ranges[k];
    if (!(r.lo < r.hi && r.hi < r.sentinel)) {
      throw Error(ErrorCode::ConfigError, "normalization range for " +
                                              std::string(indicator_name(indicator_at(k))) +
                                              " must satisfy lo < hi < sentinel");
    }
  }
  if (!(sentinel_margin >= 0.0 && sentinel_margin < 0.5)) {
    throw Error(ErrorCode::ConfigError, "sentinel_margin must lie in [0, 0.5)");
  }
}

IndicatorArray normalize(const AffordanceVector& a, const NormalizationSpec& spec) {
  IndicatorArray y{};
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    if (!a.active[k]) {
      y[k] = kNormHigh;
      continue;
    }
    const auto& r = spec.ranges[k];
    const double v = a.value[k];
    if (!(v >= r.lo && v <= r.hi)) {
      std::ostringstream os;
      os << indicator_name(indicator_at(k)) << " = " << v << " outside [" << r.lo << ", " << r.hi
         << "]";
      throw Error(ErrorCode::OutOfRange, os.str());
    }
    y[k] = kNormLow + (kNormHigh - kNormLow) * (v - r.lo) / (r.sentinel - r.lo);
  }
  return y;
}

AffordanceVector denormalize(std::span<const double> y, const NormalizationSpec& spec) {
  if (y.size() != kIndicatorCount) {
    throw Error(ErrorCode::ShapeMismatch, "denormalize expects 13 values");
  }
  const double span = kNormHigh - kNormLow;
  const double inactive_from = kNormHigh - spec.sentinel_margin * span;
  AffordanceVector a;
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    const double v = std::clamp(std::isfinite(y[k]) ? y[k] : kNormHigh, kNormLow, kNormHigh);
    const auto& r = spec.ranges[k];
    const bool always = indicator_at(k) == Indicator::Angle;
    if (!always && v >= inactive_from) continue;
    const double raw = r.lo + (v - kNormLow) / span * (r.sentinel - r.lo);
    a.value[k] = std::clamp(raw, r.lo, r.hi);
    a.active[k] = true;
  }
  return a;
}

std::optional<Area> area_of(double x, const AreaPartition& p) {
  if (x >= -p.central_half_width && x <= p.central_half_width) return Area::Central;
  if (x >= -p.outer && x < -p.central_half_width) return Area::Left;
  if (x > p.central_half_width && x <= p.outer) return Area::Right;
  return std::nullopt;
}

AreaCars closest_car_by_area(const WorldState& world, int ego_id, const AreaPartition& partition) {
  const TrackGeometry& track = *world.track;
  const CarState& ego = world.car(ego_id);
  AreaCars out;
  for (const auto& other : world.cars) {
    if (other.id == ego.id) continue;
    const double y = track.forward_gap(ego.frame.station, other.frame.station);
    if (!(y > 0.0 && y <= partition.max_y)) continue;
    const double x = -(other.frame.lateral - ego.frame.lateral);
    const auto area = area_of(x, partition);
    if (!area) continue;
    auto& slot = out[static_cast<std::size_t>(*area)];
    if (!slot || y < slot->y) slot = CarXY{x, y};
  }
  return out;
}

}  // namespace dpd
