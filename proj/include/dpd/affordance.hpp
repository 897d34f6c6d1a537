#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>

#include "dpd/simulation.hpp"
#include "dpd/track.hpp"

namespace dpd {

// Indicator order matches the published list: angle, the in-lane system
// (toMarking_LL/ML/MR/RR, dist_LL/MM/RR), then the on-marking system
// (toMarking_L/M/R, dist_L/R).
enum class Indicator : std::size_t {
  Angle = 0,
  ToMarkingLL,
  ToMarkingML,
  ToMarkingMR,
  ToMarkingRR,
  DistLL,
  DistMM,
  DistRR,
  ToMarkingL,
  ToMarkingM,
  ToMarkingR,
  DistL,
  DistR,
};

inline constexpr std::size_t kIndicatorCount = 13;
using IndicatorArray = std::array<double, kIndicatorCount>;

inline constexpr std::size_t index_of(Indicator i) { return static_cast<std::size_t>(i); }
inline constexpr Indicator indicator_at(std::size_t i) { return static_cast<Indicator>(i); }

std::string_view indicator_name(Indicator i);
bool is_distance(Indicator i);
bool in_lane_system(Indicator i);
bool on_marking_system(Indicator i);

struct AffordanceVector {
  IndicatorArray value{};
  std::array<bool, kIndicatorCount> active{};

  double operator[](Indicator i) const { return value[index_of(i)]; }
  bool is_active(Indicator i) const { return active[index_of(i)]; }
  void set(Indicator i, double v) {
    value[index_of(i)] = v;
    active[index_of(i)] = true;
  }
  void deactivate(Indicator i) {
    value[index_of(i)] = 0.0;
    active[index_of(i)] = false;
  }
  std::optional<double> get(Indicator i) const {
    return is_active(i) ? std::optional<double>(value[index_of(i)]) : std::nullopt;
  }
  bool in_lane_active() const { return is_active(Indicator::ToMarkingML); }
  bool on_marking_active() const { return is_active(Indicator::ToMarkingM); }

  bool operator==(const AffordanceVector&) const = default;
};

struct SystemActivation {
  bool in_lane_active = false;
  bool on_marking_active = false;
  std::optional<int> straddled_marking;  // 0 = leftmost marking (road edge)
  int lane_index = 0;                    // lane containing the car's center
};

struct AffordanceConfig {
  double in_lane_fraction = 0.425;     // theta_in = fraction * lane_width
  double on_marking_fraction = 0.15;   // theta_on = fraction * lane_width
  double max_range = 60.0;             // m
  GapMeasure gap = GapMeasure::CenterToCenter;

  // Throws ConfigError unless both thresholds are below half a lane and
  // together exceed it (nonempty overlap band).
  void validate() const;
};

SystemActivation system_activation(const LaneFrame& frame, const TrackGeometry& track,
                                   const AffordanceConfig& config = {});

AffordanceVector compute_affordance(const WorldState& world, int ego_id,
                                    const AffordanceConfig& config = {});

struct IndicatorRange {
  double lo = 0.0;
  double hi = 1.0;
  double sentinel = 1.1;  // raw value encoding "inactive"
  bool operator==(const IndicatorRange&) const = default;
};

// Affine map of each indicator from [lo, sentinel] onto [0.1, 0.9].
struct NormalizationSpec {
  std::array<IndicatorRange, kIndicatorCount> ranges{};
  double sentinel_margin = 0.05;  // fraction of the output range treated as inactive

  static NormalizationSpec defaults(double lane_width = 4.0, double max_range = 60.0);
  void validate() const;
  bool operator==(const NormalizationSpec&) const = default;
};

inline constexpr double kNormLow = 0.1;
inline constexpr double kNormHigh = 0.9;

IndicatorArray normalize(const AffordanceVector& a, const NormalizationSpec& spec);
AffordanceVector denormalize(std::span<const double> y, const NormalizationSpec& spec);

// Closest-car-per-area representation. x is positive to the RIGHT of the
// host car, y is the forward gap.
struct AreaPartition {
  double central_half_width = 1.6;
  double outer = 12.0;
  double max_y = 50.0;
  double no_car_y = 50.0;
};

enum class Area : std::size_t { Left = 0, Central = 1, Right = 2 };

struct CarXY {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const CarXY&) const = default;
};

using AreaCars = std::array<std::optional<CarXY>, 3>;  // indexed by Area

std::optional<Area> area_of(double x, const AreaPartition& partition = {});
AreaCars closest_car_by_area(const WorldState& world, int ego_id,
                             const AreaPartition& partition = {});

}  // namespace dpd
