#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dpd/affordance.hpp"

namespace dpd {

enum class DisagreementRule {
  Penalize,  // an included frame with a mismatched activity state costs |sentinel - truth|
  Exclude,   // such frames are skipped
};

struct MaeOptions {
  double dist_min = 2.0;   // dist_* frames count only when the truth gap lies in [dist_min, dist_max]
  double dist_max = 50.0;
  DisagreementRule disagreement = DisagreementRule::Penalize;
};

struct MaeReport {
  std::array<double, kIndicatorCount> mae{};
  std::array<std::size_t, kIndicatorCount> count{};
  std::string estimator;

  std::optional<double> get(Indicator i) const {
    const auto k = index_of(i);
    return count[k] > 0 ? std::optional<double>(mae[k]) : std::nullopt;
  }
};

using AffordancePair = std::pair<AffordanceVector, AffordanceVector>;  // (estimate, truth)

MaeReport mae_per_indicator(const std::vector<AffordancePair>& pairs, const NormalizationSpec& spec,
                            const MaeOptions& options = {}, std::string estimator = {});

struct AreaErrors {
  double y = 0.0;
  double x = 0.0;
  double d = 0.0;
  std::size_t count = 0;
};

struct AreaMaeReport {
  AreaErrors pooled;
  std::array<AreaErrors, 3> per_area;  // indexed by Area
};

using AreaPair = std::pair<AreaCars, AreaCars>;  // (estimate, truth)

AreaMaeReport area_task_mae(const std::vector<AreaPair>& pairs, bool penalize_fp,
                            const AreaPartition& partition = {});

// One control tick of a closed-loop run, ego only. Laterals follow LaneFrame
// (positive left).
struct TrajectoryRow {
  std::int64_t tick = 0;  // control tick
  double time = 0.0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double station = 0.0;
  double lateral = 0.0;
  double angle = 0.0;
  double speed = 0.0;
  double steer = 0.0;
  double accel = 0.0;
  std::string mode = "normal";
  int lane_index = -1;       // lane containing the ego center, -1 off road
  int target_lane = -1;      // objective lane (current lane outside lane changes)
  double target_center = 0.0;  // lateral of the objective lane center
  double dist_center = 0.0;  // ego offset from its current lane center
  double road_half_width = 0.0;
  double car_width = 0.0;
  int collision_events = 0;  // ego collisions that started this tick
};

struct ClosedLoopReport {
  std::size_t collisions = 0;
  double off_road_fraction = 0.0;
  double mean_abs_dist_center = 0.0;
  std::size_t lane_changes_completed = 0;
  double max_overshoot = 0.0;  // m past the objective center after a lane change
  double duration = 0.0;       // s
};

struct ClosedLoopOptions {
  double overshoot_window = 5.0;  // s after completion during which overshoot is measured
};

ClosedLoopReport closed_loop_metrics(const std::vector<TrajectoryRow>& log,
                                     const ClosedLoopOptions& options = {});

// Reports as aligned text tables and CSV; indicator columns follow Indicator order.
void write_mae_text(std::ostream& os, const MaeReport& report);
void write_mae_csv(std::ostream& os, const MaeReport& report);
void write_area_text(std::ostream& os, const AreaMaeReport& penalized, const AreaMaeReport& unpenalized);
void write_area_csv(std::ostream& os, const AreaMaeReport& penalized, const AreaMaeReport& unpenalized);
void write_closed_loop_text(std::ostream& os, const ClosedLoopReport& report);
void write_closed_loop_csv(std::ostream& os, const ClosedLoopReport& report);

void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryRow>& log);
std::vector<TrajectoryRow> read_trajectory_csv(std::istream& is);

// Per-frame (estimate, truth) log; inactive indicators are empty cells.
void write_pairs_csv(std::ostream& os, const std::vector<AffordancePair>& pairs);
std::vector<AffordancePair> read_pairs_csv(std::istream& is);

void write_area_pairs_csv(std::ostream& os, const std::vector<AreaPair>& pairs);
std::vector<AreaPair> read_area_pairs_csv(std::istream& is);

}  // namespace dpd
