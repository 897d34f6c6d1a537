#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "dpd/affordance.hpp"
#include "dpd/control_laws.hpp"
#include "dpd/simulation.hpp"

namespace dpd {

enum class DriveMode { Normal, ChangeLeft, ChangeRight, SlowDown };

std::string_view to_string(DriveMode mode);
std::optional<DriveMode> parse_drive_mode(std::string_view text);
inline bool is_lane_change(DriveMode m) {
  return m == DriveMode::ChangeLeft || m == DriveMode::ChangeRight;
}

struct ControllerConfig {
  double steer_gain = 2.0;          // C
  double gain_speed_scale = 20.0;   // C_eff = C / (1 + v / scale); <= 0 disables
  double road_width = 4.0;          // divisor of dist_center in the steering law
  double v_base = 20.0;             // 72 km/h
  double v_max = 20.0;              // following model
  double c = 1.0;
  double d = 0.0;
  double approach_gap = 20.0;
  double safe_gap = 15.0;
  double overtake_timer = 3.0;      // s, minimum wait after overtaking on a side
  double overtake_clearance = 12.0; // m the overtaken car must fall back behind us
  double max_overtake_wait = 30.0;  // s, side treated as clear after this regardless
  double turn_slowdown_gain = 1.0;  // k_turn
  double min_speed_fraction = 0.4;
  std::size_t steer_history = 10;   // N
  double k_p = 1.0;
  double done_tolerance = 0.2;      // m, lane change complete below this

  void validate() const;
};

enum Side : std::size_t { kLeft = 0, kRight = 1 };

struct ControllerState {
  DriveMode mode = DriveMode::Normal;
  int target_lane = 0;         // objective lane relative to the lane at decision time (+1 left)
  double target_center = 0.0;  // objective lane center relative to the car, m, positive left
  std::deque<double> steer_history;
  std::array<double, 2> lane_clear_timers{1e9, 1e9};  // s since last overtake per side
  // Per side: estimated speed of the last overtaken car and how far it has
  // fallen back since it left the view.
  std::array<std::optional<double>, 2> overtaken_speed;
  std::array<double, 2> overtaken_fallback{0.0, 0.0};
  std::array<std::optional<double>, 2> last_side_dist;
  std::array<std::optional<double>, 2> side_car_speed;  // m/s, smoothed estimate
  std::optional<double> last_speed;
  std::uint64_t lane_changes_started = 0;
};

struct ControlDecision {
  DriveMode mode = DriveMode::Normal;
  double dist_center = 0.0;          // car offset from the tracked center line, positive left
  std::optional<double> lead_dist;   // preceding car in the tracked lane
};

// A lane as seen through the affordance indicators, relative to the car.
struct VisibleLane {
  double center = 0.0;  // m, positive left of the car
  std::optional<double> lead;
};

// Visible lanes ordered left to right.
std::vector<VisibleLane> visible_lanes(const AffordanceVector& a);

std::pair<ControlDecision, ControllerState> decide(const AffordanceVector& a,
                                                   const ControllerState& state,
                                                   const ControllerConfig& config,
                                                   double speed, double dt_control);

double desired_speed(const ControllerState& state, const ControlDecision& decision,
                     const AffordanceVector& a, const ControllerConfig& config);

// Full per-tick pipeline: decide, steer, shape speed, track it.
class Controller {
 public:
  explicit Controller(ControllerConfig config = {});

  ControlCommand update(const AffordanceVector& a, double speed, double dt_control);

  const ControllerState& state() const { return state_; }
  const ControlDecision& last_decision() const { return decision_; }
  const ControllerConfig& config() const { return config_; }
  double last_desired_speed() const { return desired_; }

  // Offset from the tracked center line the steering law aims for, positive left.
  void set_lateral_bias(double bias) { bias_ = bias; }

 private:
  ControllerConfig config_;
  ControllerState state_;
  ControlDecision decision_;
  double desired_ = 0.0;
  double bias_ = 0.0;
};

}  // namespace dpd
