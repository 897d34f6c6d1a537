#include "dpd/controller.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dpd/errors.hpp"

namespace dpd {

double steering_command(double angle, double dist_center, double road_width, double gain) {
  if (!(road_width > 0.0)) {
    throw Error(ErrorCode::PreconditionViolated, "road_width must be positive");
  }
  return std::clamp(gain * (angle - dist_center / road_width), -1.0, 1.0);
}

double following_speed(double dist, double v_max, double c, double d) {
  if (dist < 0.0) throw Error(ErrorCode::PreconditionViolated, "following distance must be >= 0");
  return v_max * (1.0 - std::exp(-(c / v_max) * dist - d));
}

double speed_control(double actual, double desired, double k_p) {
  return std::clamp(k_p * (desired - actual), -1.0, 1.0);
}

double attenuated_gain(double gain, double speed, double speed_scale) {
  if (speed_scale <= 0.0) return gain;
  return gain / (1.0 + std::max(speed, 0.0) / speed_scale);
}

std::string_view to_string(DriveMode mode) {
  switch (mode) {
    case DriveMode::Normal: return "normal";
    case DriveMode::ChangeLeft: return "change_left";
    case DriveMode::ChangeRight: return "change_right";
    case DriveMode::SlowDown: return "slow_down";
  }
  return "normal";
}

std::optional<DriveMode> parse_drive_mode(std::string_view text) {
  for (auto m : {DriveMode::Normal, DriveMode::ChangeLeft, DriveMode::ChangeRight,
                 DriveMode::SlowDown}) {
    if (to_string(m) == text) return m;
  }
  return std::nullopt;
}

void ControllerConfig::validate() const {
  const bool ok = steer_gain > 0.0 && road_width > 0.0 && v_base > 0.0 && v_max > 0.0 &&
                  c > 0.0 && d >= 0.0 && approach_gap > 0.0 && safe_gap > 0.0 &&
                  overtake_timer > 0.0 && overtake_clearance >= 0.0 &&
                  max_overtake_wait >= overtake_timer && turn_slowdown_gain > 0.0 && steer_history > 0 &&
                  k_p > 0.0 && done_tolerance > 0.0 && min_speed_fraction > 0.0 &&
                  min_speed_fraction <= 1.0;
  if (!ok) throw Error(ErrorCode::ConfigError, "controller coefficients must be positive (d >= 0)");
}

std::vector<VisibleLane> visible_lanes(const AffordanceVector& a) {
  using I = Indicator;
  std::vector<VisibleLane> lanes;
  if (a.in_lane_active()) {
    const double ml = a[I::ToMarkingML];
    const double mr = a[I::ToMarkingMR];
    if (a.is_active(I::ToMarkingLL)) lanes.push_back({(ml + a[I::ToMarkingLL]) / 2.0, a.get(I::DistLL)});
    lanes.push_back({(ml - mr) / 2.0, a.get(I::DistMM)});
    if (a.is_active(I::ToMarkingRR)) lanes.push_back({-(mr + a[I::ToMarkingRR]) / 2.0, a.get(I::DistRR)});
  }
  if (a.on_marking_active()) {
    const double marking = -a[I::ToMarkingM];
    auto add = [&](double center, std::optional<double> lead) {
      // Lanes already seen through the in-lane system keep that reading.
      for (const auto& l : lanes) {
        if (std::abs(l.center - center) < 1.0) return;
      }
      lanes.push_back({center, lead});
    };
    if (a.is_active(I::ToMarkingL)) add((marking + a[I::ToMarkingL]) / 2.0, a.get(I::DistL));
    if (a.is_active(I::ToMarkingR)) add((marking - a[I::ToMarkingR]) / 2.0, a.get(I::DistR));
  }
  std::sort(lanes.begin(), lanes.end(),
            [](const VisibleLane& x, const VisibleLane& y) { return x.center > y.center; });
  return lanes;
}

namespace {

const VisibleLane* nearest_lane(const std::vector<VisibleLane>& lanes, double center) {
  const VisibleLane* best = nullptr;
  for (const auto& l : lanes) {
    if (!best || std::abs(l.center - center) < std::abs(best->center - center)) best = &l;
  }
  return best;
}

// Adjacent lane on `side` of `ref`, if visible.
const VisibleLane* neighbor(const std::vector<VisibleLane>& lanes, const VisibleLane& ref,
                            Side side, double lane_width) {
  const VisibleLane* best = nullptr;
  for (const auto& l : lanes) {
    const double offset = side == kLeft ? l.center - ref.center : ref.center - l.center;
    if (offset < 0.5 * lane_width || offset > 1.5 * lane_width) continue;
    if (!best || std::abs(offset - lane_width) < std::abs(std::abs(best->center - ref.center) - lane_width)) {
      best = &l;
    }
  }
  return best;
}

bool lane_available(const VisibleLane* lane, double safe_gap) {
  return lane && (!lane->lead || *lane->lead >= safe_gap);
}

constexpr double kCarSwitchJump = 5.0;  // m per control tick

}  // namespace

std::pair<ControlDecision, ControllerState> decide(const AffordanceVector& a,
                                                   const ControllerState& state,
                                                   const ControllerConfig& config,
                                                   double speed, double dt_control) {
  if (!a.is_active(Indicator::Angle)) {
    throw Error(ErrorCode::InconsistentAffordance, "angle indicator must always be active");
  }
  if (!a.in_lane_active() && !a.on_marking_active()) {
    throw Error(ErrorCode::InconsistentAffordance, "neither coordinate system is active");
  }
  const auto lanes = visible_lanes(a);
  if (lanes.empty()) throw Error(ErrorCode::InconsistentAffordance, "no lane is visible");

  ControllerState next = state;
  for (auto& t : next.lane_clear_timers) t += dt_control;

  // A side car that was close and then disappears has been overtaken; it is
  // now beside or behind us where the camera cannot see it. Its speed is
  // estimated while visible and dead-reckoned until it has fallen back by the
  // clearance.
  for (std::size_t k = 0; k < 2; ++k) {
    if (next.overtaken_speed[k]) next.overtaken_fallback[k] += (speed - *next.overtaken_speed[k]) * dt_control;
  }
  const double mean_speed = 0.5 * (state.last_speed.value_or(speed) + speed);
  next.last_speed = speed;
  if (a.in_lane_active()) {
    const std::array<std::optional<double>, 2> side{a.get(Indicator::DistLL), a.get(Indicator::DistRR)};
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& before = state.last_side_dist[k];
      auto& car_speed = next.side_car_speed[k];
      // A large jump means a farther car became the nearest one.
      const bool switched = before && side[k] && *side[k] > *before + kCarSwitchJump;
      if (before && side[k] && !switched && dt_control > 0.0) {
        const double v = mean_speed + (*side[k] - *before) / dt_control;
        car_speed = car_speed ? 0.7 * *car_speed + 0.3 * v : v;
      }
      if (before && *before < config.safe_gap && (!side[k] || switched)) {
        next.lane_clear_timers[k] = 0.0;
        next.overtaken_speed[k] = car_speed.value_or(speed);
        next.overtaken_fallback[k] = 0.0;
      }
      if (!side[k] || switched) car_speed.reset();
      next.last_side_dist[k] = side[k];
    }
  }
  const auto side_clear = [&](std::size_t k) {
    const double t = next.lane_clear_timers[k];
    if (t >= config.max_overtake_wait) return true;
    return t >= config.overtake_timer &&
           (!next.overtaken_speed[k] || next.overtaken_fallback[k] >= config.overtake_clearance);
  };

  const double w = config.road_width;
  const VisibleLane& ref = *nearest_lane(lanes, 0.0);
  ControlDecision decision;

  if (is_lane_change(state.mode)) {
    const VisibleLane& target = *nearest_lane(lanes, state.target_center);
    const bool arrived = std::abs(target.center) < config.done_tolerance;
    const bool blocked = target.lead && *target.lead < config.safe_gap;
    if (!arrived && !blocked) {
      next.target_center = target.center;
      decision.mode = state.mode;
      decision.dist_center = -target.center;
      decision.lead_dist = target.lead;
      return {decision, next};
    }
    next.mode = DriveMode::Normal;
    next.target_lane = 0;
  }

  decision.lead_dist = ref.lead;
  decision.dist_center = -ref.center;
  next.target_center = ref.center;
  next.target_lane = 0;
  const bool approaching = ref.lead && *ref.lead < config.approach_gap;
  if (!approaching) {
    next.mode = DriveMode::Normal;
  } else {
    const VisibleLane* left = neighbor(lanes, ref, kLeft, w);
    const VisibleLane* right = neighbor(lanes, ref, kRight, w);
    if (lane_available(left, config.safe_gap) &&
        side_clear(kLeft)) {
      next.mode = DriveMode::ChangeLeft;
      next.target_lane = +1;
      next.target_center = left->center;
    } else if (lane_available(right, config.safe_gap) &&
               side_clear(kRight)) {
      next.mode = DriveMode::ChangeRight;
      next.target_lane = -1;
      next.target_center = right->center;
    } else {
      next.mode = DriveMode::SlowDown;
    }
    if (is_lane_change(next.mode)) {
      ++next.lane_changes_started;
      const VisibleLane& target = *nearest_lane(lanes, next.target_center);
      decision.dist_center = -target.center;
      decision.lead_dist = target.lead;
    }
  }
  decision.mode = next.mode;
  return {decision, next};
}

double desired_speed(const ControllerState& state, const ControlDecision& decision,
                     const AffordanceVector& /*a*/, const ControllerConfig& config) {
  double mean_abs = 0.0;
  if (!state.steer_history.empty()) {
    mean_abs = std::accumulate(state.steer_history.begin(), state.steer_history.end(), 0.0,
                               [](double acc, double s) { return acc + std::abs(s); }) /
               static_cast<double>(state.steer_history.size());
  }
  double v = config.v_base *
             std::max(config.min_speed_fraction, 1.0 - config.turn_slowdown_gain * mean_abs);
  if (decision.mode == DriveMode::SlowDown && decision.lead_dist) {
    v = std::min(v, following_speed(*decision.lead_dist, config.v_max, config.c, config.d));
  }
  return v;
}

Controller::Controller(ControllerConfig config) : config_(config) { config_.validate(); }

ControlCommand Controller::update(const AffordanceVector& a, double speed, double dt_control) {
  auto [decision, next] = decide(a, state_, config_, speed, dt_control);
  const double gain = attenuated_gain(config_.steer_gain, speed, config_.gain_speed_scale);
  const double steer =
      steering_command(a[Indicator::Angle], decision.dist_center - bias_, config_.road_width, gain);
  next.steer_history.push_back(steer);
  while (next.steer_history.size() > config_.steer_history) next.steer_history.pop_front();
  desired_ = desired_speed(next, decision, a, config_);
  state_ = std::move(next);
  decision_ = decision;
  return {steer, speed_control(speed, desired_, config_.k_p)};
}

}  // namespace dpd
