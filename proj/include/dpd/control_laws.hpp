#pragma once

// Stateless control laws shared by the ego controller and the traffic cars.

namespace dpd {

// steer = C * (angle - dist_center / road_width), clamped to [-1, 1].
// `dist_center` is the signed lateral offset of the car from the line it
// tracks (positive = car left of the line); `angle` follows LaneFrame.
double steering_command(double angle, double dist_center, double road_width, double gain);

// Optimal-velocity car following: v = v_max * (1 - exp(-(c / v_max) * dist - d)).
double following_speed(double dist, double v_max, double c, double d);

// clamp(k_p * (desired - actual), -1, 1)
double speed_control(double actual, double desired, double k_p);

// Gain schedule C_eff = C / (1 + speed / speed_scale).
double attenuated_gain(double gain, double speed, double speed_scale = 20.0);

}  // namespace dpd
