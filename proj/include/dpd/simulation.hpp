#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <utility>
#include <vector>

#include "dpd/track.hpp"

namespace dpd {

struct VehicleParams {
  double wheelbase = 2.5;  // m
  double max_steer = 0.3;  // rad, front-wheel angle at |steer| = 1
  double max_accel = 2.0;  // m/s^2 at accel = +1
  double max_brake = 6.0;  // m/s^2 at accel = -1
};

// steer positive = left; accel negative = brake. Both in [-1, 1].
struct ControlCommand {
  double steer = 0.0;
  double accel = 0.0;
};

ControlCommand clamp_command(ControlCommand cmd);

struct CarState {
  int id = 0;
  Pose pose;        // authoritative world pose of the car's center
  LaneFrame frame;  // derived from `pose` after every update
  double speed = 0.0;
  double length = kDefaultCarLength;
  double width = kDefaultCarWidth;
  bool is_ego = false;
};

struct WorldState {
  std::int64_t tick = 0;  // physics ticks
  double time = 0.0;
  double physics_dt = 0.01;
  std::shared_ptr<const TrackGeometry> track;
  std::vector<CarState> cars;
  std::uint64_t rng_seed = 0;

  const CarState& car(int id) const;
  const CarState& ego() const;
};

enum class GapMeasure { CenterToCenter, BumperToBumper };

// Longitudinal gap between a follower and a car ahead of it.
double following_gap(const TrackGeometry& track, const CarState& follower, const CarState& leader,
                     GapMeasure measure);

struct ScriptedLaneChange {
  double at_station = 0.0;
  int to_lane = 0;
  bool fired = false;
};

struct TrafficBehavior {
  int lane = 0;
  double set_speed = 12.5;  // m/s
  std::vector<ScriptedLaneChange> lane_changes;
};

struct TrafficConfig {
  double steer_gain = 2.0;
  double c = 1.0;
  double d = 0.0;
  double k_p = 1.0;
  double lookahead = 100.0;
  GapMeasure gap = GapMeasure::CenterToCenter;
};

// One fixed-timestep kinematic bicycle update of every car.
WorldState step(const WorldState& world, const std::map<int, ControlCommand>& commands,
                double physics_dt, const VehicleParams& vehicle = {});

ControlCommand traffic_policy(const CarState& car, const WorldState& world,
                              const TrafficBehavior& behavior, const TrafficConfig& config = {});

// Oriented-rectangle overlap over all car pairs; pairs are (smaller id, larger id).
std::vector<std::pair<int, int>> detect_collisions(const WorldState& world);

struct SpawnOptions {
  double min_gap = 30.0;
  double speed_min = 40.0 / 3.6;
  double speed_max = 55.0 / 3.6;
  // Already-placed cars that traffic must keep min_gap from (e.g. the ego).
  std::vector<CarState> occupied;
};

struct TrafficSpawn {
  std::vector<CarState> cars;
  std::vector<TrafficBehavior> behaviors;  // parallel to `cars`
};

TrafficSpawn spawn_traffic(const TrackGeometry& track, int count, std::uint64_t seed,
                           const SpawnOptions& options = {});

CarState make_car(const TrackGeometry& track, int id, double station, double lateral, double speed,
                  bool is_ego = false);

struct SimConfig {
  double physics_dt = 0.01;
  double control_dt = 0.1;
  VehicleParams vehicle;
  TrafficConfig traffic;
};

// Owns the world and advances it at the control rate, holding each car's
// command constant across the physics substeps (zero-order hold).
class Simulation {
 public:
  Simulation(std::shared_ptr<const TrackGeometry> track, std::vector<CarState> cars,
             std::map<int, TrafficBehavior> behaviors, SimConfig config, std::uint64_t seed = 0);

  const WorldState& world() const { return world_; }
  const SimConfig& config() const { return config_; }
  const std::map<int, TrafficBehavior>& behaviors() const { return behaviors_; }
  std::int64_t control_ticks() const { return control_ticks_; }

  // Advances one control period. Returns the collision pairs that started
  // during this period.
  std::vector<std::pair<int, int>> control_tick(const ControlCommand& ego_command);

  std::size_t collision_events() const { return collision_events_; }
  bool colliding() const { return !active_collisions_.empty(); }
  bool ego_colliding() const;

 private:
  WorldState world_;
  std::map<int, TrafficBehavior> behaviors_;
  SimConfig config_;
  int substeps_ = 10;
  std::int64_t control_ticks_ = 0;
  std::set<std::pair<int, int>> active_collisions_;
  std::size_t collision_events_ = 0;
};

}  // namespace dpd
