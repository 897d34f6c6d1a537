#include "dpd/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "dpd/control_laws.hpp"
#include "dpd/errors.hpp"

namespace dpd {

ControlCommand clamp_command(ControlCommand cmd) {
  auto clamp1 = [](double v) { return std::isfinite(v) ? std::clamp(v, -1.0, 1.0) : 0.0; };
  return {clamp1(cmd.steer), clamp1(cmd.accel)};
}

const CarState& WorldState::car(int id) const {
  for (const auto& c : cars) {
    if (c.id == id) return c;
  }
  throw Error(ErrorCode::PreconditionViolated, "no car with id " + std::to_string(id));
}

const CarState& WorldState::ego() const {
  for (const auto& c : cars) {
    if (c.is_ego) return c;
  }
  throw Error(ErrorCode::PreconditionViolated, "world has no ego car");
}

double following_gap(const TrackGeometry& track, const CarState& follower, const CarState& leader,
                     GapMeasure measure) {
  const double center = track.forward_gap(follower.frame.station, leader.frame.station);
  if (measure == GapMeasure::CenterToCenter) return center;
  return std::max(0.0, center - 0.5 * (follower.length + leader.length));
}

namespace {

// Moves a pose a distance `ds` along a circle of curvature `kappa`.
Pose arc_advance(const Pose& p, double kappa, double ds) {
  if (std::abs(kappa * ds) < 1e-12) {
    return {{p.position.x + ds * std::cos(p.heading), p.position.y + ds * std::sin(p.heading)},
            p.heading};
  }
  const double h = p.heading + kappa * ds;
  return {{p.position.x + (std::sin(h) - std::sin(p.heading)) / kappa,
           p.position.y + (std::cos(p.heading) - std::cos(h)) / kappa},
          wrap_angle(h)};
}

CarState integrate(const CarState& car, ControlCommand cmd, double dt, const VehicleParams& vp,
                   const TrackGeometry& track) {
  cmd = clamp_command(cmd);
  const double kappa = std::tan(cmd.steer * vp.max_steer) / vp.wheelbase;
  const double a = cmd.accel >= 0.0 ? cmd.accel * vp.max_accel : cmd.accel * vp.max_brake;
  const double v0 = car.speed;
  double v1 = v0 + a * dt;
  double ds = 0.0;
  if (v1 < 0.0) {
    v1 = 0.0;
    ds = v0 * v0 / (2.0 * -a);  // stops within the step
  } else {
    ds = 0.5 * (v0 + v1) * dt;
  }
  CarState next = car;
  next.speed = v1;
  if (ds > 0.0) {
    next.pose = arc_advance(car.pose, kappa, ds);
    next.frame = track.project(next.pose);
  }
  return next;
}

struct Box {
  Vec2 center;
  Vec2 axis_u;  // along heading
  Vec2 axis_v;  // left normal
  double half_l;
  double half_w;
};

Box box_of(const CarState& c) {
  const Vec2 u{std::cos(c.pose.heading), std::sin(c.pose.heading)};
  return {c.pose.position, u, {-u.y, u.x}, 0.5 * c.length, 0.5 * c.width};
}

bool boxes_overlap(const Box& a, const Box& b) {
  const Vec2 d = b.center - a.center;
  for (const Vec2& axis : {a.axis_u, a.axis_v, b.axis_u, b.axis_v}) {
    const double ra = a.half_l * std::abs(dot(a.axis_u, axis)) + a.half_w * std::abs(dot(a.axis_v, axis));
    const double rb = b.half_l * std::abs(dot(b.axis_u, axis)) + b.half_w * std::abs(dot(b.axis_v, axis));
    if (std::abs(dot(d, axis)) >= ra + rb) return false;
  }
  return true;
}

}  // namespace

WorldState step(const WorldState& world, const std::map<int, ControlCommand>& commands,
                double physics_dt, const VehicleParams& vehicle) {
  if (!(physics_dt > 0.0 && physics_dt <= 0.05)) {
    throw Error(ErrorCode::PreconditionViolated, "physics_dt must lie in (0, 0.05]");
  }
  WorldState next = world;
  for (auto& car : next.cars) {
    auto it = commands.find(car.id);
    if (it == commands.end()) {
      throw Error(ErrorCode::PreconditionViolated,
                  "missing command for car " + std::to_string(car.id));
    }
    car = integrate(car, it->second, physics_dt, vehicle, *world.track);
  }
  next.tick = world.tick + 1;
  next.physics_dt = physics_dt;
  next.time = static_cast<double>(next.tick) * physics_dt;
  return next;
}

ControlCommand traffic_policy(const CarState& car, const WorldState& world,
                              const TrafficBehavior& behavior, const TrafficConfig& config) {
  if (car.is_ego) throw Error(ErrorCode::PreconditionViolated, "traffic_policy called on the ego");
  const TrackGeometry& track = *world.track;
  const double s = car.frame.station;
  const int lane = std::clamp(behavior.lane, 0, track.lane_count(s) - 1);
  const double center = track.lane_center_lateral(s, lane);
  const double gain = attenuated_gain(config.steer_gain, car.speed);
  const double steer =
      steering_command(car.frame.angle, car.frame.lateral - center, track.lane_width(), gain);

  // Follow the nearest car whose footprint reaches into this car's lane.
  double best_gap = std::numeric_limits<double>::infinity();
  const double band = 0.5 * track.lane_width();
  for (const auto& other : world.cars) {
    if (other.id == car.id) continue;
    if (std::abs(other.frame.lateral - center) >= band + 0.5 * other.width) continue;
    const double center_gap = track.forward_gap(s, other.frame.station);
    if (!(center_gap > 0.0) || center_gap > config.lookahead) continue;
    best_gap = std::min(best_gap, following_gap(track, car, other, config.gap));
  }
  double desired = behavior.set_speed;
  if (std::isfinite(best_gap)) {
    desired = following_speed(best_gap, behavior.set_speed, config.c, config.d);
  }
  return {steer, speed_control(car.speed, desired, config.k_p)};
}

std::vector<std::pair<int, int>> detect_collisions(const WorldState& world) {
  std::vector<std::pair<int, int>> out;
  std::vector<Box> boxes;
  boxes.reserve(world.cars.size());
  for (const auto& c : world.cars) boxes.push_back(box_of(c));
  for (std::size_t i = 0; i < world.cars.size(); ++i) {
    for (std::size_t j = i + 1; j < world.cars.size(); ++j) {
      // Cheap reject: centers farther apart than the sum of half-diagonals.
      const Vec2 d = boxes[j].center - boxes[i].center;
      const double ri = std::hypot(boxes[i].half_l, boxes[i].half_w);
      const double rj = std::hypot(boxes[j].half_l, boxes[j].half_w);
      if (dot(d, d) > (ri + rj) * (ri + rj)) continue;
      if (boxes_overlap(boxes[i], boxes[j])) {
        const int a = world.cars[i].id;
        const int b = world.cars[j].id;
        out.emplace_back(std::min(a, b), std::max(a, b));
      }
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

CarState make_car(const TrackGeometry& track, int id, double station, double lateral, double speed,
                  bool is_ego) {
  CarState c;
  c.id = id;
  c.pose = track.frame_to_pose(station, lateral, 0.0);
  c.frame = track.project(c.pose);
  c.speed = speed;
  c.is_ego = is_ego;
  return c;
}

TrafficSpawn spawn_traffic(const TrackGeometry& track, int count, std::uint64_t seed,
                           const SpawnOptions& options) {
  if (count < 0) throw Error(ErrorCode::PreconditionViolated, "traffic count must be >= 0");
  TrafficSpawn out;
  if (count == 0) return out;

  const double length = track.total_length();
  const double usable = track.closed() ? length : length - options.min_gap;
  const auto per_lane = static_cast<long long>(std::floor(std::max(usable, 0.0) / options.min_gap));
  const long long capacity = per_lane * track.max_lane_count();
  if (count + static_cast<long long>(options.occupied.size()) > capacity) {
    throw Error(ErrorCode::InsufficientSpace,
                "track of " + std::to_string(length) + " m cannot hold " + std::to_string(count) +
                    " cars at " + std::to_string(options.min_gap) + " m gaps");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> station_dist(0.0, length);
  std::uniform_real_distribution<double> speed_dist(options.speed_min, options.speed_max);

  struct Slot {
    double station;
    int lane;
  };
  std::vector<Slot> placed;
  for (const auto& c : options.occupied) {
    if (c.frame.lane_index) placed.push_back({c.frame.station, *c.frame.lane_index});
  }

  auto too_close = [&](double s, int lane) {
    for (const auto& p : placed) {
      if (p.lane != lane) continue;
      double gap = std::abs(s - p.station);
      if (track.closed()) gap = std::min(gap, length - gap);
      if (gap < options.min_gap) return true;
    }
    return false;
  };

  int next_id = 1;
  for (const auto& c : options.occupied) next_id = std::max(next_id, c.id + 1);

  constexpr int kMaxAttempts = 20000;
  for (int k = 0; k < count; ++k) {
    bool ok = false;
    for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
      const double s = station_dist(rng);
      const int lanes = track.lane_count(s);
      const int lane = static_cast<int>(rng() % static_cast<std::uint64_t>(lanes));
      if (!track.closed() && s > length - options.min_gap) continue;
      if (too_close(s, lane)) continue;
      placed.push_back({s, lane});
      const double speed = speed_dist(rng);
      CarState car = make_car(track, next_id++, s, track.lane_center_lateral(s, lane), speed);
      out.cars.push_back(car);
      out.behaviors.push_back({lane, speed, {}});
      ok = true;
    }
    if (!ok) {
      throw Error(ErrorCode::InsufficientSpace,
                  "could not place traffic car " + std::to_string(k) + " with seed " +
                      std::to_string(seed));
    }
  }
  return out;
}

Simulation::Simulation(std::shared_ptr<const TrackGeometry> track, std::vector<CarState> cars,
                       std::map<int, TrafficBehavior> behaviors, SimConfig config,
                       std::uint64_t seed)
    : behaviors_(std::move(behaviors)), config_(config) {
  world_.track = std::move(track);
  world_.cars = std::move(cars);
  world_.physics_dt = config_.physics_dt;
  world_.rng_seed = seed;
  const int egos = static_cast<int>(
      std::count_if(world_.cars.begin(), world_.cars.end(), [](const CarState& c) { return c.is_ego; }));
  if (egos != 1) throw Error(ErrorCode::PreconditionViolated, "world needs exactly one ego car");
  substeps_ = static_cast<int>(std::lround(config_.control_dt / config_.physics_dt));
  if (substeps_ < 1 || std::abs(substeps_ * config_.physics_dt - config_.control_dt) > 1e-9) {
    throw Error(ErrorCode::ConfigError, "control_dt must be a multiple of physics_dt");
  }
  for (const auto& c : world_.cars) {
    if (!c.is_ego && !behaviors_.count(c.id)) {
      throw Error(ErrorCode::PreconditionViolated,
                  "traffic car " + std::to_string(c.id) + " has no behavior");
    }
  }
  for (const auto& p : detect_collisions(world_)) active_collisions_.insert(p);
}

bool Simulation::ego_colliding() const {
  const int ego = world_.ego().id;
  return std::any_of(active_collisions_.begin(), active_collisions_.end(),
                     [ego](const auto& p) { return p.first == ego || p.second == ego; });
}

std::vector<std::pair<int, int>> Simulation::control_tick(const ControlCommand& ego_command) {
  std::map<int, ControlCommand> commands;
  for (const auto& car : world_.cars) {
    if (car.is_ego) {
      commands[car.id] = clamp_command(ego_command);
    } else {
      commands[car.id] = traffic_policy(car, world_, behaviors_.at(car.id), config_.traffic);
    }
  }

  std::map<int, double> before;
  for (const auto& car : world_.cars) before[car.id] = car.frame.station;

  std::vector<std::pair<int, int>> started;
  for (int k = 0; k < substeps_; ++k) {
    world_ = step(world_, commands, config_.physics_dt, config_.vehicle);
    std::set<std::pair<int, int>> now;
    for (const auto& p : detect_collisions(world_)) {
      now.insert(p);
      if (!active_collisions_.count(p)) {
        ++collision_events_;
        started.push_back(p);
      }
    }
    active_collisions_ = std::move(now);
  }

  // Scripted lane changes fire once the car passes the trigger station.
  const TrackGeometry& track = *world_.track;
  for (const auto& car : world_.cars) {
    auto it = behaviors_.find(car.id);
    if (car.is_ego || it == behaviors_.end()) continue;
    const double moved = track.forward_gap(before[car.id], car.frame.station);
    for (auto& change : it->second.lane_changes) {
      if (change.fired) continue;
      const double to_trigger = track.forward_gap(before[car.id], change.at_station);
      if (to_trigger <= moved) {
        change.fired = true;
        it->second.lane = change.to_lane;
      }
    }
  }
  ++control_ticks_;
  return started;
}

}  // namespace dpd
