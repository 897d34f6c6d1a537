#include "dpd/runner.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dpd/errors.hpp"
#include "dpd/rendering.hpp"

namespace dpd {

Simulation build_simulation(const Scenario& sc, std::uint64_t seed) {
  if (!sc.track) throw Error(ErrorCode::ConfigError, "scenario has no track");
  const TrackGeometry& track = *sc.track;
  std::vector<CarState> cars;
  std::map<int, TrafficBehavior> behaviors;

  const double ego_lat = track.lane_center_lateral(sc.ego_station, sc.ego_lane) + sc.ego_lateral_offset;
  cars.push_back(make_car(track, 0, sc.ego_station, ego_lat, sc.ego_speed, true));

  int id = 1;
  for (const auto& s : sc.scripted) {
    if (s.lane >= track.lane_count(s.station)) {
      throw Error(ErrorCode::ConfigError, "scripted car lane " + std::to_string(s.lane) + " does not exist");
    }
    cars.push_back(make_car(track, id, s.station, track.lane_center_lateral(s.station, s.lane), s.speed));
    behaviors[id] = {s.lane, s.speed, s.lane_changes};
    ++id;
  }

  SpawnOptions options = sc.spawn;
  options.occupied = cars;
  auto spawn = spawn_traffic(track, sc.traffic_count, seed, options);
  for (std::size_t i = 0; i < spawn.cars.size(); ++i) {
    behaviors[spawn.cars[i].id] = spawn.behaviors[i];
    cars.push_back(std::move(spawn.cars[i]));
  }
  return Simulation(sc.track, std::move(cars), std::move(behaviors), sc.sim, seed);
}

std::unique_ptr<Perceiver> make_perceiver(const Scenario& sc) {
  switch (sc.perceiver) {
    case EstimateSource::Oracle:
      return std::make_unique<OraclePerceiver>(sc.affordance);
    case EstimateSource::Noisy:
      return std::make_unique<NoisyPerceiver>(sc.noise, sc.affordance);
    case EstimateSource::Learned:
      return std::make_unique<LearnedPerceiver>(load_model(sc.model_path), sc.camera, sc.style);
  }
  throw Error(ErrorCode::ConfigError, "unknown perceiver");
}

namespace {

Scenario with_seeded_noise(Scenario sc, std::uint64_t seed) {
  // Distinct runs get distinct noise streams; the scenario's noise.seed shifts them all.
  sc.noise.seed = sc.noise.seed * 0x9e3779b97f4a7c15ULL + seed;
  sc.finalize();
  return sc;
}

}  // namespace

DriveSession::DriveSession(const Scenario& scenario, std::uint64_t seed)
    : DriveSession(scenario, seed, nullptr) {}

DriveSession::DriveSession(const Scenario& scenario, std::uint64_t seed,
                           std::unique_ptr<Perceiver> perceiver)
    : scenario_(with_seeded_noise(scenario, seed)),
      sim_(build_simulation(scenario_, seed)),
      perceiver_(perceiver ? std::move(perceiver) : make_perceiver(scenario_)),
      controller_(scenario_.controller) {}

TickOutcome DriveSession::tick(std::optional<ControlCommand> manual) {
  const WorldState& world = sim_.world();
  const TrackGeometry& track = *world.track;
  const CarState& ego = world.car(ego_id_);
  const double dt = sim_.config().control_dt;
  TickOutcome out;

  try {
    out.truth = compute_affordance(world, ego_id_, scenario_.affordance);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::OffRoad) throw;
    out.truth.set(Indicator::Angle, ego.frame.angle);
  }
  try {
    out.estimate = perceiver_->perceive(world, ego_id_);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::OffRoad) throw;
    out.estimate = {out.truth, perceiver_->source()};
  }

  ControlCommand automatic;
  try {
    automatic = controller_.update(out.estimate.value, ego.speed, dt);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::InconsistentAffordance) throw;
    // No usable lane reading: hold the heading and coast.
    out.perception_dropout = true;
    ++dropouts_;
    const auto& cfg = controller_.config();
    automatic.steer = steering_command(out.estimate.value[Indicator::Angle], 0.0, cfg.road_width,
                                       attenuated_gain(cfg.steer_gain, ego.speed, cfg.gain_speed_scale));
    automatic.accel = 0.0;
  }
  out.manual = manual.has_value();
  out.command = clamp_command(manual.value_or(automatic));

  const auto& state = controller_.state();
  const int n = track.lane_count(ego.frame.station);
  const int lane = ego.frame.lane_index.value_or(-1);
  const int nearest_lane =
      std::clamp(static_cast<int>(std::floor((track.half_width(ego.frame.station) - ego.frame.lateral) /
                                             track.lane_width())),
                 0, n - 1);
  if (is_lane_change(state.mode)) {
    if (state.lane_changes_started != changes_seen_) objective_lane_ = nearest_lane - state.target_lane;
  } else {
    objective_lane_ = nearest_lane;
  }
  changes_seen_ = state.lane_changes_started;

  TrajectoryRow& row = out.row;
  row.tick = sim_.control_ticks();
  row.time = world.time;
  row.x = ego.pose.position.x;
  row.y = ego.pose.position.y;
  row.heading = ego.pose.heading;
  row.station = ego.frame.station;
  row.lateral = ego.frame.lateral;
  row.angle = ego.frame.angle;
  row.speed = ego.speed;
  row.steer = out.command.steer;
  row.accel = out.command.accel;
  row.mode = std::string(to_string(state.mode));
  row.lane_index = lane;
  row.target_lane = objective_lane_;
  row.target_center = track.lane_center_lateral(ego.frame.station, std::clamp(objective_lane_, 0, n - 1));
  row.dist_center = ego.frame.lateral - track.lane_center_lateral(ego.frame.station, nearest_lane);
  row.road_half_width = track.half_width(ego.frame.station);
  row.car_width = ego.width;

  for (const auto& [a, b] : sim_.control_tick(out.command)) {
    if (a == ego_id_ || b == ego_id_) {
      ++row.collision_events;
    } else {
      ++traffic_collisions_;
    }
  }
  return out;
}

DriveResult run_drive(DriveSession& session, double duration, const DriveOptions& options) {
  DriveResult result;
  const double dt = session.simulation().config().control_dt;
  const auto ticks = static_cast<std::int64_t>(std::llround(duration / dt));
  result.log.reserve(static_cast<std::size_t>(std::max<std::int64_t>(ticks, 0)));
  const Scenario& sc = session.scenario();
  for (std::int64_t t = 0; t < ticks; ++t) {
    if (options.keep_area_pairs) {
      const WorldState& w = session.simulation().world();
      result.area_pairs.emplace_back(
          area_cars_from_boxes(car_boxes(w, session.ego_id(), sc.camera, sc.style), sc.camera),
          closest_car_by_area(w, session.ego_id()));
    }
    TickOutcome o = session.tick();
    if (options.keep_pairs) result.pairs.emplace_back(o.estimate.value, o.truth);
    result.log.push_back(std::move(o.row));
  }
  result.report = closed_loop_metrics(result.log);
  result.perception_dropouts = session.perception_dropouts();
  result.traffic_collisions = session.traffic_collisions();
  return result;
}

DriveResult run_drive(const Scenario& scenario, std::uint64_t seed, const DriveOptions& options) {
  DriveSession session(scenario, seed);
  return run_drive(session, options.duration.value_or(scenario.duration), options);
}

namespace {

constexpr std::int64_t kMaxTicksWithoutFrame = 20000;

// Limits a wander offset so the aimed-at position keeps the whole car on the road.
double clamp_to_road(const DriveSession& session, double bias) {
  const WorldState& w = session.simulation().world();
  const CarState& ego = w.car(session.ego_id());
  const TrackGeometry& track = *w.track;
  const auto lane = track.lane_index_at(ego.frame.station, ego.frame.lateral);
  if (!lane) return 0.0;
  const double center = track.lane_center_lateral(ego.frame.station, *lane);
  const double limit = track.lane_count(ego.frame.station) * track.lane_width() / 2.0 - ego.width / 2.0 - 0.3;
  return std::clamp(center + bias, -limit, limit) - center;
}

}  // namespace

std::int64_t record_autonomous(const Scenario& scenario, std::uint64_t seed,
                               const DatasetHeader& header, const RecordOptions& options,
                               const FrameSink& sink) {
  if (options.frames < 0 || options.every_n_ticks < 1) {
    throw Error(ErrorCode::ConfigError, "frames must be >= 0 and every_n_ticks >= 1");
  }
  if (!(options.wander_amplitude >= 0.0 && options.wander_period > 0.0)) {
    throw Error(ErrorCode::ConfigError, "wander needs amplitude >= 0 and period > 0");
  }
  DriveSession session(scenario, seed);
  const double dt = session.simulation().config().control_dt;
  const auto wander_ticks = std::max<std::int64_t>(1, std::llround(options.wander_period / dt));
  std::mt19937_64 rng(seed ^ 0xa5a5a5a5a5a5a5a5ULL);
  std::uniform_real_distribution<double> offset(-options.wander_amplitude, options.wander_amplitude);

  std::int64_t emitted = 0;
  std::int64_t since_last = 0;
  double wander = 0.0;
  while (emitted < options.frames) {
    const std::int64_t t = session.ticks();
    if (options.wander_amplitude > 0.0) {
      if (t % wander_ticks == 0) wander = offset(rng);
      // Stay centered while changing lanes so the change can complete.
      const bool changing = is_lane_change(session.controller().state().mode);
      session.set_lateral_bias(changing ? 0.0 : clamp_to_road(session, wander));
    }
    const bool sample = t % options.every_n_ticks == 0;
    std::optional<WorldState> snapshot;
    std::optional<Raster> raster;
    if (sample) {
      snapshot = session.simulation().world();
      raster = render_ego_view(*snapshot, session.ego_id(), header.camera, scenario.style);
    }
    const TickOutcome o = session.tick();
    if (++since_last > kMaxTicksWithoutFrame) {
      throw Error(ErrorCode::ConfigError, "recording stalled: no labeled frame in " +
                                              std::to_string(kMaxTicksWithoutFrame) + " ticks");
    }
    if (!sample) continue;
    FrameRecord rec;
    try {
      const auto truth = compute_affordance(*snapshot, session.ego_id(), scenario.affordance);
      rec = make_record(*snapshot, session.ego_id(), header, *raster, truth, o.command, options.source);
    } catch (const Error& e) {
      // Off-road or out-of-range poses have no valid label.
      if (e.code() != ErrorCode::OffRoad && e.code() != ErrorCode::OutOfRange) throw;
      continue;
    }
    sink(std::move(rec));
    ++emitted;
    since_last = 0;
  }
  return emitted;
}

}  // namespace dpd
