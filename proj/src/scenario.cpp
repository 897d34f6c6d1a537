#include "dpd/scenario.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "dpd/errors.hpp"
#include "text_lines.hpp"

namespace dpd {

namespace {

constexpr double kKmh = 1.0 / 3.6;

struct Ctx {
  std::string_view source;
  int line;
  const std::filesystem::path* base_dir;

  double num(const std::string& v) const { return detail::to_double(source, line, v); }
  long long integer(const std::string& v) const { return detail::to_int(source, line, v); }
  bool boolean(const std::string& v) const { return detail::to_bool(source, line, v); }
  [[noreturn]] void fail(const std::string& msg) const { detail::parse_fail(source, line, msg); }
};

using Setter = std::function<void(Scenario&, const std::string&, const Ctx&)>;

Setter num_field(double Scenario::*member, double scale = 1.0) {
  return [member, scale](Scenario& s, const std::string& v, const Ctx& c) { s.*member = c.num(v) * scale; };
}

template <typename T>
Setter sub_num(T Scenario::*group, double T::*member, double scale = 1.0) {
  return [group, member, scale](Scenario& s, const std::string& v, const Ctx& c) {
    (s.*group).*member = c.num(v) * scale;
  };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    t["name"] = [](Scenario& s, const std::string& v, const Ctx&) { s.name = v; };
    t["track"] = [](Scenario& s, const std::string& v, const Ctx& c) {
      std::filesystem::path p(v);
      if (p.is_relative()) p = *c.base_dir / p;
      s.track_path = p;
      try {
        s.track = std::make_shared<const TrackGeometry>(load_track(p));
      } catch (const Error& e) {
        c.fail(std::string("cannot load track: ") + e.what());
      }
    };
    t["duration"] = num_field(&Scenario::duration);
    t["seed"] = [](Scenario& s, const std::string& v, const Ctx& c) {
      const auto n = c.integer(v);
      if (n < 0) c.fail("seed must be >= 0");
      s.seed = static_cast<std::uint64_t>(n);
    };

    t["traffic.count"] = [](Scenario& s, const std::string& v, const Ctx& c) {
      const auto n = c.integer(v);
      if (n < 0 || n > 1000) c.fail("traffic.count must lie in [0, 1000]");
      s.traffic_count = static_cast<int>(n);
    };
    t["traffic.speed_min_kmh"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.spawn.speed_min = c.num(v) * kKmh; };
    t["traffic.speed_max_kmh"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.spawn.speed_max = c.num(v) * kKmh; };
    t["traffic.min_gap"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.spawn.min_gap = c.num(v); };
    t["traffic.steer_gain"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.sim.traffic.steer_gain = c.num(v); };
    t["traffic.c"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.sim.traffic.c = c.num(v); };
    t["traffic.d"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.sim.traffic.d = c.num(v); };
    t["traffic.k_p"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.sim.traffic.k_p = c.num(v); };

    t["ego.lane"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.ego_lane = static_cast<int>(c.integer(v)); };
    t["ego.station"] = num_field(&Scenario::ego_station);
    t["ego.lateral_offset"] = num_field(&Scenario::ego_lateral_offset);
    t["ego.speed_kmh"] = num_field(&Scenario::ego_speed, kKmh);

    t["controller.C"] = sub_num(&Scenario::controller, &ControllerConfig::steer_gain);
    t["controller.gain_speed_scale"] = sub_num(&Scenario::controller, &ControllerConfig::gain_speed_scale);
    t["controller.v_base"] = sub_num(&Scenario::controller, &ControllerConfig::v_base);
    t["controller.v_max"] = sub_num(&Scenario::controller, &ControllerConfig::v_max);
    t["controller.c"] = sub_num(&Scenario::controller, &ControllerConfig::c);
    t["controller.d"] = sub_num(&Scenario::controller, &ControllerConfig::d);
    t["controller.approach_gap"] = sub_num(&Scenario::controller, &ControllerConfig::approach_gap);
    t["controller.safe_gap"] = sub_num(&Scenario::controller, &ControllerConfig::safe_gap);
    t["controller.overtake_timer"] = sub_num(&Scenario::controller, &ControllerConfig::overtake_timer);
    t["controller.overtake_clearance"] = sub_num(&Scenario::controller, &ControllerConfig::overtake_clearance);
    t["controller.max_overtake_wait"] = sub_num(&Scenario::controller, &ControllerConfig::max_overtake_wait);
    t["controller.k_turn"] = sub_num(&Scenario::controller, &ControllerConfig::turn_slowdown_gain);
    t["controller.min_speed_fraction"] = sub_num(&Scenario::controller, &ControllerConfig::min_speed_fraction);
    t["controller.k_p"] = sub_num(&Scenario::controller, &ControllerConfig::k_p);
    t["controller.done_tolerance"] = sub_num(&Scenario::controller, &ControllerConfig::done_tolerance);
    t["controller.N"] = [](Scenario& s, const std::string& v, const Ctx& c) {
      const auto n = c.integer(v);
      if (n < 1) c.fail("controller.N must be >= 1");
      s.controller.steer_history = static_cast<std::size_t>(n);
    };
    t["controller.road_width"] = [](Scenario& s, const std::string& v, const Ctx& c) {
      if (v == "lane") {
        s.road_width_mode = RoadWidthMode::Lane;
      } else if (v == "road") {
        s.road_width_mode = RoadWidthMode::Road;
      } else {
        c.fail("controller.road_width must be 'lane' or 'road'");
      }
    };

    t["affordance.in_lane_fraction"] = sub_num(&Scenario::affordance, &AffordanceConfig::in_lane_fraction);
    t["affordance.on_marking_fraction"] = sub_num(&Scenario::affordance, &AffordanceConfig::on_marking_fraction);
    t["affordance.max_range"] = sub_num(&Scenario::affordance, &AffordanceConfig::max_range);
    t["gap_measure"] = [](Scenario& s, const std::string& v, const Ctx& c) {
      GapMeasure g = GapMeasure::CenterToCenter;
      if (v == "center") {
        g = GapMeasure::CenterToCenter;
      } else if (v == "bumper") {
        g = GapMeasure::BumperToBumper;
      } else {
        c.fail("gap_measure must be 'center' or 'bumper'");
      }
      s.affordance.gap = g;
      s.sim.traffic.gap = g;
    };

    t["sim.physics_dt"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.sim.physics_dt = c.num(v); };
    t["sim.control_dt"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.sim.control_dt = c.num(v); };
    t["vehicle.wheelbase"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.sim.vehicle.wheelbase = c.num(v); };
    t["vehicle.max_steer"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.sim.vehicle.max_steer = c.num(v); };
    t["vehicle.max_accel"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.sim.vehicle.max_accel = c.num(v); };
    t["vehicle.max_brake"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.sim.vehicle.max_brake = c.num(v); };

    t["perceiver"] = [](Scenario& s, const std::string& v, const Ctx& c) {
      const auto src = parse_estimate_source(v);
      if (!src) c.fail("perceiver must be oracle, noisy or learned");
      s.perceiver = *src;
    };
    t["model"] = [](Scenario& s, const std::string& v, const Ctx& c) {
      std::filesystem::path p(v);
      if (p.is_relative()) p = *c.base_dir / p;
      s.model_path = p;
    };
    t["noise.sigma_lane"] = sub_num(&Scenario::noise, &NoiseProfile::sigma_lane);
    t["noise.sigma_angle"] = sub_num(&Scenario::noise, &NoiseProfile::sigma_angle);
    t["noise.sigma_near"] = sub_num(&Scenario::noise, &NoiseProfile::sigma_near);
    t["noise.sigma_far"] = sub_num(&Scenario::noise, &NoiseProfile::sigma_far);
    t["noise.near_range"] = sub_num(&Scenario::noise, &NoiseProfile::near_range);
    t["noise.miss_rate_far"] = sub_num(&Scenario::noise, &NoiseProfile::miss_rate_far);
    t["noise.false_positive_rate"] = sub_num(&Scenario::noise, &NoiseProfile::false_positive_rate);
    t["noise.seed"] = [](Scenario& s, const std::string& v, const Ctx& c) {
      s.noise.seed = static_cast<std::uint64_t>(c.integer(v));
    };

    t["camera.height"] = sub_num(&Scenario::camera, &CameraModel::height);
    t["camera.focal"] = sub_num(&Scenario::camera, &CameraModel::focal);
    t["camera.cu"] = sub_num(&Scenario::camera, &CameraModel::cu);
    t["camera.cv"] = sub_num(&Scenario::camera, &CameraModel::cv);
    t["camera.width"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.camera.width = static_cast<int>(c.integer(v)); };
    t["camera.height_px"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.camera.height_px = static_cast<int>(c.integer(v)); };
    t["render.road"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.style.road = static_cast<float>(c.num(v)); };
    t["render.supersample"] = [](Scenario& s, const std::string& v, const Ctx& c) {
      const auto n = c.integer(v);
      if (n < 1 || n > 16) c.fail("render.supersample must lie in [1, 16]");
      s.style.supersample = static_cast<int>(n);
    };
    t["render.marking"] = [](Scenario& s, const std::string& v, const Ctx& c) { s.style.marking = static_cast<float>(c.num(v)); };
    return t;
  }();
  return table;
}

void apply_key(Scenario& s, const std::string& key, const std::string& value, const Ctx& ctx) {
  const auto it = setters().find(key);
  if (it == setters().end()) ctx.fail("unknown key '" + key + "'");
  it->second(s, value, ctx);
}

}  // namespace

void Scenario::finalize() {
  if (!track) throw Error(ErrorCode::ConfigError, "scenario '" + name + "' names no track");
  if (!(duration > 0.0)) throw Error(ErrorCode::ConfigError, "duration must be positive");
  if (!(spawn.speed_min > 0.0 && spawn.speed_min <= spawn.speed_max)) {
    throw Error(ErrorCode::ConfigError, "traffic speeds need 0 < min <= max");
  }
  if (!(sim.physics_dt > 0.0 && sim.physics_dt <= 0.05) || !(sim.control_dt >= sim.physics_dt)) {
    throw Error(ErrorCode::ConfigError, "need 0 < physics_dt <= 0.05 and control_dt >= physics_dt");
  }
  const double w = track->lane_width();
  controller.road_width =
      road_width_mode == RoadWidthMode::Lane ? w : w * track->max_lane_count();
  controller.validate();
  affordance.validate();
  noise.validate();
  camera.validate();
  const int lanes = track->lane_count(ego_station);
  if (ego_lane < 0 || ego_lane >= lanes) {
    throw Error(ErrorCode::ConfigError, "ego.lane " + std::to_string(ego_lane) + " does not exist at the start station");
  }
  if (perceiver == EstimateSource::Learned && model_path.empty()) {
    throw Error(ErrorCode::ConfigError, "the learned perceiver needs a model path");
  }
}

Scenario parse_scenario(std::string_view text, std::string_view source,
                        const std::filesystem::path& base_dir) {
  Scenario s;
  for (const auto& line : detail::tokenize_lines(text)) {
    const Ctx ctx{source, line.number, &base_dir};
    const auto& tok = line.tokens;
    if (tok.size() >= 2 && tok[1] == "=") {
      if (tok.size() != 3) ctx.fail("expected 'key = value'");
      apply_key(s, tok[0], tok[2], ctx);
    } else if (tok[0] == "car") {
      // car <lane> <station> <speed_kmh>
      if (tok.size() != 4) ctx.fail("expected 'car <lane> <station> <speed_kmh>'");
      const auto lane = ctx.integer(tok[1]);
      if (lane < 0) ctx.fail("lane must be >= 0");
      s.scripted.push_back({static_cast<int>(lane), ctx.num(tok[2]), ctx.num(tok[3]) * kKmh, {}});
    } else if (tok[0] == "lane_change") {
      // lane_change <car number, 0-based among `car` lines> <at_station> <to_lane>
      if (tok.size() != 4) ctx.fail("expected 'lane_change <car> <at_station> <to_lane>'");
      const auto idx = ctx.integer(tok[1]);
      if (idx < 0 || idx >= static_cast<long long>(s.scripted.size())) {
        ctx.fail("lane_change refers to car " + tok[1] + ", which is not defined above");
      }
      s.scripted[static_cast<std::size_t>(idx)].lane_changes.push_back(
          {ctx.num(tok[2]), static_cast<int>(ctx.integer(tok[3])), false});
    } else {
      ctx.fail("unrecognized line starting with '" + tok[0] + "'");
    }
  }
  if (!s.track) throw Error(ErrorCode::ConfigError, std::string(source) + ": no 'track = ...' line");
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open scenario " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.string(), path.parent_path());
}

void apply_override(Scenario& scenario, std::string_view assignment) {
  const auto eq = assignment.find('=');
  auto trim = [](std::string_view v) {
    while (!v.empty() && v.front() == ' ') v.remove_prefix(1);
    while (!v.empty() && v.back() == ' ') v.remove_suffix(1);
    return std::string(v);
  };
  if (eq == std::string_view::npos) {
    throw Error(ErrorCode::ConfigError, "override '" + std::string(assignment) + "' is not key=value");
  }
  const std::filesystem::path cwd = std::filesystem::current_path();
  const Ctx ctx{"--set", 1, &cwd};
  apply_key(scenario, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), ctx);
}

std::vector<std::string> scenario_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : setters()) keys.push_back(k);
  return keys;
}

}  // namespace dpd
