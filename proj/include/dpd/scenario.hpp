#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "dpd/affordance.hpp"
#include "dpd/controller.hpp"
#include "dpd/perception.hpp"
#include "dpd/rendering.hpp"
#include "dpd/simulation.hpp"

namespace dpd {

struct ScriptedCar {
  int lane = 0;
  double station = 0.0;
  double speed = 12.5;  // m/s
  std::vector<ScriptedLaneChange> lane_changes;
};

enum class RoadWidthMode { Lane, Road };

struct Scenario {
  std::string name = "scenario";
  std::filesystem::path track_path;
  std::shared_ptr<const TrackGeometry> track;
  double duration = 600.0;  // s
  std::uint64_t seed = 0;

  int traffic_count = 0;
  SpawnOptions spawn;
  std::vector<ScriptedCar> scripted;  // placed before the random traffic

  int ego_lane = 0;
  double ego_station = 0.0;
  double ego_lateral_offset = 0.0;  // m from the lane center, positive left
  double ego_speed = 0.0;

  ControllerConfig controller;
  RoadWidthMode road_width_mode = RoadWidthMode::Lane;
  AffordanceConfig affordance;
  SimConfig sim;

  EstimateSource perceiver = EstimateSource::Oracle;
  NoiseProfile noise;
  std::filesystem::path model_path;
  CameraModel camera;
  RenderStyle style;

  // Validates and resolves derived fields (road width for the steering law).
  void finalize();
};

// Scenario files: `key = value` lines plus `car` and `lane_change` directives;
// see data/scenarios/README.md. Relative paths resolve against `base_dir`.
Scenario parse_scenario(std::string_view text, std::string_view source,
                        const std::filesystem::path& base_dir);
Scenario load_scenario(const std::filesystem::path& path);

// Applies one `key=value` override with the same keys as the file format.
void apply_override(Scenario& scenario, std::string_view assignment);

// Names of every settable key, for help output.
std::vector<std::string> scenario_keys();

}  // namespace dpd
