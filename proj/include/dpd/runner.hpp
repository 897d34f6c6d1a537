#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "dpd/controller.hpp"
#include "dpd/datastore.hpp"
#include "dpd/evaluation.hpp"
#include "dpd/perception.hpp"
#include "dpd/scenario.hpp"
#include "dpd/simulation.hpp"

namespace dpd {

// Builds the initial world of a scenario: ego (id 0), scripted cars, then
// seeded random traffic.
Simulation build_simulation(const Scenario& scenario, std::uint64_t seed);

std::unique_ptr<Perceiver> make_perceiver(const Scenario& scenario);

struct TickOutcome {
  TrajectoryRow row;
  AffordanceVector truth;
  AffordanceEstimate estimate;
  ControlCommand command;
  bool manual = false;
  bool perception_dropout = false;  // controller could not use the estimate
};

// One closed-loop driving session at the control rate. The headless runner and
// the live service both drive through this class, so a session without manual
// input is identical in either path.
class DriveSession {
 public:
  DriveSession(const Scenario& scenario, std::uint64_t seed);
  DriveSession(const Scenario& scenario, std::uint64_t seed, std::unique_ptr<Perceiver> perceiver);

  // Perceive, decide, and advance one control period. A manual command
  // replaces the controller output; the controller still observes the frame.
  TickOutcome tick(std::optional<ControlCommand> manual = std::nullopt);

  const Simulation& simulation() const { return sim_; }
  const Controller& controller() const { return controller_; }
  const Scenario& scenario() const { return scenario_; }
  std::int64_t ticks() const { return sim_.control_ticks(); }
  int ego_id() const { return ego_id_; }
  std::size_t perception_dropouts() const { return dropouts_; }
  std::size_t traffic_collisions() const { return traffic_collisions_; }

  // Desired offset from the tracked lane center, positive left. Used to make
  // recorded driving cover off-center poses.
  void set_lateral_bias(double bias) { controller_.set_lateral_bias(bias); }

 private:
  Scenario scenario_;
  Simulation sim_;
  std::unique_ptr<Perceiver> perceiver_;
  Controller controller_;
  int ego_id_ = 0;
  int objective_lane_ = -1;
  std::uint64_t changes_seen_ = 0;
  std::size_t dropouts_ = 0;
  std::size_t traffic_collisions_ = 0;
};

struct DriveOptions {
  std::optional<double> duration;  // overrides the scenario's
  bool keep_pairs = false;         // per-tick (estimate, truth) affordance pairs
  bool keep_area_pairs = false;    // projection baseline vs closest-car truth
};

struct DriveResult {
  std::vector<TrajectoryRow> log;
  ClosedLoopReport report;
  std::vector<AffordancePair> pairs;
  std::vector<AreaPair> area_pairs;
  std::size_t perception_dropouts = 0;
  std::size_t traffic_collisions = 0;  // collisions between two traffic cars
};

DriveResult run_drive(const Scenario& scenario, std::uint64_t seed, const DriveOptions& options = {});
DriveResult run_drive(DriveSession& session, double duration, const DriveOptions& options = {});

struct RecordOptions {
  std::int64_t frames = 1000;
  int every_n_ticks = 1;
  RecordSource source = RecordSource::Autonomous;
  // Lane-position wander: the ego aims at a random offset from the lane
  // center, redrawn every `wander_period` seconds.
  double wander_amplitude = 0.0;  // m
  double wander_period = 4.0;     // s
};

using FrameSink = std::function<void(FrameRecord&&)>;

// Drives a scenario autonomously and emits one record per sampled tick.
// Returns the number of frames emitted.
std::int64_t record_autonomous(const Scenario& scenario, std::uint64_t seed,
                               const DatasetHeader& header, const RecordOptions& options,
                               const FrameSink& sink);

}  // namespace dpd
