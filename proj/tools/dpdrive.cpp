// dpdrive: command-line front end for the driving stack.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include "dpd/datastore.hpp"
#include "dpd/errors.hpp"
#include "dpd/evaluation.hpp"
#include "dpd/learning.hpp"
#include "dpd/runner.hpp"
#include "dpd/scenario.hpp"
#include "dpd/service.hpp"
#include "dpd/training_data.hpp"

namespace fs = std::filesystem;
using namespace dpd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct ScenarioArgs {
  std::string path;
  std::vector<std::string> overrides;
  std::string perceiver;
  std::string model;
  std::uint64_t seed = 0;
  std::optional<double> duration;

  void add_to(CLI::App* app, bool with_duration = true) {
    app->add_option("--scenario,-s", path, "Scenario file")->required()->check(CLI::ExistingFile);
    app->add_option("--set", overrides, "Override a scenario key: key=value (repeatable)");
    app->add_option("--perceiver", perceiver, "oracle | noisy | learned");
    app->add_option("--model", model, "Model file for the learned perceiver");
    app->add_option("--seed", seed, "Run seed");
    if (with_duration) app->add_option("--duration", duration, "Simulated seconds");
  }

  Scenario load() const {
    Scenario sc = load_scenario(path);
    for (const auto& o : overrides) apply_override(sc, o);
    if (!perceiver.empty()) apply_override(sc, "perceiver=" + perceiver);
    if (!model.empty()) sc.model_path = model;
    sc.finalize();
    return sc;
  }
};

template <class Fn>
void write_file(const fs::path& path, Fn&& fn) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  fn(out);
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

template <class Fn>
auto read_file(const fs::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return fn(in);
}

// --- drive -----------------------------------------------------------------

struct DriveArgs {
  ScenarioArgs scenario;
  std::string out_dir;
  bool pairs = false;
  bool area_pairs = false;
};

int cmd_drive(const DriveArgs& a) {
  const Scenario sc = a.scenario.load();
  DriveOptions opts;
  opts.duration = a.scenario.duration;
  opts.keep_pairs = a.pairs;
  opts.keep_area_pairs = a.area_pairs;
  const DriveResult r = run_drive(sc, a.scenario.seed, opts);

  write_closed_loop_text(std::cout, r.report);
  fmt::print("perception_dropouts {}\ntraffic_collisions {}\n", r.perception_dropouts, r.traffic_collisions);
  if (!a.out_dir.empty()) {
    const fs::path dir = a.out_dir;
    write_file(dir / "report.txt", [&](std::ostream& os) { write_closed_loop_text(os, r.report); });
    write_file(dir / "report.csv", [&](std::ostream& os) { write_closed_loop_csv(os, r.report); });
    write_file(dir / "trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, r.log); });
    if (a.pairs) write_file(dir / "pairs.csv", [&](std::ostream& os) { write_pairs_csv(os, r.pairs); });
    if (a.area_pairs) {
      write_file(dir / "area_pairs.csv", [&](std::ostream& os) { write_area_pairs_csv(os, r.area_pairs); });
    }
  }
  return kExitOk;
}

// --- serve / record ----------------------------------------------------------

struct ServeArgs {
  ScenarioArgs scenario;
  std::string address = "127.0.0.1";
  std::uint16_t port = 8765;
  std::string record_path;
  bool autonomous = false;
  std::optional<std::int64_t> max_ticks;
  std::string log_path;
};

DrivingService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

int run_service(const ServeArgs& a, bool start_recording) {
  const Scenario sc = a.scenario.load();
  ServiceCoreOptions core_opts;
  core_opts.record_path = a.record_path;
  core_opts.initial_control = a.autonomous ? DriveControl::Autonomous : DriveControl::Manual;
  ServiceCore core(sc, a.scenario.seed, core_opts);
  if (start_recording) {
    if (auto err = core.handle_message(R"({"type":"mode","record":"on"})")) {
      throw Error(ErrorCode::ConfigError, *err);
    }
  }
  ServiceOptions opts;
  opts.address = a.address;
  opts.port = a.port;
  opts.max_ticks = a.max_ticks;
  DrivingService service(core, opts);
  const auto port = service.start();
  fmt::print("listening on ws://{}:{}\n", a.address, port);
  std::cout.flush();
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  service.run();
  g_service = nullptr;
  core.flush();
  if (!a.log_path.empty()) {
    write_file(a.log_path, [&](std::ostream& os) { write_trajectory_csv(os, core.log()); });
  }
  fmt::print("ticks {} frames_recorded {}\n", core.session().ticks(), core.frames_recorded());
  return kExitOk;
}

struct RecordArgs {
  ServeArgs serve;
  bool headless = false;
  std::int64_t frames = 1000;
  int every = 1;
  double wander = 0.0;
  double wander_period = 4.0;
  bool append = false;
};

int cmd_record(const RecordArgs& a) {
  if (a.serve.record_path.empty()) throw Error(ErrorCode::ConfigError, "--out is required");
  if (!a.headless) return run_service(a.serve, true);

  const Scenario sc = a.serve.scenario.load();
  DatasetHeader header;
  header.spec = NormalizationSpec::defaults(sc.track->lane_width(), sc.affordance.max_range);
  header.camera = sc.camera;
  header.metadata = nlohmann::json{{"scenario", sc.name},
                                   {"track", sc.track->name()},
                                   {"seed", a.serve.scenario.seed},
                                   {"source", "autonomous"}}
                        .dump();
  const fs::path out = a.serve.record_path;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  DatasetWriter writer = a.append && fs::exists(out) ? DatasetWriter::append_to(out, header)
                                                     : DatasetWriter(out, header);
  RecordOptions opts;
  opts.frames = a.frames;
  opts.every_n_ticks = a.every;
  opts.wander_amplitude = a.wander;
  opts.wander_period = a.wander_period;
  const auto n = record_autonomous(sc, a.serve.scenario.seed, header, opts,
                                   [&](FrameRecord&& rec) { writer.append(rec); });
  writer.flush();
  fmt::print("recorded {} frames to {}\n", n, out.string());
  return kExitOk;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::vector<std::string> data;
  std::vector<std::string> validation;
  std::string out;
  TrainConfig cfg;
  std::vector<int> hidden;
  std::string loss_csv;
  std::int64_t log_every = 1000;
};

std::vector<fs::path> as_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

void print_comparison(const MaeReport& model, const MaeReport& baseline) {
  fmt::print("{:<14} {:>12} {:>12}\n", "indicator", model.estimator, baseline.estimator);
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    const auto i = indicator_at(k);
    const auto cell = [&](const MaeReport& r) {
      const auto v = r.get(i);
      return v ? fmt::format("{:.4f}", *v) : std::string("-");
    };
    fmt::print("{:<14} {:>12} {:>12}\n", indicator_name(i), cell(model), cell(baseline));
  }
}

int cmd_train(TrainArgs a) {
  DatasetHeader header;
  const TrainingSet data = load_training_set(as_paths(a.data), &header);
  if (!a.hidden.empty()) {
    a.cfg.layer_sizes = {static_cast<int>(data.inputs.rows())};
    a.cfg.layer_sizes.insert(a.cfg.layer_sizes.end(), a.hidden.begin(), a.hidden.end());
    a.cfg.layer_sizes.push_back(static_cast<int>(kIndicatorCount));
  }
  fmt::print("training on {} frames\n", data.size());
  const TrainResult result = train(data, header.spec, a.cfg, [&](std::int64_t it, double loss) {
    if (a.log_every > 0 && (it + 1) % a.log_every == 0) fmt::print("iteration {} loss {:.6f}\n", it + 1, loss);
  });
  save_model(result.model, a.out);
  if (!a.loss_csv.empty()) {
    write_file(a.loss_csv, [&](std::ostream& os) {
      os << "iteration,loss\n";
      for (std::size_t i = 0; i < result.loss_curve.size(); ++i) os << fmt::format("{},{:.17g}\n", i, result.loss_curve[i]);
    });
  }
  if (!a.validation.empty()) {
    const auto val = as_paths(a.validation);
    const auto model = mae_per_indicator(model_pairs(result.model, val), header.spec, {}, "model");
    const auto base =
        mae_per_indicator(constant_pairs(mean_target(data), header.spec, val), header.spec, {}, "mean");
    print_comparison(model, base);
  }
  return kExitOk;
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string pairs;
  std::string area_pairs;
  std::string model;
  std::vector<std::string> data;
  std::vector<std::string> baseline_data;
  std::string format = "text";
  bool exclude_disagreement = false;
};

int cmd_eval(const EvalArgs& a) {
  const int sources = !a.pairs.empty() + !a.area_pairs.empty() + !a.model.empty();
  if (sources != 1) throw Error(ErrorCode::ConfigError, "give exactly one of --pairs, --area-pairs, --model");
  const bool csv = a.format == "csv";
  MaeOptions opts;
  if (a.exclude_disagreement) opts.disagreement = DisagreementRule::Exclude;

  if (!a.area_pairs.empty()) {
    const auto pairs = read_file(a.area_pairs, [](std::istream& is) { return read_area_pairs_csv(is); });
    const auto pen = area_task_mae(pairs, true);
    const auto unpen = area_task_mae(pairs, false);
    csv ? write_area_csv(std::cout, pen, unpen) : write_area_text(std::cout, pen, unpen);
    return kExitOk;
  }
  if (!a.pairs.empty()) {
    const auto pairs = read_file(a.pairs, [](std::istream& is) { return read_pairs_csv(is); });
    const auto report = mae_per_indicator(pairs, NormalizationSpec::defaults(), opts, "log");
    csv ? write_mae_csv(std::cout, report) : write_mae_text(std::cout, report);
    return kExitOk;
  }
  if (a.data.empty()) throw Error(ErrorCode::ConfigError, "--model needs --data");
  const MlpModel model = load_model(a.model);
  const auto data = as_paths(a.data);
  const auto report = mae_per_indicator(model_pairs(model, data), model.spec, opts, "model");
  if (a.baseline_data.empty()) {
    csv ? write_mae_csv(std::cout, report) : write_mae_text(std::cout, report);
    return kExitOk;
  }
  const auto mean = mean_target(load_training_set(as_paths(a.baseline_data)));
  print_comparison(report, mae_per_indicator(constant_pairs(mean, model.spec, data), model.spec, opts, "mean"));
  return kExitOk;
}

// --- replay -----------------------------------------------------------------

struct ReplayArgs {
  ScenarioArgs scenario;
  std::string log;
  std::string out;
};

// Re-runs the scenario feeding the logged commands as manual input and checks
// that every logged row is reproduced exactly.
int cmd_replay(const ReplayArgs& a) {
  const Scenario sc = a.scenario.load();
  const auto logged = read_file(a.log, [](std::istream& is) { return read_trajectory_csv(is); });
  DriveSession session(sc, a.scenario.seed);
  std::vector<TrajectoryRow> replayed;
  replayed.reserve(logged.size());
  for (const auto& row : logged) replayed.push_back(session.tick(ControlCommand{row.steer, row.accel}).row);

  std::ostringstream want;
  std::ostringstream got;
  write_trajectory_csv(want, logged);
  write_trajectory_csv(got, replayed);
  if (!a.out.empty()) write_file(a.out, [&](std::ostream& os) { os << got.str(); });
  std::size_t mismatch = logged.size();
  if (want.str() != got.str()) {
    for (std::size_t i = 0; i < logged.size(); ++i) {
      std::ostringstream x;
      std::ostringstream y;
      write_trajectory_csv(x, {logged[i]});
      write_trajectory_csv(y, {replayed[i]});
      if (x.str() != y.str()) {
        mismatch = i;
        break;
      }
    }
  }
  if (mismatch < logged.size()) {
    fmt::print("replay diverges at row {} (tick {})\n", mismatch, logged[mismatch].tick);
    return kExitRuntime;
  }
  fmt::print("replay matches {} rows\n", logged.size());
  return kExitOk;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::ConfigError:
    case ErrorCode::ParseError:
    case ErrorCode::InvalidTrack:
    case ErrorCode::InvalidLane:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Affordance-based highway driving: simulate, record, train, evaluate"};
  app.require_subcommand(1);

  DriveArgs drive;
  auto* drive_cmd = app.add_subcommand("drive", "Closed-loop autonomous run with reports");
  drive.scenario.add_to(drive_cmd);
  drive_cmd->add_option("--out", drive.out_dir, "Directory for report and logs");
  drive_cmd->add_flag("--pairs", drive.pairs, "Also write per-tick estimate/truth pairs");
  drive_cmd->add_flag("--area-pairs", drive.area_pairs, "Also write projection-baseline area pairs");

  RecordArgs record;
  auto* record_cmd = app.add_subcommand("record", "Record a labeled dataset (live human driving or headless)");
  record.serve.scenario.add_to(record_cmd, false);
  record_cmd->add_option("--out,-o", record.serve.record_path, "Dataset file")->required();
  record_cmd->add_flag("--headless", record.headless, "Drive autonomously without the service");
  record_cmd->add_option("--frames", record.frames, "Frames to record (headless)");
  record_cmd->add_option("--every", record.every, "Record every n-th control tick (headless)");
  record_cmd->add_option("--wander", record.wander, "Lane-position wander amplitude in m (headless)");
  record_cmd->add_option("--wander-period", record.wander_period, "Seconds between wander targets (headless)");
  record_cmd->add_flag("--append", record.append, "Append to an existing dataset");
  record_cmd->add_option("--address", record.serve.address, "Listen address");
  record_cmd->add_option("--port", record.serve.port, "Listen port");
  record_cmd->add_option("--log", record.serve.log_path, "Write the live trajectory log on exit");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Live telemetry and control service");
  serve.scenario.add_to(serve_cmd, false);
  serve_cmd->add_option("--address", serve.address, "Listen address");
  serve_cmd->add_option("--port", serve.port, "Listen port (0 picks one)");
  serve_cmd->add_option("--record", serve.record_path, "Dataset file for record requests");
  serve_cmd->add_flag("--autonomous", serve.autonomous, "Start in autonomous mode");
  serve_cmd->add_option("--max-ticks", serve.max_ticks, "Stop after this many ticks");
  serve_cmd->add_option("--log", serve.log_path, "Write the trajectory log on exit");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the affordance regressor");
  train_cmd->add_option("--data", tr.data, "Training dataset (repeatable)")->required();
  train_cmd->add_option("--validation", tr.validation, "Validation dataset (repeatable)");
  train_cmd->add_option("--out,-o", tr.out, "Model file")->required();
  train_cmd->add_option("--iterations", tr.cfg.iterations, "SGD iterations");
  train_cmd->add_option("--lr", tr.cfg.learning_rate, "Learning rate");
  train_cmd->add_option("--batch", tr.cfg.batch_size, "Mini-batch size");
  train_cmd->add_option("--momentum", tr.cfg.momentum, "Momentum");
  train_cmd->add_option("--weight-decay", tr.cfg.weight_decay, "L2 weight decay");
  train_cmd->add_option("--init-scale", tr.cfg.init_scale, "Weight init scale");
  train_cmd->add_option("--seed", tr.cfg.seed, "Init and shuffle seed");
  train_cmd->add_option("--hidden", tr.hidden, "Hidden layer sizes")->delimiter(',');
  train_cmd->add_option("--loss-csv", tr.loss_csv, "Write the loss curve");
  train_cmd->add_option("--log-every", tr.log_every, "Progress interval in iterations");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Per-indicator MAE or the area task");
  eval_cmd->add_option("--pairs", ev.pairs, "Estimate/truth pairs CSV from drive --pairs");
  eval_cmd->add_option("--area-pairs", ev.area_pairs, "Area pairs CSV from drive --area-pairs");
  eval_cmd->add_option("--model", ev.model, "Model to evaluate on --data");
  eval_cmd->add_option("--data", ev.data, "Evaluation dataset (repeatable)");
  eval_cmd->add_option("--baseline-data", ev.baseline_data, "Dataset whose mean target is the baseline");
  eval_cmd->add_option("--format", ev.format, "text | csv")->check(CLI::IsMember({"text", "csv"}));
  eval_cmd->add_flag("--exclude-disagreement", ev.exclude_disagreement,
                     "Skip frames whose activity state disagrees with the truth");

  ReplayArgs rp;
  auto* replay_cmd = app.add_subcommand("replay", "Re-drive a trajectory log and verify it");
  rp.scenario.add_to(replay_cmd, false);
  replay_cmd->add_option("--log", rp.log, "Trajectory CSV")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--out", rp.out, "Write the replayed trajectory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  try {
    if (*drive_cmd) return cmd_drive(drive);
    if (*record_cmd) return cmd_record(record);
    if (*serve_cmd) return run_service(serve, false);
    if (*train_cmd) return cmd_train(tr);
    if (*eval_cmd) return cmd_eval(ev);
    if (*replay_cmd) return cmd_replay(rp);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
