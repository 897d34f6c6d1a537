#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dpd/datastore.hpp"
#include "dpd/evaluation.hpp"
#include "dpd/runner.hpp"
#include "dpd/scenario.hpp"

namespace dpd {

enum class DriveControl { Manual, Autonomous };

struct ServiceCoreOptions {
  std::filesystem::path record_path;  // empty: recording requests are rejected
  DriveControl initial_control = DriveControl::Manual;
};

// Protocol state machine of the live service, free of any networking so it can
// be driven tick by tick. Messages received between two ticks take effect on
// the next tick; control messages are latest-wins.
class ServiceCore {
 public:
  ServiceCore(const Scenario& scenario, std::uint64_t seed, ServiceCoreOptions options = {});

  // Returns an `error` frame when the message is rejected.
  std::optional<std::string> handle_message(std::string_view text, bool from_driver = true);

  // Advances one control period and returns the `state` frame.
  std::string tick();

  DriveControl control() const { return control_; }
  bool recording() const { return recording_; }
  const DriveSession& session() const { return session_; }
  const std::vector<TrajectoryRow>& log() const { return log_; }
  std::size_t frames_recorded() const { return writer_ ? writer_->records_written() : 0; }
  void flush();

 private:
  Scenario scenario_;
  std::uint64_t seed_;
  ServiceCoreOptions options_;
  DriveSession session_;
  DatasetHeader header_;
  std::optional<DatasetWriter> writer_;

  DriveControl control_;
  bool recording_ = false;
  std::optional<DriveControl> pending_control_;
  std::optional<bool> pending_recording_;
  ControlCommand latest_command_;
  std::vector<TrajectoryRow> log_;
};

std::string error_frame(std::int64_t tick, std::string_view message);

struct ServiceOptions {
  std::string address = "127.0.0.1";
  std::uint16_t port = 8765;          // 0 picks a free port
  double tick_period = 0.1;           // s
  std::optional<std::int64_t> max_ticks;
};

// WebSocket front end: one duplex text channel per client. The first client
// to connect drives; later clients are read-only until it leaves. The
// simulation idles while no client is connected.
class DrivingService {
 public:
  DrivingService(ServiceCore& core, ServiceOptions options);
  ~DrivingService();
  DrivingService(const DrivingService&) = delete;
  DrivingService& operator=(const DrivingService&) = delete;

  // Binds and starts the network thread. Throws BindFailure.
  std::uint16_t start();
  // Runs the tick loop on the calling thread until stop() or max_ticks.
  void run();
  void stop();

  std::size_t client_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dpd
