#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "dpd/datastore.hpp"
#include "dpd/service.hpp"
#include "test_support.hpp"

using namespace dpd;
using json = nlohmann::json;
using dpd::test::data_path;

namespace {

Scenario scenario() {
  auto s = load_scenario(data_path("scenarios/highway_2lane.scn"));
  s.finalize();
  return s;
}

json error_of(const std::optional<std::string>& frame) {
  EXPECT_TRUE(frame.has_value());
  if (!frame) return {};
  auto j = json::parse(*frame);
  EXPECT_EQ(j["type"], "error");
  return j;
}

}  // namespace

TEST(ServiceCore, StateFrameFields) {
  ServiceCore core(scenario(), 1);
  const auto f = json::parse(core.tick());
  EXPECT_EQ(f["type"], "state");
  EXPECT_EQ(f["tick"], 1);
  EXPECT_EQ(f["mode"], "manual");
  EXPECT_EQ(f["recording"], false);
  for (const char* k : {"time", "collision", "decision", "ego", "command", "traffic", "affordance_truth",
                        "affordance_estimate", "active_truth", "active_estimate", "estimator"}) {
    EXPECT_TRUE(f.contains(k)) << k;
  }
}

TEST(ServiceCore, ModeChangeTakesEffectOnNextTick) {
  ServiceCore core(scenario(), 1);
  core.tick();
  EXPECT_FALSE(core.handle_message(R"({"type":"mode","mode":"autonomous"})"));
  EXPECT_EQ(core.control(), DriveControl::Manual);
  const auto f = json::parse(core.tick());
  EXPECT_EQ(f["mode"], "autonomous");
  EXPECT_EQ(core.control(), DriveControl::Autonomous);
}

TEST(ServiceCore, ManualControlIsLatestWins) {
  ServiceCore core(scenario(), 1);
  EXPECT_FALSE(core.handle_message(R"({"type":"control","steer":0.5,"accel":0.1})"));
  EXPECT_FALSE(core.handle_message(R"({"type":"control","steer":-0.25,"accel":-1})"));
  const auto f = json::parse(core.tick());
  EXPECT_DOUBLE_EQ(f["command"]["steer"].get<double>(), -0.25);
  EXPECT_DOUBLE_EQ(f["command"]["accel"].get<double>(), -1.0);
  // The last command persists until a new one arrives.
  const auto g = json::parse(core.tick());
  EXPECT_DOUBLE_EQ(g["command"]["steer"].get<double>(), -0.25);
}

TEST(ServiceCore, RejectsBadMessagesWithErrorFrames) {
  ServiceCore core(scenario(), 1);
  core.tick();
  const auto e = error_of(core.handle_message("{not json"));
  EXPECT_EQ(e["tick"], 1);
  EXPECT_TRUE(e["message"].is_string());
  error_of(core.handle_message(R"({"kind":"control"})"));
  error_of(core.handle_message(R"({"type":"teleport"})"));
  error_of(core.handle_message(R"({"type":"control","steer":1.5,"accel":0})"));
  error_of(core.handle_message(R"({"type":"control","steer":0})"));
  error_of(core.handle_message(R"({"type":"mode","mode":"turbo"})"));
  error_of(core.handle_message(R"({"type":"mode"})"));
  // Rejected messages leave the state untouched.
  const auto f = json::parse(core.tick());
  EXPECT_EQ(f["mode"], "manual");
  EXPECT_DOUBLE_EQ(f["command"]["steer"].get<double>(), 0.0);
}

TEST(ServiceCore, ReadOnlyClientsCannotDrive) {
  ServiceCore core(scenario(), 1);
  const auto e = error_of(core.handle_message(R"({"type":"control","steer":0.5,"accel":0})", false));
  EXPECT_NE(e["message"].get<std::string>().find("read-only"), std::string::npos);
  const auto f = json::parse(core.tick());
  EXPECT_DOUBLE_EQ(f["command"]["steer"].get<double>(), 0.0);
}

TEST(ServiceCore, RecordingNeedsADatasetPath) {
  ServiceCore core(scenario(), 1);
  error_of(core.handle_message(R"({"type":"mode","record":"on"})"));
  core.tick();
  EXPECT_FALSE(core.recording());
}

TEST(ServiceCore, RecordsHumanFramesWhileRecordingIsOn) {
  dpd::test::TempDir dir("service_rec");
  const auto path = dir / "live.dpd";
  {
    ServiceCore core(scenario(), 1, {.record_path = path});
    EXPECT_FALSE(core.handle_message(R"({"type":"mode","record":"on"})"));
    EXPECT_FALSE(core.handle_message(R"({"type":"control","steer":0.0,"accel":0.2})"));
    for (int i = 0; i < 5; ++i) core.tick();
    EXPECT_FALSE(core.handle_message(R"({"type":"mode","record":"off"})"));
    for (int i = 0; i < 5; ++i) core.tick();
    EXPECT_EQ(core.frames_recorded(), 5u);
    core.flush();
  }
  const auto ds = read_all(path);
  ASSERT_EQ(ds.records.size(), 5u);
  for (const auto& r : ds.records) {
    EXPECT_EQ(r.source, RecordSource::Human);
    EXPECT_DOUBLE_EQ(r.command.accel, 0.2);
  }
  // Turning recording on again in a new session appends.
  ServiceCore again(scenario(), 2, {.record_path = path});
  EXPECT_FALSE(again.handle_message(R"({"type":"mode","record":true,"mode":"autonomous"})"));
  for (int i = 0; i < 3; ++i) again.tick();
  again.flush();
  const auto more = read_all(path);
  ASSERT_EQ(more.records.size(), 8u);
  EXPECT_EQ(more.records.back().source, RecordSource::Autonomous);
}

namespace {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

struct Client {
  net::io_context io;
  websocket::stream<tcp::socket> ws{io};

  explicit Client(std::uint16_t port) {
    tcp::resolver resolver(io);
    net::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1", "/");
  }
  json read() {
    beast::flat_buffer buf;
    ws.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  }
  json read_type(const std::string& type) {
    for (;;) {
      auto j = read();
      if (j["type"] == type) return j;
    }
  }
  void send(const std::string& text) { ws.write(net::buffer(text)); }
};

}  // namespace

TEST(DrivingService, StreamsStateAtTheControlRate) {
  ServiceCore core(scenario(), 1);
  DrivingService service(core, {.port = 0, .tick_period = 0.1, .max_ticks = 60});
  const auto port = service.start();
  ASSERT_NE(port, 0);
  std::thread loop([&] { service.run(); });

  // No client: the simulation stays paused.
  std::this_thread::sleep_for(std::chrono::milliseconds(350));
  EXPECT_EQ(core.session().ticks(), 0);

  Client driver(port);
  const auto first = driver.read_type("state");
  EXPECT_EQ(first["tick"], 1);
  const auto t0 = std::chrono::steady_clock::now();
  std::int64_t last = first["tick"];
  constexpr int kFrames = 30;
  for (int i = 0; i < kFrames; ++i) {
    const auto f = driver.read_type("state");
    EXPECT_EQ(f["tick"].get<std::int64_t>(), last + 1);
    last = f["tick"];
  }
  const double period = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / kFrames;
  EXPECT_NEAR(period, 0.1, 0.005);

  // Driver commands reach the simulation.
  driver.send(R"({"type":"control","steer":0.3,"accel":0.0})");
  bool applied = false;
  for (int i = 0; i < 5 && !applied; ++i) {
    applied = driver.read_type("state")["command"]["steer"].get<double>() == 0.3;
  }
  EXPECT_TRUE(applied);

  // A second client watches the same stream but cannot drive.
  Client viewer(port);
  viewer.send(R"({"type":"control","steer":-0.3,"accel":0.0})");
  const auto err = viewer.read_type("error");
  EXPECT_NE(err["message"].get<std::string>().find("read-only"), std::string::npos);
  EXPECT_EQ(viewer.read_type("state")["command"]["steer"].get<double>(), 0.3);

  // Malformed driver input yields an error frame and the stream continues.
  driver.send("garbage");
  EXPECT_EQ(driver.read_type("error")["type"], "error");

  loop.join();
  EXPECT_EQ(core.session().ticks(), 60);
}
