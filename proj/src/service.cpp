#include "dpd/service.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <map>
#include <mutex>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include "dpd/errors.hpp"
#include "dpd/rendering.hpp"

namespace dpd {

using nlohmann::json;

namespace {

json affordance_json(const AffordanceVector& a) {
  json values = json::object();
  for (std::size_t k = 0; k < kIndicatorCount; ++k) {
    const auto name = std::string(indicator_name(indicator_at(k)));
    values[name] = a.active[k] ? json(a.value[k]) : json(nullptr);
  }
  return values;
}

json mask_json(const AffordanceVector& a) {
  json mask = json::array();
  for (bool b : a.active) mask.push_back(b);
  return mask;
}

json car_json(const CarState& c) {
  return {{"id", c.id},
          {"x", c.pose.position.x},
          {"y", c.pose.position.y},
          {"heading", c.pose.heading},
          {"speed", c.speed},
          {"station", c.frame.station},
          {"lateral", c.frame.lateral},
          {"length", c.length},
          {"width", c.width}};
}

std::string_view control_name(DriveControl c) {
  return c == DriveControl::Manual ? "manual" : "autonomous";
}

}  // namespace

std::string error_frame(std::int64_t tick, std::string_view message) {
  return json{{"type", "error"}, {"tick", tick}, {"message", message}}.dump();
}

ServiceCore::ServiceCore(const Scenario& scenario, std::uint64_t seed, ServiceCoreOptions options)
    : scenario_(scenario),
      seed_(seed),
      options_(std::move(options)),
      session_(scenario, seed),
      control_(options_.initial_control) {
  header_.spec = NormalizationSpec::defaults(scenario_.track->lane_width(), scenario_.affordance.max_range);
  header_.camera = scenario_.camera;
  header_.metadata = json{{"scenario", scenario_.name},
                          {"track", scenario_.track->name()},
                          {"seed", seed_},
                          {"source", "service"}}
                         .dump();
}

std::optional<std::string> ServiceCore::handle_message(std::string_view text, bool from_driver) {
  const auto tick = session_.ticks();
  json msg;
  try {
    msg = json::parse(text);
  } catch (const json::parse_error&) {
    return error_frame(tick, "message is not valid JSON");
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
    return error_frame(tick, "message needs a string 'type'");
  }
  const auto type = msg["type"].get<std::string>();
  if (!from_driver) return error_frame(tick, "read-only client: another client is driving");

  if (type == "control") {
    const auto read = [&](const char* key) -> std::optional<double> {
      if (!msg.contains(key) || !msg[key].is_number()) return std::nullopt;
      const double v = msg[key].get<double>();
      if (!std::isfinite(v) || v < -1.0 || v > 1.0) return std::nullopt;
      return v;
    };
    const auto steer = read("steer");
    const auto accel = read("accel");
    if (!steer || !accel) return error_frame(tick, "control needs numeric steer and accel in [-1, 1]");
    latest_command_ = {*steer, *accel};
    return std::nullopt;
  }
  if (type == "mode") {
    std::optional<DriveControl> control;
    std::optional<bool> record;
    if (msg.contains("mode")) {
      const auto& m = msg["mode"];
      if (m == "manual") {
        control = DriveControl::Manual;
      } else if (m == "autonomous") {
        control = DriveControl::Autonomous;
      } else {
        return error_frame(tick, "mode must be 'manual' or 'autonomous'");
      }
    }
    if (msg.contains("record")) {
      const auto& r = msg["record"];
      if (r == "on" || r == true) {
        record = true;
      } else if (r == "off" || r == false) {
        record = false;
      } else {
        return error_frame(tick, "record must be 'on' or 'off'");
      }
    }
    if (!control && !record) return error_frame(tick, "mode message changes nothing");
    if (record && *record && options_.record_path.empty()) {
      return error_frame(tick, "recording is disabled: the service was started without a dataset path");
    }
    if (control) pending_control_ = control;
    if (record) pending_recording_ = record;
    return std::nullopt;
  }
  return error_frame(tick, "unknown message type '" + type + "'");
}

std::string ServiceCore::tick() {
  if (pending_control_) control_ = *std::exchange(pending_control_, std::nullopt);
  if (pending_recording_) {
    recording_ = *std::exchange(pending_recording_, std::nullopt);
    if (recording_ && !writer_) {
      if (std::filesystem::exists(options_.record_path)) {
        writer_ = DatasetWriter::append_to(options_.record_path, header_);
      } else {
        writer_.emplace(options_.record_path, header_);
      }
    }
  }

  const int ego = session_.ego_id();
  std::optional<WorldState> snapshot;
  std::optional<Raster> raster;
  if (recording_) {
    snapshot = session_.simulation().world();
    raster = render_ego_view(*snapshot, ego, scenario_.camera, scenario_.style);
  }
  const bool manual = control_ == DriveControl::Manual;
  const TickOutcome o = session_.tick(manual ? std::optional<ControlCommand>(latest_command_) : std::nullopt);
  log_.push_back(o.row);

  if (recording_ && writer_) {
    try {
      const auto truth = compute_affordance(*snapshot, ego, scenario_.affordance);
      writer_->append(make_record(*snapshot, ego, header_, *raster, truth, o.command,
                                  manual ? RecordSource::Human : RecordSource::Autonomous));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::OffRoad && e.code() != ErrorCode::OutOfRange) throw;
    }
  }

  const WorldState& w = session_.simulation().world();
  json traffic = json::array();
  for (const auto& c : w.cars) {
    if (c.id != ego) traffic.push_back(car_json(c));
  }
  json frame = {{"type", "state"},
                {"tick", session_.ticks()},
                {"time", w.time},
                {"mode", control_name(control_)},
                {"recording", recording_},
                {"collision", session_.simulation().ego_colliding()},
                {"decision", to_string(session_.controller().last_decision().mode)},
                {"ego", car_json(w.car(ego))},
                {"command", {{"steer", o.command.steer}, {"accel", o.command.accel}}},
                {"traffic", std::move(traffic)},
                {"affordance_truth", affordance_json(o.truth)},
                {"affordance_estimate", affordance_json(o.estimate.value)},
                {"active_truth", mask_json(o.truth)},
                {"active_estimate", mask_json(o.estimate.value)},
                {"estimator", to_string(o.estimate.source)}};
  return frame.dump();
}

void ServiceCore::flush() {
  if (writer_) writer_->flush();
}

// ---------------------------------------------------------------------------
// Network layer

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

class Hub;

class ClientSession : public std::enable_shared_from_this<ClientSession> {
 public:
  ClientSession(tcp::socket socket, Hub& hub, int id) : ws_(std::move(socket)), hub_(hub), id_(id) {}

  void start();
  void send(std::shared_ptr<const std::string> text);
  int id() const { return id_; }

 private:
  void read();
  void write();

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> outbox_;
  Hub& hub_;
  int id_;
  bool open_ = false;
};

// Shared between the network thread and the tick loop.
class Hub {
 public:
  void join(const std::shared_ptr<ClientSession>& s) {
    std::lock_guard lock(mutex_);
    clients_[s->id()] = s;
  }
  void leave(int id) {
    std::lock_guard lock(mutex_);
    clients_.erase(id);
  }
  void inbound(int id, std::string text) {
    std::lock_guard lock(mutex_);
    inbox_.emplace_back(id, std::move(text));
  }
  std::deque<std::pair<int, std::string>> drain() {
    std::lock_guard lock(mutex_);
    return std::exchange(inbox_, {});
  }
  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return clients_.size();
  }
  std::optional<int> driver() const {
    std::lock_guard lock(mutex_);
    if (clients_.empty()) return std::nullopt;
    return clients_.begin()->first;
  }
  std::shared_ptr<ClientSession> find(int id) const {
    std::lock_guard lock(mutex_);
    const auto it = clients_.find(id);
    return it == clients_.end() ? nullptr : it->second.lock();
  }
  std::vector<std::shared_ptr<ClientSession>> all() const {
    std::lock_guard lock(mutex_);
    std::vector<std::shared_ptr<ClientSession>> out;
    for (const auto& [id, w] : clients_) {
      if (auto s = w.lock()) out.push_back(std::move(s));
    }
    return out;
  }

 private:
  mutable std::mutex mutex_;
  std::map<int, std::weak_ptr<ClientSession>> clients_;
  std::deque<std::pair<int, std::string>> inbox_;
};

constexpr std::size_t kMaxOutbox = 64;

void ClientSession::start() {
  ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
  ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
    if (ec) return;
    self->open_ = true;
    self->hub_.join(self);
    self->read();
  });
}

void ClientSession::read() {
  ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
    if (ec) {
      self->open_ = false;
      self->hub_.leave(self->id_);
      return;
    }
    self->hub_.inbound(self->id_, beast::buffers_to_string(self->buffer_.data()));
    self->buffer_.consume(self->buffer_.size());
    self->read();
  });
}

void ClientSession::send(std::shared_ptr<const std::string> text) {
  net::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text)]() mutable {
    if (!self->open_) return;
    // A client that cannot keep up loses its oldest frames, never the newest.
    if (self->outbox_.size() >= kMaxOutbox) self->outbox_.erase(self->outbox_.begin() + 1);
    self->outbox_.push_back(std::move(text));
    if (self->outbox_.size() == 1) self->write();
  });
}

void ClientSession::write() {
  ws_.text(true);
  ws_.async_write(net::buffer(*outbox_.front()),
                  [self = shared_from_this()](beast::error_code ec, std::size_t) {
                    if (ec) {
                      self->open_ = false;
                      self->outbox_.clear();
                      self->hub_.leave(self->id_);
                      return;
                    }
                    self->outbox_.pop_front();
                    if (!self->outbox_.empty()) self->write();
                  });
}

}  // namespace

struct DrivingService::Impl {
  ServiceCore& core;
  ServiceOptions options;
  net::io_context io{1};
  tcp::acceptor acceptor{io};
  Hub hub;
  std::thread network;
  std::atomic<bool> stopping{false};
  int next_id = 1;

  Impl(ServiceCore& c, ServiceOptions o) : core(c), options(std::move(o)) {}

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<ClientSession>(std::move(socket), hub, next_id++)->start();
      accept();
    });
  }
};

DrivingService::DrivingService(ServiceCore& core, ServiceOptions options)
    : impl_(std::make_unique<Impl>(core, std::move(options))) {
  if (!(impl_->options.tick_period > 0.0)) throw Error(ErrorCode::ConfigError, "tick period must be positive");
}

DrivingService::~DrivingService() {
  stop();
  if (impl_->network.joinable()) impl_->network.join();
}

std::uint16_t DrivingService::start() {
  auto& s = *impl_;
  beast::error_code ec;
  const auto address = net::ip::make_address(s.options.address, ec);
  if (ec) throw Error(ErrorCode::ConfigError, "invalid address '" + s.options.address + "'");
  const tcp::endpoint endpoint{address, s.options.port};
  s.acceptor.open(endpoint.protocol(), ec);
  if (!ec) s.acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) s.acceptor.bind(endpoint, ec);
  if (!ec) s.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    throw Error(ErrorCode::BindFailure,
                "cannot listen on " + s.options.address + ":" + std::to_string(s.options.port) + ": " + ec.message());
  }
  const auto port = s.acceptor.local_endpoint().port();
  s.accept();
  s.network = std::thread([&s] { s.io.run(); });
  return port;
}

void DrivingService::run() {
  auto& s = *impl_;
  using clock = std::chrono::steady_clock;
  const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(s.options.tick_period));
  auto next = clock::now() + period;
  std::int64_t ticks = 0;
  while (!s.stopping.load()) {
    std::this_thread::sleep_until(next);
    next += period;
    const auto driver = s.hub.driver();
    for (auto& [id, text] : s.hub.drain()) {
      if (auto err = s.core.handle_message(text, driver && *driver == id)) {
        if (auto client = s.hub.find(id)) client->send(std::make_shared<const std::string>(std::move(*err)));
      }
    }
    if (!driver) {
      // Paused: keep the schedule but do not advance the simulation.
      continue;
    }
    auto frame = std::make_shared<const std::string>(s.core.tick());
    for (auto& client : s.hub.all()) client->send(frame);
    if (s.options.max_ticks && ++ticks >= *s.options.max_ticks) break;
  }
  s.core.flush();
}

void DrivingService::stop() {
  auto& s = *impl_;
  if (s.stopping.exchange(true)) return;
  net::post(s.io, [&s] {
    beast::error_code ec;
    s.acceptor.close(ec);
    s.io.stop();
  });
}

std::size_t DrivingService::client_count() const { return impl_->hub.size(); }

}  // namespace dpd
