#include "vfcbf/teleop_service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "vfcbf/raster.hpp"

namespace vfcbf {

using nlohmann::json;

namespace {

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double clip_axis(double v) { return std::clamp(v, -1.0, 1.0); }

double require_number(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw MessageError(std::string("command: missing field '") + key + "'");
  if (!it->is_number()) throw MessageError(std::string("command: field '") + key + "' must be a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw MessageError(std::string("command: field '") + key + "' must be finite");
  return v;
}

}  // namespace

ControlInput CommandMessage::to_control(const ActuatorLimits& limits) const {
  ControlInput u;
  u.planar = Vec2(clip_axis(axes[0]), clip_axis(axes[1])) * limits.max_planar;
  u.yaw_rate = clip_axis(yaw_axis) * limits.max_yaw_rate;
  return u;
}

ClientMessage parse_client_message(const std::string& text) {
  if (text.size() > kMaxClientMessageBytes) throw ProtocolViolation("message exceeds 64 KiB");
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw MessageError(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw MessageError("message must be a JSON object");
  const auto type_it = j.find("type");
  if (type_it == j.end() || !type_it->is_string()) throw MessageError("message needs a string 'type' field");
  const auto type = type_it->get<std::string>();
  if (type == "pause") return PauseMessage{};
  if (type == "resume") return ResumeMessage{};
  if (type == "reset") return ResetMessage{};
  if (type == "frame" || type == "error") throw ProtocolViolation("clients may not send '" + type + "' messages");
  if (type != "command") throw MessageError("unknown message type '" + type + "'");

  CommandMessage cmd;
  const auto axes = j.find("axes");
  if (axes == j.end() || !axes->is_array() || axes->size() != 2) {
    throw MessageError("command: 'axes' must be an array of two numbers");
  }
  for (std::size_t k = 0; k < 2; ++k) {
    if (!(*axes)[k].is_number()) throw MessageError("command: 'axes' must be an array of two numbers");
    const double v = (*axes)[k].get<double>();
    if (!std::isfinite(v)) throw MessageError("command: 'axes' must be finite");
    cmd.axes[k] = clip_axis(v);
  }
  cmd.yaw_axis = j.contains("yaw_axis") ? clip_axis(require_number(j, "yaw_axis")) : 0.0;
  cmd.timestamp = require_number(j, "timestamp");
  for (const auto& [key, value] : j.items()) {
    if (key != "type" && key != "axes" && key != "yaw_axis" && key != "timestamp") {
      throw MessageError("command: unknown field '" + key + "'");
    }
  }
  return cmd;
}

std::string error_message_json(const std::string& message) {
  return json{{"type", "error"}, {"message", message}}.dump();
}

std::string FrameMessage::to_json() const {
  json j{{"type", "frame"},
         {"tick", tick},
         {"t", t},
         {"width", width},
         {"height", height},
         {"rgb", rgb},
         {"preview_width", preview_width},
         {"preview_height", preview_height},
         {"depth_preview", depth_preview},
         {"h_now", number_or_null(h_now)},
         {"h_next", number_or_null(h_next)},
         {"intervention", intervention},
         {"safe", safe},
         {"fallback_used", fallback_used},
         {"pose",
          {{"x", pose.position.x()}, {"y", pose.position.y()}, {"z", pose.position.z()}, {"yaw", pose.yaw}}},
         {"speed", speed},
         {"d_min_rendered", number_or_null(d_min_rendered)},
         {"collided", collided}};
  return j.dump();
}

Session::Session(const ScenarioConfig& cfg, WorkerPool* pool, int preview_downsample)
    : cfg_(cfg), pool_(pool), preview_downsample_(preview_downsample) {
  if (preview_downsample < 1) throw std::invalid_argument("session: preview downsample must be >= 1");
  sim_ = std::make_unique<Simulation>(cfg_, pool_);
  sim_->pre_explore();
  state_snapshot_ = sim_->state();
}

Session::~Session() { stop(); }

bool Session::apply_command(const CommandMessage& msg) {
  std::lock_guard lock(cmd_mu_);
  if (held_ && msg.timestamp < held_->timestamp) return false;
  CommandMessage c = msg;
  c.axes = {clip_axis(c.axes[0]), clip_axis(c.axes[1])};
  c.yaw_axis = clip_axis(c.yaw_axis);
  held_ = c;
  return true;
}

void Session::pause() { paused_ = true; }

void Session::resume() {
  paused_ = false;
  wake();
}

void Session::reset() {
  reset_requested_ = true;
  wake();
}

void Session::wake() {
  { std::lock_guard lock(loop_mu_); }
  loop_cv_.notify_all();
}

void Session::handle(const ClientMessage& msg) {
  std::visit(
      [this](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, CommandMessage>) {
          apply_command(m);
        } else if constexpr (std::is_same_v<T, PauseMessage>) {
          pause();
        } else if constexpr (std::is_same_v<T, ResumeMessage>) {
          resume();
        } else {
          reset();
        }
      },
      msg);
}

FrameMessage Session::make_frame(const StepRecord& rec, TickDetail& detail) {
  FrameMessage f;
  f.tick = ticks_;
  f.t = rec.t;
  f.width = detail.observation.width();
  f.height = detail.observation.height();
  f.rgb = base64_encode(encode_png(f.width, f.height, 3, rgb_bytes(detail.observation)));
  const auto preview = depth_preview_bytes(detail.observation, cfg_.camera.max_range, preview_downsample_,
                                           f.preview_width, f.preview_height);
  f.depth_preview = base64_encode(encode_png(f.preview_width, f.preview_height, 1, preview));
  const FilterDecision& d = detail.decision;
  f.h_now = d.h_now;
  f.h_next = d.h_next_predicted;
  f.intervention = d.intervention;
  f.safe = d.safe;
  f.fallback_used = d.fallback_used;
  f.pose = sim_->state().pose;
  f.speed = rec.speed;
  f.d_min_rendered = rec.d_min_rendered;
  f.collided = rec.collided;
  f.record = rec;
  return f;
}

std::optional<FrameMessage> Session::tick() {
  try {
    if (reset_requested_.exchange(false)) {
      auto fresh = std::make_unique<Simulation>(cfg_, pool_);
      fresh->pre_explore();
      sim_ = std::move(fresh);
      paused_ = false;
      {
        std::lock_guard lock(cmd_mu_);
        held_.reset();
      }
      std::lock_guard lock(state_mu_);
      state_snapshot_ = sim_->state();
    }
    if (paused_) return std::nullopt;

    ControlInput u;
    {
      std::lock_guard lock(cmd_mu_);
      if (held_) u = held_->to_control(cfg_.limits);
    }
    TickDetail detail;
    const StepRecord rec = sim_->step(u, &detail);
    FrameMessage frame = make_frame(rec, detail);
    ++ticks_;
    {
      std::lock_guard lock(state_mu_);
      state_snapshot_ = sim_->state();
    }
    broadcast(frame.to_json());
    if (rec.collided) paused_ = true;
    return frame;
  } catch (const std::exception& e) {
    paused_ = true;
    broadcast(error_message_json(std::string("session paused: ") + e.what()));
    return std::nullopt;
  }
}

void Session::start() {
  if (running_.exchange(true)) return;
  loop_ = std::thread([this] {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(cfg_.dt()));
    auto next = clock::now();
    std::unique_lock lock(loop_mu_);
    while (running_) {
      lock.unlock();
      tick();
      lock.lock();
      // Deadline measured from the end of a late tick, never catching up.
      next = std::max(next + period, clock::now());
      loop_cv_.wait_until(lock, next, [this] { return !running_; });
      if (running_ && paused_ && !reset_requested_) {
        loop_cv_.wait(lock, [this] { return !running_ || !paused_ || reset_requested_; });
        next = clock::now();
      }
    }
  });
}

void Session::stop() {
  {
    std::lock_guard lock(loop_mu_);
    running_ = false;
  }
  loop_cv_.notify_all();
  if (loop_.joinable()) loop_.join();
}

int Session::subscribe(Listener fn) {
  std::lock_guard lock(listen_mu_);
  const int id = next_listener_++;
  listeners_.emplace(id, std::move(fn));
  return id;
}

void Session::unsubscribe(int id) {
  std::lock_guard lock(listen_mu_);
  listeners_.erase(id);
}

std::size_t Session::listener_count() const {
  std::lock_guard lock(listen_mu_);
  return listeners_.size();
}

RobotState Session::robot_state() const {
  std::lock_guard lock(state_mu_);
  return state_snapshot_;
}

void Session::broadcast(const std::string& text) {
  std::lock_guard lock(listen_mu_);
  for (auto& [id, fn] : listeners_) fn(text);
}

}  // namespace vfcbf
