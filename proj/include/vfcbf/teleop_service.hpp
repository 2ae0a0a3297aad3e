#pragma once

// Interactive teleoperation: a session owns one Simulation and runs it at the
// control rate with the latest human command as the nominal action. Frames
// and commands travel as JSON text over a websocket.
//
// Client messages:
//   {"type":"command","axes":[ax,ay],"yaw_axis":w,"timestamp":ms}
//   {"type":"pause"} {"type":"resume"} {"type":"reset"}
// Server messages:
//   {"type":"frame", ...FrameMessage fields}
//   {"type":"error","message":"..."}

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>

#include "vfcbf/experiments.hpp"

namespace vfcbf {

struct CommandMessage {
  std::array<double, 2> axes{0.0, 0.0};  // clipped to [-1, 1], scaled by max_planar
  double yaw_axis = 0.0;                 // clipped to [-1, 1], scaled by max_yaw_rate
  double timestamp = 0.0;                // client clock, ms

  ControlInput to_control(const ActuatorLimits& limits) const;
};

struct PauseMessage {};
struct ResumeMessage {};
struct ResetMessage {};

using ClientMessage = std::variant<CommandMessage, PauseMessage, ResumeMessage, ResetMessage>;

/// Bad content in an otherwise well-formed exchange; answered with an error
/// frame and the connection stays open.
class MessageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Messages a client must never send (server-only types, oversized payloads).
/// The offending connection is closed.
class ProtocolViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr std::size_t kMaxClientMessageBytes = 64 * 1024;

ClientMessage parse_client_message(const std::string& text);
std::string error_message_json(const std::string& message);

struct FrameMessage {
  std::uint64_t tick = 0;  // session-wide, monotone across resets
  double t = 0.0;          // simulation time since the last reset
  int width = 0, height = 0;
  std::string rgb;            // base64 PNG
  int preview_width = 0, preview_height = 0;
  std::string depth_preview;  // base64 8-bit PNG, near is bright
  double h_now = 0.0;
  double h_next = 0.0;  // NaN serializes as null
  double intervention = 0.0;
  bool safe = false;
  bool fallback_used = false;
  Pose pose;
  double speed = 0.0;
  double d_min_rendered = 0.0;
  bool collided = false;
  StepRecord record;  // server-side only

  std::string to_json() const;
};

class Session {
 public:
  using Listener = std::function<void(const std::string&)>;

  /// Validates the config and runs the pre-exploration phase.
  explicit Session(const ScenarioConfig& cfg, WorkerPool* pool = nullptr, int preview_downsample = 2);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  /// Holds the command until a newer one arrives. Returns false when the
  /// timestamp is older than the held command's.
  bool apply_command(const CommandMessage& msg);
  void pause();
  void resume();
  /// Rebuilds the world, grid and filter and clears the held command and the
  /// pause; takes effect at the next tick.
  void reset();
  /// Dispatches a parsed client message.
  void handle(const ClientMessage& msg);

  /// One observe, fuse, filter, step cycle. Empty while paused. On an internal
  /// error an error frame is broadcast, the session pauses and nothing is
  /// returned. A collision pauses the session after its frame.
  std::optional<FrameMessage> tick();

  /// Real-time loop at tick_rate. A late tick delays the next one; ticks are
  /// never skipped, so the simulation clock slows down instead.
  void start();
  void stop();
  bool running() const { return running_; }

  int subscribe(Listener fn);
  void unsubscribe(int id);
  std::size_t listener_count() const;

  bool paused() const { return paused_; }
  std::uint64_t ticks_emitted() const { return ticks_; }
  const ScenarioConfig& config() const { return cfg_; }
  /// Snapshot of the simulated robot; safe to call while the loop runs.
  RobotState robot_state() const;

 private:
  void broadcast(const std::string& text);
  void wake();
  FrameMessage make_frame(const StepRecord& rec, TickDetail& detail);

  ScenarioConfig cfg_;
  WorkerPool* pool_;
  int preview_downsample_;

  std::unique_ptr<Simulation> sim_;  // touched only by the ticking thread
  mutable std::mutex state_mu_;
  RobotState state_snapshot_;

  std::mutex cmd_mu_;
  std::optional<CommandMessage> held_;
  std::atomic<bool> paused_{false};
  std::atomic<bool> reset_requested_{false};
  std::atomic<std::uint64_t> ticks_{0};

  mutable std::mutex listen_mu_;
  std::map<int, Listener> listeners_;
  int next_listener_ = 0;

  std::atomic<bool> running_{false};
  std::mutex loop_mu_;
  std::condition_variable loop_cv_;
  std::thread loop_;
};

/// Websocket endpoint bound to a session. Every connected client receives all
/// frames; a slow client only ever has the newest frame queued.
class TeleopServer {
 public:
  TeleopServer(Session& session, std::uint16_t port, const std::string& address = "127.0.0.1");
  ~TeleopServer();
  TeleopServer(const TeleopServer&) = delete;
  TeleopServer& operator=(const TeleopServer&) = delete;

  /// Binds and starts accepting. Throws std::runtime_error when the port is
  /// unavailable.
  void start();
  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();
  std::uint16_t port() const;
  std::size_t client_count() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace vfcbf
