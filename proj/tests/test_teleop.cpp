#include <doctest.h>

#include <chrono>
#include <cmath>
#include <string>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <json.hpp>

#include "vfcbf/raster.hpp"
#include "vfcbf/teleop_service.hpp"

using namespace vfcbf;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;
using nlohmann::json;

namespace {

ScenarioConfig teleop_config(double duration = 10.0) {
  ScenarioConfig cfg;
  cfg.nominal.kind = NominalPolicy::Kind::zero;
  cfg.duration = duration;
  cfg.repetitions = 1;
  return cfg;
}

CommandMessage command(double ax, double ay, double ts) {
  CommandMessage c;
  c.axes = {ax, ay};
  c.timestamp = ts;
  return c;
}

struct Client {
  boost::asio::io_context ioc;
  websocket::stream<tcp::socket> ws{ioc};

  explicit Client(std::uint16_t port) {
    tcp::resolver resolver(ioc);
    boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1:" + std::to_string(port), "/");
  }

  void send(const std::string& text) { ws.write(boost::asio::buffer(text)); }

  json read() {
    beast::flat_buffer buf;
    ws.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  }

  // Reads until an error message arrives, skipping frames.
  json read_error() {
    for (;;) {
      json j = read();
      if (j["type"] == "error") return j;
    }
  }
};

}  // namespace

TEST_CASE("client message parsing") {
  const auto cmd = std::get<CommandMessage>(
      parse_client_message(R"({"type":"command","axes":[0.5,-2.0],"yaw_axis":3,"timestamp":12.5})"));
  CHECK(cmd.axes[0] == 0.5);
  CHECK(cmd.axes[1] == -1.0);
  CHECK(cmd.yaw_axis == 1.0);
  CHECK(cmd.timestamp == 12.5);
  CHECK(std::holds_alternative<PauseMessage>(parse_client_message(R"({"type":"pause"})")));
  CHECK(std::holds_alternative<ResumeMessage>(parse_client_message(R"({"type":"resume"})")));
  CHECK(std::holds_alternative<ResetMessage>(parse_client_message(R"({"type":"reset"})")));

  const ActuatorLimits lim{2.0, 1.0};
  const ControlInput u = cmd.to_control(lim);
  CHECK(u.planar.x() == 1.0);
  CHECK(u.planar.y() == -2.0);
  CHECK(u.yaw_rate == 1.0);
}

TEST_CASE("malformed messages raise MessageError") {
  for (const char* bad : {"not json", "[]", R"({"axes":[0,0]})", R"({"type":"fly"})", R"({"type":"command"})",
                          R"({"type":"command","axes":[0],"timestamp":0})",
                          R"({"type":"command","axes":[0,"x"],"timestamp":0})",
                          R"({"type":"command","axes":[0,0]})", R"({"type":"command","axes":[0,0],"timestamp":0,"x":1})"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_client_message(bad), MessageError);
  }
}

TEST_CASE("server-only types and oversized payloads are protocol violations") {
  CHECK_THROWS_AS(parse_client_message(R"({"type":"frame"})"), ProtocolViolation);
  CHECK_THROWS_AS(parse_client_message(R"({"type":"error","message":"x"})"), ProtocolViolation);
  const std::string big = R"({"type":"pause","pad":")" + std::string(kMaxClientMessageBytes, 'a') + "\"}";
  CHECK_THROWS_AS(parse_client_message(big), ProtocolViolation);
}

TEST_CASE("error message JSON") {
  const json j = json::parse(error_message_json("bad \"thing\""));
  CHECK(j["type"] == "error");
  CHECK(j["message"] == "bad \"thing\"");
}

TEST_CASE("without commands the session holds still and never intervenes") {
  Session s(teleop_config());
  const Vec3 start = s.robot_state().pose.position;
  for (int k = 0; k < 5; ++k) {
    const auto f = s.tick();
    REQUIRE(f.has_value());
    CHECK(f->intervention == 0.0);
    CHECK(f->speed == 0.0);
    CHECK(f->tick == static_cast<std::uint64_t>(k));
  }
  CHECK(s.robot_state().pose.position == start);
}

TEST_CASE("frames carry decodable rasters and the tick's filter values") {
  Session s(teleop_config());
  s.apply_command(command(0.5, 0.0, 1.0));
  const auto f = s.tick();
  REQUIRE(f.has_value());
  int w = 0, h = 0, c = 0;
  const auto rgb = decode_png(base64_decode(f->rgb), w, h, c);
  CHECK(w == f->width);
  CHECK(h == f->height);
  CHECK(c == 3);
  CHECK(rgb.size() == static_cast<std::size_t>(w * h * 3));
  decode_png(base64_decode(f->depth_preview), w, h, c);
  CHECK(w == f->preview_width);
  CHECK(h == f->preview_height);
  CHECK(c == 1);
  CHECK(f->h_now == f->record.h_now);
  CHECK(f->intervention == f->record.delta_u);
  CHECK(f->speed == f->record.speed);

  const json j = json::parse(f->to_json());
  for (const char* key : {"type", "tick", "rgb", "depth_preview", "h_now", "h_next", "intervention", "safe",
                          "fallback_used", "pose", "speed", "d_min_rendered"}) {
    CAPTURE(key);
    CHECK(j.contains(key));
  }
  CHECK(j["type"] == "frame");
  CHECK_FALSE(j.contains("record"));
}

TEST_CASE("newest command wins and older timestamps are dropped") {
  Session s(teleop_config());
  CHECK(s.apply_command(command(0.25, 0.0, 10.0)));
  CHECK(s.apply_command(command(0.0, 0.5, 20.0)));
  CHECK_FALSE(s.apply_command(command(0.5, 0.0, 15.0)));
  const Vec3 before = s.robot_state().pose.position;
  REQUIRE(s.tick().has_value());
  const Vec3 moved = s.robot_state().pose.position - before;
  // 0.5 * max_planar along body y for one 0.1 s tick, possibly filtered.
  CHECK(std::abs(moved.x()) < 1e-9);
  CHECK(moved.y() > 0.0);
}

TEST_CASE("pause, resume and reset") {
  Session s(teleop_config());
  s.apply_command(command(0.5, 0.0, 1.0));
  REQUIRE(s.tick().has_value());
  s.pause();
  CHECK(s.paused());
  CHECK_FALSE(s.tick().has_value());
  s.resume();
  const auto f = s.tick();
  REQUIRE(f.has_value());
  CHECK(f->tick == 1);
  const double moved = s.robot_state().pose.position.x();

  s.pause();
  s.reset();
  const auto g = s.tick();
  REQUIRE(g.has_value());
  CHECK_FALSE(s.paused());
  CHECK(g->tick == 2);  // session-wide counter keeps going
  CHECK(g->t == 0.0);
  // The held command was cleared, so the robot stayed at the start.
  CHECK(s.robot_state().pose.position.x() < moved);
  CHECK(g->speed == 0.0);
}

TEST_CASE("a collision pauses the session after its frame") {
  ScenarioConfig cfg = teleop_config();
  cfg.filter_enabled = false;
  Session s(cfg);
  s.apply_command(command(0.5, 0.0, 1.0));
  bool collided = false;
  for (int k = 0; k < 40 && !collided; ++k) {
    const auto f = s.tick();
    REQUIRE(f.has_value());
    collided = f->collided;
  }
  CHECK(collided);
  CHECK(s.paused());
  CHECK_FALSE(s.tick().has_value());
}

TEST_CASE("scripted worst-case client reproduces the scripted run tick for tick") {
  ScenarioConfig scripted;
  scripted.duration = 3.0;
  scripted.repetitions = 1;
  const RunResult ref = run_scenario(scripted);

  ScenarioConfig cfg = scripted;
  cfg.nominal.kind = NominalPolicy::Kind::zero;
  Session s(cfg);
  s.handle(parse_client_message(R"({"type":"command","axes":[0.5,0],"timestamp":0})"));
  for (const auto& rec : ref.records) {
    const auto f = s.tick();
    REQUIRE(f.has_value());
    CHECK(records_to_csv({f->record}, false) == records_to_csv({rec}, false));
  }
}

TEST_CASE("websocket endpoint: frames, error replies and violations") {
  ScenarioConfig cfg = teleop_config();
  Session session(cfg);
  TeleopServer server(session, 0);
  server.start();
  REQUIRE(server.port() != 0);

  Client a(server.port());
  a.send("{oops");
  const json err = a.read_error();
  CHECK(err["message"].get<std::string>().find("malformed") != std::string::npos);

  // The command is applied in order before the error reply that follows it.
  a.send(R"({"type":"command","axes":[0.5,0],"timestamp":1})");
  a.send(R"({"type":"bogus"})");
  a.read_error();

  Client b(server.port());
  for (int k = 0; k < 100 && server.client_count() < 2; ++k) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  CHECK(server.client_count() == 2);

  REQUIRE(session.tick().has_value());
  const json fa = a.read();
  const json fb = b.read();
  CHECK(fa["type"] == "frame");
  CHECK(fa == fb);
  CHECK(fa["speed"].get<double>() > 0.0);

  b.send(R"({"type":"frame"})");
  beast::flat_buffer buf;
  beast::error_code ec;
  b.ws.read(buf, ec);
  CHECK(ec == websocket::error::closed);
  CHECK(b.ws.reason().code == websocket::close_code::policy_error);

  // The offending connection alone is closed.
  REQUIRE(session.tick().has_value());
  CHECK(a.read()["type"] == "frame");

  server.stop();
}

TEST_CASE("websocket endpoint drives the real-time loop") {
  ScenarioConfig scripted;
  scripted.duration = 1.0;
  scripted.repetitions = 1;
  const RunResult ref = run_scenario(scripted);

  ScenarioConfig cfg = scripted;
  cfg.nominal.kind = NominalPolicy::Kind::zero;
  Session session(cfg);
  TeleopServer server(session, 0);
  server.start();
  Client c(server.port());
  c.send(R"({"type":"command","axes":[0.5,0],"timestamp":0})");
  c.send(R"({"type":"sync"})");
  c.read_error();

  session.start();
  for (const auto& rec : ref.records) {
    json f = c.read();
    REQUIRE(f["type"] == "frame");
    CAPTURE(f["tick"]);
    CHECK(f["h_now"].get<double>() == rec.h_now);
    CHECK(f["intervention"].get<double>() == rec.delta_u);
    CHECK(f["speed"].get<double>() == rec.speed);
  }
  session.stop();
  server.stop();
}

TEST_CASE("binding a busy port fails") {
  Session session(teleop_config());
  TeleopServer first(session, 0);
  first.start();
  TeleopServer second(session, first.port());
  CHECK_THROWS_AS(second.start(), std::runtime_error);
  first.stop();
}
