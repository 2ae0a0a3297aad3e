// JSON scenario files.

#include <cmath>
#include <limits>
#include <type_traits>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vfcbf/experiments.hpp"

namespace vfcbf {

using nlohmann::json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Tracks which keys of an object were consumed so unknown keys can be
// reported instead of silently ignored.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json& child(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string path(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Vec3 vec3_of(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Rgb rgb_of(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected [r, g, b]");
  return {j[0].get<float>(), j[1].get<float>(), j[2].get<float>()};
}

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
json to_json(const Rgb& c) { return json::array({c[0], c[1], c[2]}); }

Primitive primitive_of(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  std::string type;
  r.get("type", type);
  Primitive prim;
  auto vec = [&](const char* key, Vec3& out) {
    if (r.has(key)) out = vec3_of(r.child(key), r.path(key));
  };
  auto col = [&](Rgb& out) {
    if (r.has("color")) out = rgb_of(r.child("color"), r.path("color"));
  };
  if (type == "room") {
    RoomShell s;
    vec("center", s.center);
    vec("half_extents", s.half_extents);
    col(s.color);
    prim = s;
  } else if (type == "box") {
    BoxPrimitive b;
    vec("center", b.center);
    vec("half_extents", b.half_extents);
    col(b.color);
    prim = b;
  } else if (type == "sphere") {
    SpherePrimitive s;
    vec("center", s.center);
    r.get("radius", s.radius);
    col(s.color);
    prim = s;
  } else {
    throw ConfigError(where + ".type: expected room, box or sphere, got '" + type + "'");
  }
  r.finish();
  return prim;
}

json primitive_json(const Primitive& prim) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, RoomShell>) {
          return {{"type", "room"}, {"center", to_json(p.center)}, {"half_extents", to_json(p.half_extents)},
                  {"color", to_json(p.color)}};
        } else if constexpr (std::is_same_v<T, BoxPrimitive>) {
          return {{"type", "box"}, {"center", to_json(p.center)}, {"half_extents", to_json(p.half_extents)},
                  {"color", to_json(p.color)}};
        } else {
          return {{"type", "sphere"}, {"center", to_json(p.center)}, {"radius", p.radius}, {"color", to_json(p.color)}};
        }
      },
      prim);
}

DynamicsMode dynamics_of(const std::string& s) {
  if (s == "single_integrator") return DynamicsMode::single_integrator;
  if (s == "double_integrator") return DynamicsMode::double_integrator;
  throw ConfigError("dynamics: expected single_integrator or double_integrator, got '" + s + "'");
}

const char* dynamics_name(DynamicsMode m) {
  return m == DynamicsMode::single_integrator ? "single_integrator" : "double_integrator";
}

CbfKind kind_of(const std::string& s) {
  if (s == "depth_first_order") return CbfKind::depth_first_order;
  if (s == "depth_second_order") return CbfKind::depth_second_order;
  if (s == "density") return CbfKind::density;
  throw ConfigError("cbf.kind: expected depth_first_order, depth_second_order or density, got '" + s + "'");
}

const char* kind_name(CbfKind k) {
  switch (k) {
    case CbfKind::depth_first_order: return "depth_first_order";
    case CbfKind::depth_second_order: return "depth_second_order";
    case CbfKind::density: return "density";
  }
  return "";
}

ControlInput control_of(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  ControlInput u;
  std::vector<double> planar{0.0, 0.0};
  r.get("u", planar);
  if (planar.size() != 2) throw ConfigError(where + ".u: expected [x, y]");
  u.planar = Vec2(planar[0], planar[1]);
  r.get("yaw_rate", u.yaw_rate);
  r.finish();
  return u;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  ScenarioConfig cfg;
  ObjectReader r(root, "scenario");
  r.get("name", cfg.name);

  if (r.has("scene")) {
    ObjectReader s(r.child("scene"), "scene");
    if (s.has("background")) cfg.background = rgb_of(s.child("background"), "scene.background");
    if (s.has("primitives")) {
      const auto& list = s.child("primitives");
      if (!list.is_array()) throw ConfigError("scene.primitives: expected an array");
      cfg.scene.clear();
      for (std::size_t k = 0; k < list.size(); ++k) {
        cfg.scene.push_back(primitive_of(list[k], "scene.primitives[" + std::to_string(k) + "]"));
      }
    }
    s.finish();
  }
  if (r.has("camera")) {
    ObjectReader c(r.child("camera"), "camera");
    c.get("width", cfg.camera.width);
    c.get("height", cfg.camera.height);
    double fov_deg = cfg.camera.fov / kDeg;
    c.get("fov_deg", fov_deg);
    cfg.camera.fov = fov_deg * kDeg;
    c.get("max_range", cfg.camera.max_range);
    c.get("height_m", cfg.camera_height);
    c.finish();
  }
  if (r.has("dynamics")) {
    std::string d;
    r.get("dynamics", d);
    cfg.dynamics = dynamics_of(d);
  }
  if (r.has("start")) {
    ObjectReader s(r.child("start"), "start");
    if (s.has("distance_to_wall")) {
      double d = 0.0;
      s.get("distance_to_wall", d);
      cfg.distance_to_wall = d;
    }
    if (s.has("x")) {
      s.get("x", cfg.start_xy.x());
      if (!s.has("distance_to_wall")) cfg.distance_to_wall.reset();
    }
    s.get("y", cfg.start_xy.y());
    double yaw_deg = cfg.start_yaw / kDeg;
    s.get("yaw_deg", yaw_deg);
    cfg.start_yaw = yaw_deg * kDeg;
    s.finish();
  }
  if (r.has("nominal")) {
    ObjectReader n(r.child("nominal"), "nominal");
    std::string type = "constant_toward_wall";
    n.get("type", type);
    if (type == "constant_toward_wall") {
      cfg.nominal.kind = NominalPolicy::Kind::constant_toward_wall;
    } else if (type == "scripted") {
      cfg.nominal.kind = NominalPolicy::Kind::scripted;
    } else if (type == "zero") {
      cfg.nominal.kind = NominalPolicy::Kind::zero;
    } else {
      throw ConfigError("nominal.type: expected constant_toward_wall, scripted or zero, got '" + type + "'");
    }
    n.get("magnitude", cfg.nominal.magnitude);
    if (n.has("sequence")) {
      const auto& seq = n.child("sequence");
      if (!seq.is_array()) throw ConfigError("nominal.sequence: expected an array");
      for (std::size_t k = 0; k < seq.size(); ++k) {
        const std::string where = "nominal.sequence[" + std::to_string(k) + "]";
        if (!seq[k].is_object() || !seq[k].contains("t")) throw ConfigError(where + ": expected {t, u, yaw_rate}");
        json rest = seq[k];
        NominalPolicy::Segment segment;
        segment.t_start = rest.at("t").get<double>();
        rest.erase("t");
        segment.u = control_of(rest, where);
        cfg.nominal.sequence.push_back(segment);
      }
    }
    n.finish();
  }
  if (r.has("cbf")) {
    ObjectReader c(r.child("cbf"), "cbf");
    if (c.has("kind")) {
      std::string k;
      c.get("kind", k);
      cfg.cbf.kind = kind_of(k);
    }
    c.get("d_c", cfg.cbf.d_c);
    c.get("alpha", cfg.cbf.alpha);
    c.get("beta", cfg.cbf.beta);
    c.get("percentile", cfg.cbf.percentile);
    c.finish();
  }
  if (r.has("sampler")) {
    ObjectReader s(r.child("sampler"), "sampler");
    s.get("batch_size", cfg.sampler.batch_size);
    s.get("max_batches", cfg.sampler.max_batches);
    if (s.has("sigma_u")) {
      const auto& sig = s.child("sigma_u");
      if (sig.is_number()) {
        cfg.sampler.sigma_u.fill(sig.get<double>());
      } else {
        const Vec3 v = vec3_of(sig, "sampler.sigma_u");
        cfg.sampler.sigma_u = {v.x(), v.y(), v.z()};
      }
    }
    if (s.has("fallback")) {
      std::string f;
      s.get("fallback", f);
      if (f == "zero_action") {
        cfg.sampler.fallback = FallbackPolicy::zero_action;
      } else if (f == "max_brake") {
        cfg.sampler.fallback = FallbackPolicy::max_brake;
      } else {
        throw ConfigError("sampler.fallback: expected zero_action or max_brake, got '" + f + "'");
      }
    }
    s.finish();
  }
  if (r.has("limits")) {
    ObjectReader l(r.child("limits"), "limits");
    l.get("max_planar", cfg.limits.max_planar);
    l.get("max_yaw_rate", cfg.limits.max_yaw_rate);
    l.finish();
  }
  if (r.has("render")) {
    ObjectReader p(r.child("render"), "render");
    p.get("samples_per_ray", cfg.render.samples_per_ray);
    p.get("t_near", cfg.render.t_near);
    p.get("t_far", cfg.render.t_far);
    p.get("unseen_is_unsafe", cfg.render.unseen_is_unsafe);
    p.get("transmittance_cutoff", cfg.render.transmittance_cutoff);
    p.get("min_spacing_voxels", cfg.render.min_spacing_voxels);
    p.finish();
  }
  if (r.has("grid")) {
    ObjectReader g(r.child("grid"), "grid");
    g.get("resolution", cfg.grid.resolution);
    g.get("padding", cfg.grid.padding);
    g.get("sigma_max", cfg.grid.sigma_max);
    g.get("fusion_rate", cfg.grid.fusion_rate);
    g.get("carve_diagonals", cfg.grid.carve_diagonals);
    g.get("deposit_diagonals", cfg.grid.deposit_diagonals);
    g.get("deposit_behind_diagonals", cfg.grid.deposit_behind_diagonals);
    g.finish();
  }
  r.get("tick_rate", cfg.tick_rate);
  r.get("duration", cfg.duration);
  r.get("repetitions", cfg.repetitions);
  r.get("rng_seed", cfg.rng_seed);
  r.get("pre_explore", cfg.pre_explore);
  r.get("filter_enabled", cfg.filter_enabled);
  r.get("robot_radius", cfg.robot_radius);
  r.get("depth_noise", cfg.depth_noise);
  r.get("pose_noise", cfg.pose_noise);
  r.finish();
  cfg.validate();
  return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scenario(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string scenario_to_json(const ScenarioConfig& cfg) {
  json prims = json::array();
  for (const auto& p : cfg.scene) prims.push_back(primitive_json(p));
  json start = {{"y", cfg.start_xy.y()}, {"yaw_deg", cfg.start_yaw / kDeg}};
  if (cfg.distance_to_wall) {
    start["distance_to_wall"] = *cfg.distance_to_wall;
  } else {
    start["x"] = cfg.start_xy.x();
  }
  json nominal;
  switch (cfg.nominal.kind) {
    case NominalPolicy::Kind::constant_toward_wall: nominal["type"] = "constant_toward_wall"; break;
    case NominalPolicy::Kind::scripted: nominal["type"] = "scripted"; break;
    case NominalPolicy::Kind::zero: nominal["type"] = "zero"; break;
  }
  nominal["magnitude"] = cfg.nominal.magnitude;
  if (!cfg.nominal.sequence.empty()) {
    json seq = json::array();
    for (const auto& s : cfg.nominal.sequence) {
      seq.push_back({{"t", s.t_start}, {"u", {s.u.planar.x(), s.u.planar.y()}}, {"yaw_rate", s.u.yaw_rate}});
    }
    nominal["sequence"] = seq;
  }
  json j = {
      {"name", cfg.name},
      {"scene", {{"background", to_json(cfg.background)}, {"primitives", prims}}},
      {"camera",
       {{"width", cfg.camera.width},
        {"height", cfg.camera.height},
        {"fov_deg", cfg.camera.fov / kDeg},
        {"max_range", cfg.camera.max_range},
        {"height_m", cfg.camera_height}}},
      {"dynamics", dynamics_name(cfg.dynamics)},
      {"start", start},
      {"nominal", nominal},
      {"cbf",
       {{"kind", kind_name(cfg.cbf.kind)},
        {"d_c", cfg.cbf.d_c},
        {"alpha", cfg.cbf.alpha},
        {"beta", cfg.cbf.beta},
        {"percentile", cfg.cbf.percentile}}},
      {"sampler",
       {{"batch_size", cfg.sampler.batch_size},
        {"max_batches", cfg.sampler.max_batches},
        {"sigma_u", cfg.sampler.sigma_u},
        {"fallback", cfg.sampler.fallback == FallbackPolicy::zero_action ? "zero_action" : "max_brake"}}},
      {"limits", {{"max_planar", cfg.limits.max_planar}, {"max_yaw_rate", cfg.limits.max_yaw_rate}}},
      {"render",
       {{"samples_per_ray", cfg.render.samples_per_ray},
        {"t_near", cfg.render.t_near},
        {"t_far", cfg.render.t_far},
        {"unseen_is_unsafe", cfg.render.unseen_is_unsafe},
        {"transmittance_cutoff", cfg.render.transmittance_cutoff},
        {"min_spacing_voxels", cfg.render.min_spacing_voxels}}},
      {"grid",
       {{"resolution", cfg.grid.resolution},
        {"padding", cfg.grid.padding},
        {"sigma_max", cfg.grid.sigma_max},
        {"fusion_rate", cfg.grid.fusion_rate},
        {"carve_diagonals", cfg.grid.carve_diagonals},
        {"deposit_diagonals", cfg.grid.deposit_diagonals},
        {"deposit_behind_diagonals", cfg.grid.deposit_behind_diagonals}}},
      {"tick_rate", cfg.tick_rate},
      {"duration", cfg.duration},
      {"repetitions", cfg.repetitions},
      {"rng_seed", cfg.rng_seed},
      {"pre_explore", cfg.pre_explore},
      {"filter_enabled", cfg.filter_enabled},
      {"robot_radius", cfg.robot_radius},
      {"depth_noise", cfg.depth_noise},
      {"pose_noise", cfg.pose_noise},
  };
  return j.dump(2);
}

namespace {

// Calls fn with a reference to the scalar field named by key.
template <class Cfg, class Fn>
void with_scalar(Cfg& cfg, const std::string& key, Fn&& fn) {
  if (key == "cbf.d_c" || key == "d_c" || key == "dc") return fn(cfg.cbf.d_c);
  if (key == "cbf.alpha" || key == "alpha") return fn(cfg.cbf.alpha);
  if (key == "cbf.beta" || key == "beta") return fn(cfg.cbf.beta);
  if (key == "cbf.percentile") return fn(cfg.cbf.percentile);
  if (key == "rng_seed" || key == "seed") return fn(cfg.rng_seed);
  if (key == "duration") return fn(cfg.duration);
  if (key == "tick_rate") return fn(cfg.tick_rate);
  if (key == "repetitions") return fn(cfg.repetitions);
  if (key == "pre_explore") return fn(cfg.pre_explore);
  if (key == "start.distance_to_wall") return fn(cfg.distance_to_wall);
  if (key == "nominal.magnitude") return fn(cfg.nominal.magnitude);
  if (key == "sampler.batch_size") return fn(cfg.sampler.batch_size);
  if (key == "sampler.max_batches") return fn(cfg.sampler.max_batches);
  if (key == "camera.width") return fn(cfg.camera.width);
  if (key == "camera.height") return fn(cfg.camera.height);
  if (key == "filter_enabled") return fn(cfg.filter_enabled);
  if (key == "depth_noise") return fn(cfg.depth_noise);
  if (key == "pose_noise") return fn(cfg.pose_noise);
  throw ConfigError("unknown or non-scalar key '" + key + "'");
}

}  // namespace

void set_scenario_value(ScenarioConfig& cfg, const std::string& key, double value) {
  if (!std::isfinite(value)) throw ConfigError("value for '" + key + "' must be finite");
  ScenarioConfig next = cfg;
  with_scalar(next, key, [&](auto& field) {
    using T = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<T, bool>) {
      field = value != 0.0;
    } else if constexpr (std::is_integral_v<T>) {
      if (value != std::floor(value) || (std::is_unsigned_v<T> && value < 0)) {
        throw ConfigError("'" + key + "' must be " + (std::is_unsigned_v<T> ? "a non-negative " : "an ") + "integer");
      }
      field = static_cast<T>(value);
    } else {
      field = value;
    }
  });
  next.validate();
  cfg = std::move(next);
}

double get_scenario_value(const ScenarioConfig& cfg, const std::string& key) {
  double out = 0.0;
  with_scalar(cfg, key, [&](const auto& field) {
    using T = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<T, std::optional<double>>) {
      out = field ? *field : std::numeric_limits<double>::quiet_NaN();
    } else {
      out = static_cast<double>(field);
    }
  });
  return out;
}

}  // namespace vfcbf
