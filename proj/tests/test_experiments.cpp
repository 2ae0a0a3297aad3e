#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vfcbf/experiments.hpp"
#include "vfcbf/worker_pool.hpp"

using namespace vfcbf;

namespace {

ScenarioConfig short_run(double duration) {
  ScenarioConfig cfg;
  cfg.duration = duration;
  cfg.repetitions = 1;
  return cfg;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("vfcbf_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("empty JSON yields the default scenario") {
  CHECK(scenario_to_json(parse_scenario("{}")) == scenario_to_json(ScenarioConfig{}));
}

TEST_CASE("scenario JSON round-trips") {
  ScenarioConfig cfg;
  cfg.name = "rt";
  cfg.dynamics = DynamicsMode::double_integrator;
  cfg.cbf.kind = CbfKind::depth_second_order;
  cfg.cbf.beta = 0.7;
  cfg.sampler.fallback = FallbackPolicy::max_brake;
  cfg.sampler.sigma_u = {0.5, 0.25, 0.1};
  cfg.nominal.kind = NominalPolicy::Kind::scripted;
  cfg.nominal.sequence = {{0.0, {Vec2(1.0, 0.0), 0.0}}, {1.5, {Vec2(0.0, -0.5), 0.2}}};
  cfg.distance_to_wall.reset();
  cfg.start_xy = Vec2(-1.0, 0.5);
  cfg.start_yaw = 0.3;
  cfg.scene.push_back(SpherePrimitive{Vec3(1.0, 1.0, 0.5), 0.3, {0.2f, 0.4f, 0.6f}});
  cfg.render.min_spacing_voxels = 0.5;
  cfg.grid.resolution = {32, 48, 20};
  cfg.rng_seed = 99;
  const std::string once = scenario_to_json(cfg);
  const ScenarioConfig back = parse_scenario(once);
  CHECK(scenario_to_json(back) == once);
  CHECK(back.nominal.sequence.size() == 2);
  CHECK(back.nominal.command_at(2.0).planar.y() == -0.5);
  CHECK_FALSE(back.distance_to_wall.has_value());
}

TEST_CASE("bad scenario files are rejected with the offending key") {
  CHECK_THROWS_AS(parse_scenario("{\"tick_rat\": 10}"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_scenario("{\"cbf\": {\"dc\": 0.1}}"), doctest::Contains("dc"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("{\"tick_rate\": 0}"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("{\"duration\": -1}"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("{\"repetitions\": 0}"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("{\"cbf\": {\"kind\": \"bogus\"}}"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("{\"cbf\": {\"alpha\": \"half\"}}"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("{\"dynamics\": \"double_integrator\"}"), ConfigError);
  CHECK_THROWS_AS(parse_scenario("{not json"), ConfigError);
  CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.json"), ConfigError);
}

TEST_CASE("shipped scenario files load") {
  for (const char* name : {"single_integrator.json", "double_integrator.json", "density_ablation.json", "teleop.json"}) {
    CAPTURE(name);
    CHECK_NOTHROW(load_scenario(std::filesystem::path(VFCBF_CONFIG_DIR) / name));
  }
}

TEST_CASE("scalar overrides by dotted key") {
  ScenarioConfig cfg;
  set_scenario_value(cfg, "cbf.d_c", 0.5);
  CHECK(cfg.cbf.d_c == 0.5);
  CHECK(get_scenario_value(cfg, "dc") == 0.5);
  set_scenario_value(cfg, "alpha", 0.25);
  CHECK(cfg.cbf.alpha == 0.25);
  set_scenario_value(cfg, "seed", 17);
  CHECK(cfg.rng_seed == 17);
  set_scenario_value(cfg, "start.distance_to_wall", 1.5);
  CHECK(*cfg.distance_to_wall == 1.5);

  const std::string before = scenario_to_json(cfg);
  CHECK_THROWS_AS(set_scenario_value(cfg, "repetitions", 2.5), ConfigError);
  CHECK_THROWS_AS(set_scenario_value(cfg, "rng_seed", -1), ConfigError);
  CHECK_THROWS_AS(set_scenario_value(cfg, "tick_rate", 0.0), ConfigError);
  CHECK_THROWS_AS(set_scenario_value(cfg, "cbf.alpha", 1.0), ConfigError);
  CHECK_THROWS_AS(set_scenario_value(cfg, "grid", 1.0), ConfigError);
  CHECK(scenario_to_json(cfg) == before);

  cfg.distance_to_wall.reset();
  CHECK(std::isnan(get_scenario_value(cfg, "start.distance_to_wall")));
  CHECK_THROWS_AS(get_scenario_value(cfg, "nope"), ConfigError);
}

TEST_CASE("CSV headers are exact") {
  CHECK(std::string(kRecordCsvHeader) ==
        "t,h_now,h_next,delta_u,d_min_true,d_min_rendered,speed,collided,filter_ms,candidates");
  CHECK(std::string(kSweepCsvHeader) == "param,value,rep,mean_du,max_du,min_dist");
}

TEST_CASE("empty record list exports a header-only file") {
  const auto dir = scratch_dir("empty_csv");
  export_csv({}, dir / "run.csv");
  CHECK(slurp(dir / "run.csv") == std::string(kRecordCsvHeader) + "\n");
  CHECK(load_records_csv(dir / "run.csv").empty());
}

TEST_CASE("export errors name the path") {
  CHECK_THROWS_WITH(export_csv({}, "/nonexistent/dir/run.csv"), doctest::Contains("/nonexistent/dir/run.csv"));
  CHECK_THROWS_AS(parse_records_csv("t,h\n"), std::runtime_error);
}

TEST_CASE("run records: timeline, CSV round trip and determinism") {
  const ScenarioConfig cfg = short_run(3.0);
  const RunResult a = run_scenario(cfg);
  REQUIRE(a.records.size() == 30);
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    CHECK(a.records[k].t == doctest::Approx(k * cfg.dt()).epsilon(1e-12));
  }
  CHECK_FALSE(a.collided);

  const auto dir = scratch_dir("roundtrip");
  export_csv(a.records, dir / "run.csv");
  const auto back = load_records_csv(dir / "run.csv");
  REQUIRE(back.size() == a.records.size());
  for (std::size_t k = 0; k < back.size(); ++k) {
    const auto& x = a.records[k];
    const auto& y = back[k];
    CHECK(x.t == y.t);
    CHECK(x.h_now == y.h_now);
    CHECK((x.h_next == y.h_next || (std::isnan(x.h_next) && std::isnan(y.h_next))));
    CHECK(x.delta_u == y.delta_u);
    CHECK(x.d_min_true == y.d_min_true);
    CHECK(x.d_min_rendered == y.d_min_rendered);
    CHECK(x.speed == y.speed);
    CHECK(x.collided == y.collided);
    CHECK(x.filter_ms == y.filter_ms);
    CHECK(x.candidates == y.candidates);
  }
  CHECK(records_to_csv(back) == slurp(dir / "run.csv"));

  WorkerPool pool(2);
  const RunResult b = run_scenario(cfg, std::nullopt, &pool);
  CHECK(records_to_csv(a.records, false) == records_to_csv(b.records, false));
  const RunResult c = run_scenario(cfg, 2);
  CHECK(records_to_csv(a.records, false) != records_to_csv(c.records, false));
}

TEST_CASE("a stationary nominal never triggers an intervention") {
  ScenarioConfig cfg = short_run(3.0);
  cfg.nominal.kind = NominalPolicy::Kind::zero;
  const RunResult r = run_scenario(cfg);
  REQUIRE(r.records.size() == 30);
  for (const auto& rec : r.records) {
    CHECK(rec.delta_u == 0.0);
    CHECK(rec.speed == 0.0);
  }
}

TEST_CASE("without the filter the robot reaches the wall before 2.6 s") {
  ScenarioConfig cfg = short_run(4.0);
  cfg.filter_enabled = false;
  const RunResult r = run_scenario(cfg);
  CHECK(r.collided);
  REQUIRE_FALSE(r.records.empty());
  CHECK(r.records.back().collided);
  CHECK(r.records.back().t < 2.6);
  for (std::size_t k = 0; k + 1 < r.records.size(); ++k) CHECK_FALSE(r.records[k].collided);
}

TEST_CASE("the nominal passes unchanged whenever it satisfies the constraint") {
  ScenarioConfig cfg = short_run(4.0);
  const RunResult r = run_scenario(cfg, std::nullopt, nullptr, {true, nullptr});
  REQUIRE(r.details.size() == r.records.size());
  int accepted = 0;
  for (std::size_t k = 0; k < r.records.size(); ++k) {
    const auto& dec = r.details[k].decision;
    // The nominal is always evaluated first; it is applied exactly when it
    // satisfied the constraint.
    if (dec.u_applied == dec.u_nominal && !dec.fallback_used) {
      CHECK(r.records[k].delta_u == 0.0);
      ++accepted;
    } else {
      CHECK(r.records[k].delta_u > 0.0);
    }
  }
  CHECK(accepted >= 15);
}

TEST_CASE("single-value sweep matches one aggregated run") {
  ScenarioConfig cfg = short_run(2.0);
  const SweepResult s = run_sweep(cfg, "dc", {0.1});
  REQUIRE(s.rows.size() == 1);
  const SweepRow expect = summarize_run("dc", 0.1, 0, run_scenario(cfg, cfg.rng_seed));
  CHECK(s.rows[0].mean_du == expect.mean_du);
  CHECK(s.rows[0].max_du == expect.max_du);
  CHECK(s.rows[0].min_dist == expect.min_dist);
  CHECK(s.rows[0].final_dist == expect.final_dist);
  const auto summary = s.summarize();
  REQUIRE(summary.size() == 1);
  CHECK(summary[0].min_dist_lo == summary[0].min_dist_hi);
  CHECK(summary[0].mean_du == expect.mean_du);
  CHECK_THROWS_AS(run_sweep(cfg, "beta", {1.0}), ConfigError);
}

TEST_CASE("sweep has one row per value and repetition") {
  ScenarioConfig cfg = short_run(1.0);
  cfg.repetitions = 2;
  const SweepResult s = run_sweep(cfg, "alpha", {0.25, 0.75});
  CHECK(s.rows.size() == 4);
  const auto dir = scratch_dir("sweep");
  export_sweep_csv(s, dir / "sweep.csv");
  std::istringstream lines(slurp(dir / "sweep.csv"));
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) ++n;
  CHECK(n == 5);
}

TEST_CASE("density ablation boundary cases hold exactly") {
  ScenarioConfig cfg = short_run(1.5);
  cfg.cbf.kind = CbfKind::density;
  cfg.cbf.d_c = -30.0;
  const double below = -(cfg.grid.sigma_max + 1.0);
  const auto dir = scratch_dir("ablation");
  const AblationReport rep = run_density_ablation(cfg, {below, 1.0}, dir);
  REQUIRE(rep.runs.size() == 2);

  const auto& never = rep.runs[0];
  CHECK(never.interventions == 0);
  CHECK(never.fallbacks == 0);
  CHECK(never.h_always_negative);
  for (const auto& rec : never.run.records) CHECK(rec.h_now < 0.0);

  const auto& always = rep.runs[1];
  CHECK_FALSE(always.h_always_negative);
  for (const auto& rec : always.run.records) {
    CHECK(rec.h_now > 0.0);
    // Either a sampled action or the zero fallback; both differ from the 1 m/s nominal.
    CHECK(rec.delta_u > 0.0);
  }
  CHECK(always.fallbacks + always.interventions >= static_cast<int>(always.run.records.size()));

  const auto& res = cfg.grid.resolution;
  REQUIRE(never.density_slice.size() == static_cast<std::size_t>(res[1]));
  CHECK(never.density_slice.front().size() == static_cast<std::size_t>(res[0]));
  int files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    (void)e;
    ++files;
  }
  CHECK(files >= 4);
}

TEST_CASE("runtime harness counts renders per path") {
  ScenarioConfig cfg;
  const TimingSummary t = measure_runtime(cfg, 3);
  CHECK(t.samples == 3);
  CHECK(t.safe_predict_calls_max == 1);
  CHECK(t.batch_predict_calls_max >= 1);
  CHECK(t.batch_predict_calls_max <= 1 + t.batch_size);
  CHECK(t.safe_median_ms > 0.0);
  CHECK(t.batch_p95_ms >= t.batch_median_ms);

  cfg.dynamics = DynamicsMode::double_integrator;
  cfg.cbf.kind = CbfKind::depth_second_order;
  cfg.sampler.fallback = FallbackPolicy::max_brake;
  const TimingSummary d = measure_runtime(cfg, 2);
  CHECK(d.safe_predict_calls_max == 1);
  CHECK(d.batch_predict_calls_max <= 1 + d.batch_size);
}

TEST_CASE("simulation refuses to continue after a collision") {
  ScenarioConfig cfg = short_run(4.0);
  cfg.filter_enabled = false;
  Simulation sim(cfg);
  sim.pre_explore();
  while (!sim.collided()) sim.step(cfg.nominal.command_at(sim.time()));
  CHECK_THROWS_AS(sim.step({}), std::logic_error);
}
