// Command-line front end. Talks to the library only through the C interface.

#include <pthread.h>

#include <algorithm>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vfcbf/vfcbf.h"

namespace {

constexpr int kExitCollision = 1;
constexpr int kExitError = 2;

struct CliError {
  std::string message;
};

void check(vfcbf_status s, const std::string& what) {
  if (s != VFCBF_OK) throw CliError{what + ": " + vfcbf_status_name(s) + ": " + vfcbf_last_error()};
}

// RAII wrappers over the opaque handles.
template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
};

using Config = Handle<vfcbf_config, vfcbf_config_free>;
using Run = Handle<vfcbf_run, vfcbf_run_free>;
using Sweep = Handle<vfcbf_sweep, vfcbf_sweep_free>;
using Ablation = Handle<vfcbf_ablation, vfcbf_ablation_free>;
using Server = Handle<vfcbf_server, vfcbf_server_free>;

void load_config(Config& cfg, const std::string& path, const char* fallback_json) {
  if (!path.empty()) {
    check(vfcbf_config_load(path.c_str(), cfg.out()), "loading " + path);
  } else if (fallback_json != nullptr) {
    check(vfcbf_config_parse(fallback_json, cfg.out()), "building default config");
  } else {
    check(vfcbf_config_default(cfg.out()), "building default config");
  }
}

std::string join(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw CliError{"cannot create output directory " + dir + ": " + ec.message()};
}

int cmd_run(const std::string& config_path, long long seed, const std::string& out_dir) {
  Config cfg;
  load_config(cfg, config_path, nullptr);
  Run run;
  check(vfcbf_run_scenario(cfg.p, seed, run.out()), "run");

  size_t n = 0;
  check(vfcbf_run_record_count(run.p, &n), "run");
  double max_du = 0.0, min_d = 0.0;
  vfcbf_step_record last{};
  for (size_t k = 0; k < n; ++k) {
    vfcbf_step_record r;
    check(vfcbf_run_record(run.p, k, &r), "run");
    max_du = std::max(max_du, r.delta_u);
    min_d = k == 0 ? r.d_min_true : std::min(min_d, r.d_min_true);
    last = r;
  }
  int collided = 0, fallbacks = 0, depth = 0;
  check(vfcbf_run_collided(run.p, &collided), "run");
  check(vfcbf_run_fallback_ticks(run.p, &fallbacks), "run");
  check(vfcbf_config_uses_depth_barrier(cfg.p, &depth), "run");

  std::printf("ticks %zu  collided %s  fallback_ticks %d\n", n, collided ? "yes" : "no", fallbacks);
  if (n > 0) {
    std::printf("final d_min %.4f m  min d_min %.4f m  max intervention %.4f\n", last.d_min_true, min_d, max_du);
  }
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    const std::string path = join(out_dir, "run.csv");
    check(vfcbf_run_export_csv(run.p, path.c_str()), "export");
    std::printf("wrote %s\n", path.c_str());
  }
  return collided && depth ? kExitCollision : 0;
}

int cmd_sweep(const std::string& config_path, const std::string& param, const std::vector<double>& values,
              const std::string& out_dir) {
  Config cfg;
  load_config(cfg, config_path, nullptr);
  Sweep sweep;
  check(vfcbf_sweep_run(cfg.p, param.c_str(), values.data(), values.size(), sweep.out()), "sweep");
  size_t n = 0;
  check(vfcbf_sweep_summary_count(sweep.p, &n), "sweep");
  std::printf("%-8s %10s %10s %12s %12s %12s %10s\n", param.c_str(), "mean_du", "max_du", "min_dist", "final_dist",
              "range", "collisions");
  int collisions = 0;
  for (size_t k = 0; k < n; ++k) {
    vfcbf_sweep_summary s;
    check(vfcbf_sweep_summary_at(sweep.p, k, &s), "sweep");
    std::printf("%-8g %10.4f %10.4f %12.4f %12.4f [%.3f,%.3f] %6d\n", s.value, s.mean_du, s.max_du, s.min_dist_mean,
                s.final_dist_mean, s.min_dist_lo, s.min_dist_hi, s.collisions);
    collisions += s.collisions;
  }
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    const std::string path = join(out_dir, "sweep_" + param + ".csv");
    check(vfcbf_sweep_export_csv(sweep.p, path.c_str()), "export");
    std::printf("wrote %s\n", path.c_str());
  }
  int depth = 0;
  check(vfcbf_config_uses_depth_barrier(cfg.p, &depth), "sweep");
  return collisions > 0 && depth ? kExitCollision : 0;
}

int cmd_ablation(const std::string& config_path, const std::vector<double>& values, const std::string& out_dir) {
  Config cfg;
  load_config(cfg, config_path, R"({"cbf": {"kind": "density", "d_c": -30}})");
  ensure_dir(out_dir);
  Ablation ab;
  check(vfcbf_ablation_run(cfg.p, values.data(), values.size(), out_dir.c_str(), ab.out()), "ablation");
  size_t n = 0;
  check(vfcbf_ablation_count(ab.p, &n), "ablation");
  std::printf("%8s %6s %14s %10s %9s %12s\n", "d_c", "ticks", "interventions", "fallbacks", "collided",
              "collided_h<0");
  for (size_t k = 0; k < n; ++k) {
    vfcbf_ablation_entry e;
    check(vfcbf_ablation_entry_at(ab.p, k, &e), "ablation");
    std::printf("%8g %6d %14d %10d %9s %12s\n", e.d_c, e.ticks, e.interventions, e.fallbacks,
                e.collided ? "yes" : "no", e.collided_with_negative_h ? "yes" : "no");
  }
  std::printf("run CSVs and density slices in %s\n", out_dir.c_str());
  return 0;
}

int cmd_bench(const std::string& config_path, int samples) {
  Config cfg;
  load_config(cfg, config_path, nullptr);
  vfcbf_timing t;
  check(vfcbf_bench(cfg.p, samples, &t), "bench");
  std::printf("safe path:          median %.2f ms  p95 %.2f ms  renders %d\n", t.safe_median_ms, t.safe_p95_ms,
              t.safe_predict_calls_max);
  std::printf("batch of %d:        median %.2f ms  p95 %.2f ms  renders %d\n", t.batch_size, t.batch_median_ms,
              t.batch_p95_ms, t.batch_predict_calls_max);
  std::printf("samples %d\n", t.samples);
  return 0;
}

int cmd_serve(const std::string& config_path, int port, const std::string& address) {
  Config cfg;
  load_config(cfg, config_path, nullptr);
  if (port < 0 || port > 65535) throw CliError{"port must lie in [0, 65535]"};

  // Block the stop signals before any library thread exists so only sigwait
  // below sees them.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

  Server server;
  check(vfcbf_server_start(cfg.p, static_cast<uint16_t>(port), address.c_str(), server.out()), "serve");
  uint16_t bound = 0;
  check(vfcbf_server_port(server.p, &bound), "serve");
  std::printf("listening on ws://%s:%u\n", address.c_str(), static_cast<unsigned>(bound));
  std::fflush(stdout);

  int sig = 0;
  sigwait(&stop_signals, &sig);
  std::printf("stopping\n");
  check(vfcbf_server_stop(server.p), "serve");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual-foresight CBF safety filter: scripted runs, sweeps, ablation, benchmark, teleop server"};
  app.require_subcommand(1);
  app.set_version_flag("--version", vfcbf_version());

  std::string config_path, out_dir, param, address = "127.0.0.1";
  long long seed = -1;
  std::vector<double> values;
  int samples = 40, port = 8765;

  auto* run = app.add_subcommand("run", "Run one scripted scenario");
  run->add_option("--config", config_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override rng_seed")->check(CLI::NonNegativeNumber);
  run->add_option("--out", out_dir, "Directory for run.csv");

  auto* sweep = app.add_subcommand("sweep", "Sweep d_c or alpha over several values");
  sweep->add_option("--config", config_path, "Scenario JSON (default scenario when omitted)")
      ->check(CLI::ExistingFile);
  sweep->add_option("--param", param, "Swept parameter")->required()->check(CLI::IsMember({"dc", "alpha"}));
  sweep->add_option("--values", values, "Comma-separated values")->required()->delimiter(',');
  sweep->add_option("--out", out_dir, "Directory for sweep_<param>.csv");

  auto* ablation = app.add_subcommand("ablation", "Density-barrier ablation with a density slice per run");
  ablation->add_option("--config", config_path, "Scenario JSON (density barrier when omitted)")
      ->check(CLI::ExistingFile);
  std::vector<double> thresholds{-20.0, -30.0, -40.0};
  ablation->add_option("--values", thresholds, "Comma-separated d_c values")->delimiter(',')->capture_default_str();
  std::string ablation_out = "ablation_out";
  ablation->add_option("--out", ablation_out, "Output directory")->capture_default_str();

  auto* bench = app.add_subcommand("bench", "Filter-step runtime on the safe and intervention paths");
  bench->add_option("--config", config_path, "Scenario JSON (default scenario when omitted)")
      ->check(CLI::ExistingFile);
  bench->add_option("--samples", samples, "Timed steps per path")->check(CLI::PositiveNumber)->capture_default_str();

  auto* serve = app.add_subcommand("serve", "Teleoperation websocket server");
  serve->add_option("--config", config_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  serve->add_option("--port", port, "TCP port, 0 picks a free one")->capture_default_str();
  serve->add_option("--address", address, "Bind address")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, seed, out_dir);
    if (*sweep) return cmd_sweep(config_path, param, values, out_dir);
    if (*ablation) return cmd_ablation(config_path, thresholds, ablation_out);
    if (*bench) return cmd_bench(config_path, samples);
    if (*serve) return cmd_serve(config_path, port, address);
  } catch (const CliError& e) {
    std::fprintf(stderr, "error: %s\n", e.message.c_str());
    return kExitError;
  }
  return kExitError;
}
