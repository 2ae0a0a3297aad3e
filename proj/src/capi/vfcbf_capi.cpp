#include "vfcbf/vfcbf.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "vfcbf/experiments.hpp"
#include "vfcbf/teleop_service.hpp"
#include "vfcbf/worker_pool.hpp"

struct vfcbf_config {
  vfcbf::ScenarioConfig cfg;
};

struct vfcbf_run {
  vfcbf::RunResult result;
};

struct vfcbf_sweep {
  vfcbf::SweepResult result;
  std::vector<vfcbf::SweepSummary> summary;
};

struct vfcbf_ablation {
  vfcbf::AblationReport report;
};

struct vfcbf_server {
  std::unique_ptr<vfcbf::Session> session;
  std::unique_ptr<vfcbf::TeleopServer> server;
};

namespace {

thread_local std::string g_last_error;

class Failure {
 public:
  Failure(vfcbf_status s, std::string m) : status(s), message(std::move(m)) {}
  vfcbf_status status;
  std::string message;
};

vfcbf_status fail(vfcbf_status s, std::string message) {
  g_last_error = std::move(message);
  return s;
}

// Runs body and maps exceptions onto status codes.
template <class Body>
vfcbf_status guarded(Body&& body) {
  try {
    body();
    return VFCBF_OK;
  } catch (const Failure& f) {
    return fail(f.status, f.message);
  } catch (const vfcbf::ConfigError& e) {
    return fail(VFCBF_ERR_CONFIG, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(VFCBF_ERR_IO, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(VFCBF_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::exception& e) {
    return fail(VFCBF_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(VFCBF_ERR_INTERNAL, "unknown error");
  }
}

template <class T>
void require(const T* p, const char* what) {
  if (p == nullptr) throw Failure(VFCBF_ERR_INVALID_ARGUMENT, std::string(what) + " is null");
}

void require_index(std::size_t index, std::size_t size) {
  if (index >= size) {
    throw Failure(VFCBF_ERR_INVALID_ARGUMENT,
                  "index " + std::to_string(index) + " out of range (size " + std::to_string(size) + ")");
  }
}

// CSV writers signal I/O trouble with runtime_error naming the path.
template <class Fn>
void io(Fn&& fn) {
  try {
    fn();
  } catch (const std::runtime_error& e) {
    throw Failure(VFCBF_ERR_IO, e.what());
  }
}

vfcbf::WorkerPool* pool() { return &vfcbf::WorkerPool::shared(); }

}  // namespace

extern "C" {

const char* vfcbf_version(void) { return "0.1.0"; }

const char* vfcbf_last_error(void) { return g_last_error.c_str(); }

const char* vfcbf_status_name(vfcbf_status status) {
  switch (status) {
    case VFCBF_OK: return "ok";
    case VFCBF_ERR_INVALID_ARGUMENT: return "invalid argument";
    case VFCBF_ERR_CONFIG: return "config error";
    case VFCBF_ERR_IO: return "i/o error";
    case VFCBF_ERR_NETWORK: return "network error";
    case VFCBF_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

vfcbf_status vfcbf_config_default(vfcbf_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new vfcbf_config{};
  });
}

vfcbf_status vfcbf_config_load(const char* path, vfcbf_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    if (!std::filesystem::exists(path)) throw Failure(VFCBF_ERR_IO, std::string("cannot open config ") + path);
    *out = new vfcbf_config{vfcbf::load_scenario(path)};
  });
}

vfcbf_status vfcbf_config_parse(const char* json_text, vfcbf_config** out) {
  return guarded([&] {
    require(json_text, "json_text");
    require(out, "out");
    *out = new vfcbf_config{vfcbf::parse_scenario(json_text)};
  });
}

vfcbf_status vfcbf_config_set_number(vfcbf_config* cfg, const char* key, double value) {
  return guarded([&] {
    require(cfg, "config");
    require(key, "key");
    vfcbf::set_scenario_value(cfg->cfg, key, value);
  });
}

vfcbf_status vfcbf_config_get_number(const vfcbf_config* cfg, const char* key, double* value) {
  return guarded([&] {
    require(cfg, "config");
    require(key, "key");
    require(value, "value");
    *value = vfcbf::get_scenario_value(cfg->cfg, key);
  });
}

vfcbf_status vfcbf_config_uses_depth_barrier(const vfcbf_config* cfg, int* out) {
  return guarded([&] {
    require(cfg, "config");
    require(out, "out");
    *out = cfg->cfg.cbf.kind != vfcbf::CbfKind::density;
  });
}

vfcbf_status vfcbf_config_to_json(const vfcbf_config* cfg, char** out) {
  return guarded([&] {
    require(cfg, "config");
    require(out, "out");
    const std::string text = vfcbf::scenario_to_json(cfg->cfg);
    char* buf = static_cast<char*>(std::malloc(text.size() + 1));
    if (buf == nullptr) throw std::bad_alloc();
    std::memcpy(buf, text.c_str(), text.size() + 1);
    *out = buf;
  });
}

void vfcbf_config_free(vfcbf_config* cfg) { delete cfg; }

void vfcbf_string_free(char* s) { std::free(s); }

vfcbf_status vfcbf_run_scenario(const vfcbf_config* cfg, int64_t seed, vfcbf_run** out) {
  return guarded([&] {
    require(cfg, "config");
    require(out, "out");
    std::optional<std::uint64_t> s;
    if (seed >= 0) s = static_cast<std::uint64_t>(seed);
    auto run = std::make_unique<vfcbf_run>();
    run->result = vfcbf::run_scenario(cfg->cfg, s, pool());
    *out = run.release();
  });
}

vfcbf_status vfcbf_run_record_count(const vfcbf_run* run, size_t* count) {
  return guarded([&] {
    require(run, "run");
    require(count, "count");
    *count = run->result.records.size();
  });
}

vfcbf_status vfcbf_run_record(const vfcbf_run* run, size_t index, vfcbf_step_record* out) {
  return guarded([&] {
    require(run, "run");
    require(out, "out");
    require_index(index, run->result.records.size());
    const auto& r = run->result.records[index];
    *out = vfcbf_step_record{r.t,     r.h_now,       r.h_next,      r.delta_u,  r.d_min_true, r.d_min_rendered,
                             r.speed, r.collided ? 1 : 0, r.filter_ms, r.candidates};
  });
}

vfcbf_status vfcbf_run_collided(const vfcbf_run* run, int* collided) {
  return guarded([&] {
    require(run, "run");
    require(collided, "collided");
    *collided = run->result.collided ? 1 : 0;
  });
}

vfcbf_status vfcbf_run_fallback_ticks(const vfcbf_run* run, int* ticks) {
  return guarded([&] {
    require(run, "run");
    require(ticks, "ticks");
    *ticks = run->result.fallback_ticks;
  });
}

vfcbf_status vfcbf_run_export_csv(const vfcbf_run* run, const char* path) {
  return guarded([&] {
    require(run, "run");
    require(path, "path");
    io([&] { vfcbf::export_csv(run->result.records, path); });
  });
}

void vfcbf_run_free(vfcbf_run* run) { delete run; }

vfcbf_status vfcbf_sweep_run(const vfcbf_config* cfg, const char* param, const double* values, size_t count,
                             vfcbf_sweep** out) {
  return guarded([&] {
    require(cfg, "config");
    require(param, "param");
    require(out, "out");
    if (count == 0) throw Failure(VFCBF_ERR_INVALID_ARGUMENT, "sweep needs at least one value");
    require(values, "values");
    auto sweep = std::make_unique<vfcbf_sweep>();
    sweep->result = vfcbf::run_sweep(cfg->cfg, param, std::vector<double>(values, values + count), pool());
    sweep->summary = sweep->result.summarize();
    *out = sweep.release();
  });
}

vfcbf_status vfcbf_sweep_summary_count(const vfcbf_sweep* sweep, size_t* count) {
  return guarded([&] {
    require(sweep, "sweep");
    require(count, "count");
    *count = sweep->summary.size();
  });
}

vfcbf_status vfcbf_sweep_summary_at(const vfcbf_sweep* sweep, size_t index, vfcbf_sweep_summary* out) {
  return guarded([&] {
    require(sweep, "sweep");
    require(out, "out");
    require_index(index, sweep->summary.size());
    const auto& s = sweep->summary[index];
    *out = vfcbf_sweep_summary{s.value,       s.mean_du,     s.max_du,          s.min_dist_mean,
                               s.min_dist_lo, s.min_dist_hi, s.final_dist_mean, s.collisions};
  });
}

vfcbf_status vfcbf_sweep_export_csv(const vfcbf_sweep* sweep, const char* path) {
  return guarded([&] {
    require(sweep, "sweep");
    require(path, "path");
    io([&] { vfcbf::export_sweep_csv(sweep->result, path); });
  });
}

void vfcbf_sweep_free(vfcbf_sweep* sweep) { delete sweep; }

vfcbf_status vfcbf_ablation_run(const vfcbf_config* cfg, const double* d_c_values, size_t count,
                                const char* out_dir, vfcbf_ablation** out) {
  return guarded([&] {
    require(cfg, "config");
    require(out, "out");
    if (count == 0) throw Failure(VFCBF_ERR_INVALID_ARGUMENT, "ablation needs at least one threshold");
    require(d_c_values, "d_c_values");
    std::optional<std::filesystem::path> dir;
    if (out_dir != nullptr) dir = out_dir;
    auto ab = std::make_unique<vfcbf_ablation>();
    io([&] {
      ab->report = vfcbf::run_density_ablation(cfg->cfg, std::vector<double>(d_c_values, d_c_values + count), dir,
                                               pool());
    });
    *out = ab.release();
  });
}

vfcbf_status vfcbf_ablation_count(const vfcbf_ablation* ablation, size_t* count) {
  return guarded([&] {
    require(ablation, "ablation");
    require(count, "count");
    *count = ablation->report.runs.size();
  });
}

vfcbf_status vfcbf_ablation_entry_at(const vfcbf_ablation* ablation, size_t index, vfcbf_ablation_entry* out) {
  return guarded([&] {
    require(ablation, "ablation");
    require(out, "out");
    require_index(index, ablation->report.runs.size());
    const auto& r = ablation->report.runs[index];
    *out = vfcbf_ablation_entry{r.d_c,
                                static_cast<int>(r.run.records.size()),
                                r.interventions,
                                r.fallbacks,
                                r.run.collided ? 1 : 0,
                                r.h_always_negative ? 1 : 0,
                                r.collided_with_negative_h ? 1 : 0};
  });
}

void vfcbf_ablation_free(vfcbf_ablation* ablation) { delete ablation; }

vfcbf_status vfcbf_bench(const vfcbf_config* cfg, int samples, vfcbf_timing* out) {
  return guarded([&] {
    require(cfg, "config");
    require(out, "out");
    if (samples < 1) throw Failure(VFCBF_ERR_INVALID_ARGUMENT, "samples must be >= 1");
    const auto t = vfcbf::measure_runtime(cfg->cfg, samples, pool());
    *out = vfcbf_timing{t.safe_median_ms,         t.safe_p95_ms,
                        t.batch_median_ms,        t.batch_p95_ms,
                        t.safe_predict_calls_max, t.batch_predict_calls_max,
                        t.batch_size,             t.max_batches,
                        t.samples};
  });
}

vfcbf_status vfcbf_server_start(const vfcbf_config* cfg, uint16_t port, const char* address, vfcbf_server** out) {
  return guarded([&] {
    require(cfg, "config");
    require(out, "out");
    auto s = std::make_unique<vfcbf_server>();
    s->session = std::make_unique<vfcbf::Session>(cfg->cfg, pool());
    s->server = std::make_unique<vfcbf::TeleopServer>(*s->session, port, address ? address : "127.0.0.1");
    try {
      s->server->start();
    } catch (const std::runtime_error& e) {
      throw Failure(VFCBF_ERR_NETWORK, e.what());
    }
    s->session->start();
    *out = s.release();
  });
}

vfcbf_status vfcbf_server_port(const vfcbf_server* server, uint16_t* port) {
  return guarded([&] {
    require(server, "server");
    require(port, "port");
    *port = server->server->port();
  });
}

vfcbf_status vfcbf_server_wait(vfcbf_server* server) {
  return guarded([&] {
    require(server, "server");
    server->server->wait();
  });
}

vfcbf_status vfcbf_server_stop(vfcbf_server* server) {
  return guarded([&] {
    require(server, "server");
    server->server->stop();
    server->session->stop();
  });
}

void vfcbf_server_free(vfcbf_server* server) {
  if (server == nullptr) return;
  server->server.reset();
  server->session.reset();
  delete server;
}

}  // extern "C"
