#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string_view>

#include "vfcbf/experiments.hpp"

namespace vfcbf {

const char* const kRecordCsvHeader = "t,h_now,h_next,delta_u,d_min_true,d_min_rendered,speed,collided,filter_ms,candidates";
const char* const kSweepCsvHeader = "param,value,rep,mean_du,max_du,min_dist";

namespace {

// Shortest round-trip representation; "nan" for missing values.
void put(std::string& out, double v) {
  if (std::isnan(v)) {
    out += "nan";
    return;
  }
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, r.ptr);
}

double parse_double(std::string_view s, std::size_t line) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::runtime_error("csv: line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << text;
  f.flush();
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

std::string records_to_csv(const std::vector<StepRecord>& records, bool include_timing) {
  std::string out = kRecordCsvHeader;
  out += '\n';
  for (const auto& r : records) {
    put(out, r.t);
    for (double v : {r.h_now, r.h_next, r.delta_u, r.d_min_true, r.d_min_rendered, r.speed}) {
      out += ',';
      put(out, v);
    }
    out += r.collided ? ",1," : ",0,";
    // Timing is the only nondeterministic column; blanked for comparisons.
    if (include_timing) put(out, r.filter_ms);
    out += ',';
    out += std::to_string(r.candidates);
    out += '\n';
  }
  return out;
}

void export_csv(const std::vector<StepRecord>& records, const std::filesystem::path& path) {
  write_file(path, records_to_csv(records));
}

void export_sweep_csv(const SweepResult& result, const std::filesystem::path& path) {
  std::string out = kSweepCsvHeader;
  out += '\n';
  for (const auto& r : result.rows) {
    out += r.param;
    out += ',';
    put(out, r.value);
    out += ',';
    out += std::to_string(r.rep);
    for (double v : {r.mean_du, r.max_du, r.min_dist}) {
      out += ',';
      put(out, v);
    }
    out += '\n';
  }
  write_file(path, out);
}

std::vector<StepRecord> parse_records_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kRecordCsvHeader) throw std::runtime_error("csv: unexpected header");
  std::vector<StepRecord> out;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (;;) {
      const auto c = rest.find(',');
      f.push_back(rest.substr(0, c));
      if (c == std::string_view::npos) break;
      rest.remove_prefix(c + 1);
    }
    if (f.size() != 10) throw std::runtime_error("csv: line " + std::to_string(n) + ": expected 10 fields");
    StepRecord r;
    r.t = parse_double(f[0], n);
    r.h_now = parse_double(f[1], n);
    r.h_next = parse_double(f[2], n);
    r.delta_u = parse_double(f[3], n);
    r.d_min_true = parse_double(f[4], n);
    r.d_min_rendered = parse_double(f[5], n);
    r.speed = parse_double(f[6], n);
    if (f[7] != "0" && f[7] != "1") throw std::runtime_error("csv: line " + std::to_string(n) + ": bad flag");
    r.collided = f[7] == "1";
    r.filter_ms = f[8].empty() ? 0.0 : parse_double(f[8], n);
    r.candidates = static_cast<int>(parse_double(f[9], n));
    out.push_back(r);
  }
  return out;
}

std::vector<StepRecord> load_records_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_records_csv(ss.str());
}

}  // namespace vfcbf
