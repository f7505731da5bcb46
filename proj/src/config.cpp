#include "pmp/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <type_traits>

namespace pmp {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw std::invalid_argument("config: cannot parse value for '" + key + "': " + value);
}

std::string fmt_f64(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join_list(const std::vector<T>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) os << ",";
    if constexpr (std::is_same_v<T, double>)
      os << fmt_f64(v[i]);
    else
      os << v[i];
  }
  return os.str();
}

}  // namespace

KvMap parse_kv_text(const std::string& text) {
  KvMap kv;
  std::istringstream in(text);
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not 'key = value': " + line);
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config: empty key on line " + std::to_string(lineno));
    kv[key] = value;
  }
  return kv;
}

KvMap read_kv_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_kv_text(ss.str());
}

std::string kv_to_text(const KvMap& kv) {
  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
  return os.str();
}

void write_kv_file(const std::string& path, const KvMap& kv) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("config: cannot write " + path);
  f << kv_to_text(kv);
  if (!f) throw std::runtime_error("config: write failed for " + path);
}

std::string kv_str(const KvMap& kv, const std::string& key, const std::string& fallback) {
  auto it = kv.find(key);
  return it == kv.end() ? fallback : it->second;
}

int64_t kv_i64(const KvMap& kv, const std::string& key, int64_t fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    size_t pos;
    int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) bad_value(key, it->second);
    return v;
  } catch (const std::invalid_argument&) {
    bad_value(key, it->second);
  } catch (const std::out_of_range&) {
    bad_value(key, it->second);
  }
}

uint64_t kv_u64(const KvMap& kv, const std::string& key, uint64_t fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    size_t pos;
    uint64_t v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) bad_value(key, it->second);
    return v;
  } catch (const std::invalid_argument&) {
    bad_value(key, it->second);
  } catch (const std::out_of_range&) {
    bad_value(key, it->second);
  }
}

double kv_f64(const KvMap& kv, const std::string& key, double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    size_t pos;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) bad_value(key, it->second);
    return v;
  } catch (const std::invalid_argument&) {
    bad_value(key, it->second);
  } catch (const std::out_of_range&) {
    bad_value(key, it->second);
  }
}

bool kv_bool(const KvMap& kv, const std::string& key, bool fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v);
}

std::vector<int64_t> kv_i64_list(const KvMap& kv, const std::string& key,
                                 std::vector<int64_t> fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  std::vector<int64_t> out;
  for (const std::string& part : split(it->second, ',')) {
    if (part.empty()) bad_value(key, it->second);
    try {
      size_t pos;
      out.push_back(std::stoll(part, &pos));
      if (pos != part.size()) bad_value(key, it->second);
    } catch (const std::invalid_argument&) {
      bad_value(key, it->second);
    } catch (const std::out_of_range&) {
      bad_value(key, it->second);
    }
  }
  return out;
}

std::vector<double> kv_f64_list(const KvMap& kv, const std::string& key,
                                std::vector<double> fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  std::vector<double> out;
  for (const std::string& part : split(it->second, ',')) {
    if (part.empty()) bad_value(key, it->second);
    try {
      size_t pos;
      out.push_back(std::stod(part, &pos));
      if (pos != part.size()) bad_value(key, it->second);
    } catch (const std::invalid_argument&) {
      bad_value(key, it->second);
    } catch (const std::out_of_range&) {
      bad_value(key, it->second);
    }
  }
  return out;
}

NetConfig net_config_from_kv(const KvMap& kv, NetConfig base) {
  NetConfig c = base;
  c.points = kv_i64(kv, "points", c.points);
  c.sa1.centers = kv_i64(kv, "sa1_centers", c.sa1.centers);
  c.sa1.radius = kv_f64(kv, "sa1_radius", c.sa1.radius);
  c.sa1.nsample = kv_i64(kv, "sa1_nsample", c.sa1.nsample);
  c.sa1.mlp = kv_i64_list(kv, "sa1_mlp", c.sa1.mlp);
  c.sa2.centers = kv_i64(kv, "sa2_centers", c.sa2.centers);
  c.sa2.radius = kv_f64(kv, "sa2_radius", c.sa2.radius);
  c.sa2.nsample = kv_i64(kv, "sa2_nsample", c.sa2.nsample);
  c.sa2.mlp = kv_i64_list(kv, "sa2_mlp", c.sa2.mlp);
  c.sa3_mlp = kv_i64_list(kv, "sa3_mlp", c.sa3_mlp);
  c.fp1_mlp = kv_i64_list(kv, "fp1_mlp", c.fp1_mlp);
  c.fp2_mlp = kv_i64_list(kv, "fp2_mlp", c.fp2_mlp);
  c.fp3_mlp = kv_i64_list(kv, "fp3_mlp", c.fp3_mlp);
  c.head_mlp = kv_i64_list(kv, "head_mlp", c.head_mlp);
  c.noise_dim = kv_i64(kv, "noise_dim", c.noise_dim);
  c.noise_stddev = kv_f64(kv, "noise_stddev", c.noise_stddev);
  c.steps = static_cast<int>(kv_i64(kv, "steps", c.steps));
  c.radius_schedule = kv_f64_list(kv, "radius_schedule", c.radius_schedule);
  c.rpa_variant = rpa_variant_from_string(kv_str(kv, "rpa_variant", to_string(c.rpa_variant)));
  c.share_noise_across_steps =
      kv_bool(kv, "share_noise_across_steps", c.share_noise_across_steps);
  c.per_step_encoder = kv_bool(kv, "per_step_encoder", c.per_step_encoder);
  // a steps override without an explicit schedule follows the default decade
  // progression 1, 0.1, 0.01, ...
  if (kv.count("steps") && !kv.count("radius_schedule") &&
      static_cast<int>(c.radius_schedule.size()) != c.steps) {
    c.radius_schedule.clear();
    for (int k = 0; k < c.steps; ++k) c.radius_schedule.push_back(std::pow(10.0, -k));
  }
  return c;
}

KvMap net_config_to_kv(const NetConfig& cfg) {
  KvMap kv;
  kv["points"] = std::to_string(cfg.points);
  kv["sa1_centers"] = std::to_string(cfg.sa1.centers);
  kv["sa1_radius"] = fmt_f64(cfg.sa1.radius);
  kv["sa1_nsample"] = std::to_string(cfg.sa1.nsample);
  kv["sa1_mlp"] = join_list(cfg.sa1.mlp);
  kv["sa2_centers"] = std::to_string(cfg.sa2.centers);
  kv["sa2_radius"] = fmt_f64(cfg.sa2.radius);
  kv["sa2_nsample"] = std::to_string(cfg.sa2.nsample);
  kv["sa2_mlp"] = join_list(cfg.sa2.mlp);
  kv["sa3_mlp"] = join_list(cfg.sa3_mlp);
  kv["fp1_mlp"] = join_list(cfg.fp1_mlp);
  kv["fp2_mlp"] = join_list(cfg.fp2_mlp);
  kv["fp3_mlp"] = join_list(cfg.fp3_mlp);
  kv["head_mlp"] = join_list(cfg.head_mlp);
  kv["noise_dim"] = std::to_string(cfg.noise_dim);
  kv["noise_stddev"] = fmt_f64(cfg.noise_stddev);
  kv["steps"] = std::to_string(cfg.steps);
  kv["radius_schedule"] = join_list(cfg.radius_schedule);
  kv["rpa_variant"] = to_string(cfg.rpa_variant);
  kv["share_noise_across_steps"] = cfg.share_noise_across_steps ? "true" : "false";
  kv["per_step_encoder"] = cfg.per_step_encoder ? "true" : "false";
  return kv;
}

}  // namespace pmp
