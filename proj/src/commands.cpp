#include "pmp/commands.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "pmp/checkpoint.hpp"
#include "pmp/losses.hpp"

namespace fs = std::filesystem;

namespace pmp {

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_manifest(const std::string& path, const std::string& command, KvMap kv) {
  kv["command"] = command;
  kv["version"] = kToolVersion;
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_kv_file(path, kv);
}

KvMap merged_config(const std::string& config_path, const KvMap& overrides) {
  KvMap kv;
  if (!config_path.empty()) kv = read_kv_file(config_path);
  for (const auto& [k, v] : overrides) kv[k] = v;
  return kv;
}

CloudFormat format_for(const std::string& path) {
  auto ext = fs::path(path).extension().string();
  return (ext == ".bin" || ext == ".pmpb") ? CloudFormat::BinaryF32 : CloudFormat::XyzText;
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  for (auto& t : out) {
    size_t a = t.find_first_not_of(" \t");
    size_t b = t.find_last_not_of(" \t");
    t = (a == std::string::npos) ? "" : t.substr(a, b - a + 1);
  }
  return out;
}

double final_cd(const TrainResult& result, ChamferNorm norm) {
  if (result.history.empty()) throw std::runtime_error("ablate: run produced no epochs");
  const EpochMetrics& last = result.history.back();
  return norm == ChamferNorm::L1 ? last.cd_l1 : last.cd_l2;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-')
                              ? c
                              : '_';
  return out;
}

}  // namespace

uint64_t resolve_seed(const std::optional<uint64_t>& explicit_seed, const KvMap& kv) {
  if (explicit_seed) return *explicit_seed;
  if (kv.count("seed")) return kv_u64(kv, "seed", 0);
  if (const char* env = std::getenv("PMP_SEED")) {
    try {
      size_t pos;
      uint64_t v = std::stoull(env, &pos);
      if (pos == std::string(env).size()) return v;
    } catch (...) {
    }
    throw std::invalid_argument("PMP_SEED is not an unsigned integer: " + std::string(env));
  }
  return 0;
}

void cmd_gen(const GenOptions& opt) {
  if (opt.out_dir.empty()) throw std::invalid_argument("gen: --out is required");
  DatasetSpec spec;
  if (!opt.kinds.empty()) {
    spec.kinds.clear();
    for (const std::string& name : split_list(opt.kinds, ','))
      if (!name.empty()) spec.kinds.push_back(shape_kind_from_string(name));
    if (spec.kinds.empty()) throw std::invalid_argument("gen: --kinds list is empty");
  }
  spec.count = opt.count;
  spec.points = opt.points;
  spec.keep_fraction = opt.keep_fraction;
  spec.seed = resolve_seed(opt.seed, {});

  KvMap man;
  std::string kind_names;
  for (size_t i = 0; i < spec.kinds.size(); ++i)
    kind_names += (i ? "," : "") + to_string(spec.kinds[i]);
  man["kinds"] = kind_names;
  man["count"] = std::to_string(spec.count);
  man["points"] = std::to_string(spec.points);
  man["keep_fraction"] = fmt17(spec.keep_fraction);
  man["seed"] = std::to_string(spec.seed);
  man["out_dir"] = opt.out_dir;
  fs::create_directories(opt.out_dir);
  write_manifest((fs::path(opt.out_dir) / "manifest.txt").string(), "gen", man);

  write_dataset(opt.out_dir, generate_dataset(spec));
}

void cmd_train(const TrainCmdOptions& opt) {
  if (opt.data_dir.empty()) throw std::invalid_argument("train: --data is required");
  if (opt.out_dir.empty()) throw std::invalid_argument("train: --out is required");

  KvMap kv = merged_config(opt.config_path, opt.overrides);
  uint64_t seed = resolve_seed(opt.seed, kv);
  NetConfig net_cfg = net_config_from_kv(kv);
  TrainConfig train_cfg = train_config_from_kv(kv);
  train_cfg.seed = seed;
  net_cfg.validate();
  train_cfg.validate();

  KvMap man = net_config_to_kv(net_cfg);
  for (const auto& [k, v] : train_config_to_kv(train_cfg)) man[k] = v;
  man["seed"] = std::to_string(seed);
  man["data_dir"] = opt.data_dir;
  man["out_dir"] = opt.out_dir;
  fs::create_directories(opt.out_dir);
  write_manifest((fs::path(opt.out_dir) / "manifest.txt").string(), "train", man);

  auto data = load_dataset(opt.data_dir);
  PmpNet net(net_cfg, seed);
  train(net, data, train_cfg, opt.out_dir);
}

void cmd_complete(const CompleteOptions& opt) {
  if (opt.checkpoint.empty()) throw std::invalid_argument("complete: --checkpoint is required");
  if (opt.in_path.empty()) throw std::invalid_argument("complete: --in is required");
  if (opt.out_path.empty()) throw std::invalid_argument("complete: --out is required");
  if (opt.repeat < 1) throw std::invalid_argument("complete: --repeat must be >= 1");
  uint64_t seed = resolve_seed(opt.seed, {});

  KvMap man;
  man["checkpoint"] = opt.checkpoint;
  man["in_path"] = opt.in_path;
  man["out_path"] = opt.out_path;
  man["repeat"] = std::to_string(opt.repeat);
  man["trace"] = opt.trace ? "true" : "false";
  man["seed"] = std::to_string(seed);
  write_manifest(opt.out_path + ".manifest.txt", "complete", man);

  PmpNet net = load_checkpoint(opt.checkpoint);
  PointCloud input = read_cloud(opt.in_path);
  Rng rng(seed);
  if (input.size() != net.config().points) input = resample(input, net.config().points, rng);

  NoGradGuard ng;
  PointCloud out;
  for (int64_t pass = 1; pass <= opt.repeat; ++pass) {
    auto traces = net.forward(input, rng);
    for (const auto& tr : traces) {
      if (opt.trace) {
        std::string path = opt.out_path + ".trace.p" + std::to_string(pass) + ".s" +
                           std::to_string(tr.step) + ".xyz";
        write_cloud(tr.output_cloud(), path, CloudFormat::XyzText);
      }
    }
    PointCloud result = traces.back().output_cloud();
    out.points.insert(out.points.end(), result.points.begin(), result.points.end());
  }
  write_cloud(out, opt.out_path, format_for(opt.out_path));
}

std::string cmd_eval(const EvalOptions& opt) {
  if (opt.checkpoint.empty()) throw std::invalid_argument("eval: --checkpoint is required");
  if (opt.data_dir.empty()) throw std::invalid_argument("eval: --data is required");
  if (opt.metric != "cd-l1" && opt.metric != "cd-l2" && opt.metric != "emd")
    throw std::invalid_argument("eval: unknown metric " + opt.metric);
  uint64_t seed = resolve_seed(opt.seed, {});

  KvMap man;
  man["checkpoint"] = opt.checkpoint;
  man["data_dir"] = opt.data_dir;
  man["metric"] = opt.metric;
  man["out_csv"] = opt.out_csv;
  man["seed"] = std::to_string(seed);
  write_manifest(opt.out_csv + ".manifest.txt", "eval", man);

  PmpNet net = load_checkpoint(opt.checkpoint);
  auto data = load_dataset(opt.data_dir);
  if (data.empty()) throw std::invalid_argument("eval: dataset is empty");
  Rng rng(seed);

  // customary reporting scales: CD-L1 x1000, CD-L2 x10000; EMD unscaled
  double scale = opt.metric == "cd-l1" ? 1e3 : opt.metric == "cd-l2" ? 1e4 : 1.0;

  NoGradGuard ng;
  std::map<std::string, std::pair<int64_t, double>> per_category;  // count, sum
  double total = 0;
  for (const auto& pair : data) {
    PointCloud input = pair.partial;
    if (input.size() != net.config().points) input = resample(input, net.config().points, rng);
    auto traces = net.forward(input, rng);
    PointCloud out = traces.back().output_cloud();
    double value;
    if (opt.metric == "cd-l1")
      value = chamfer_value(out, pair.complete, ChamferNorm::L1);
    else if (opt.metric == "cd-l2")
      value = chamfer_value(out, pair.complete, ChamferNorm::L2);
    else
      value = emd_approx(out, pair.complete, 50).total_cost;
    auto& slot = per_category[pair.category];
    slot.first += 1;
    slot.second += value;
    total += value;
  }

  std::ostringstream csv;
  csv << "category,count," << opt.metric << "\n";
  for (const auto& [cat, slot] : per_category)
    csv << cat << "," << slot.first << ","
        << fmt17(scale * slot.second / static_cast<double>(slot.first)) << "\n";
  csv << "average," << data.size() << ","
      << fmt17(scale * total / static_cast<double>(data.size())) << "\n";

  std::ofstream f(opt.out_csv);
  if (!f) throw std::runtime_error("eval: cannot write " + opt.out_csv);
  f << csv.str();
  return csv.str();
}

void cmd_ablate(const AblateOptions& opt) {
  if (opt.data_dir.empty()) throw std::invalid_argument("ablate: --data is required");
  if (opt.out_dir.empty()) throw std::invalid_argument("ablate: --out is required");
  static const std::vector<std::string> axes = {"steps", "radius", "noise-dim", "noise-std",
                                                "rpa-variant"};
  if (std::find(axes.begin(), axes.end(), opt.axis) == axes.end())
    throw std::invalid_argument("ablate: unknown axis " + opt.axis);
  std::vector<std::string> values = split_list(opt.values, ';');
  values.erase(std::remove(values.begin(), values.end(), ""), values.end());
  if (values.empty()) throw std::invalid_argument("ablate: --values is empty");

  KvMap kv = merged_config(opt.config_path, opt.overrides);
  uint64_t seed = resolve_seed(opt.seed, kv);
  NetConfig base_net = net_config_from_kv(kv);
  TrainConfig train_cfg = train_config_from_kv(kv);
  train_cfg.seed = seed;
  train_cfg.validate();

  KvMap man = net_config_to_kv(base_net);
  for (const auto& [k, v] : train_config_to_kv(train_cfg)) man[k] = v;
  man["seed"] = std::to_string(seed);
  man["data_dir"] = opt.data_dir;
  man["out_dir"] = opt.out_dir;
  man["axis"] = opt.axis;
  man["values"] = opt.values;
  fs::create_directories(opt.out_dir);
  write_manifest((fs::path(opt.out_dir) / "manifest.txt").string(), "ablate", man);

  auto data = load_dataset(opt.data_dir);

  std::ostringstream csv;
  csv << "axis,value,cd_l1,cd_l2\n";
  for (size_t i = 0; i < values.size(); ++i) {
    NetConfig cfg = base_net;
    const std::string& v = values[i];
    if (opt.axis == "steps") {
      cfg.steps = static_cast<int>(std::stoll(v));
      cfg.radius_schedule.clear();
      for (int k = 0; k < cfg.steps; ++k) cfg.radius_schedule.push_back(std::pow(10.0, -k));
    } else if (opt.axis == "radius") {
      cfg.radius_schedule.clear();
      for (const std::string& r : split_list(v, ','))
        cfg.radius_schedule.push_back(std::stod(r));
      cfg.steps = static_cast<int>(cfg.radius_schedule.size());
    } else if (opt.axis == "noise-dim") {
      cfg.noise_dim = std::stoll(v);
    } else if (opt.axis == "noise-std") {
      cfg.noise_stddev = std::stod(v);
    } else {
      cfg.rpa_variant = rpa_variant_from_string(v);
    }
    cfg.validate();

    std::string run_dir =
        (fs::path(opt.out_dir) / ("run_" + std::to_string(i) + "_" + sanitize(v))).string();
    PmpNet net(cfg, seed);
    TrainResult result = train(net, data, train_cfg, run_dir);
    csv << opt.axis << ",\"" << v << "\"," << fmt17(final_cd(result, ChamferNorm::L1)) << ","
        << fmt17(final_cd(result, ChamferNorm::L2)) << "\n";
  }

  std::string csv_path = (fs::path(opt.out_dir) / "ablate.csv").string();
  std::ofstream f(csv_path);
  if (!f) throw std::runtime_error("ablate: cannot write " + csv_path);
  f << csv.str();
}

void cmd_rerun(const std::string& manifest_path, const std::string& out_override) {
  KvMap kv = read_kv_file(manifest_path);
  std::string command = kv_str(kv, "command", "");
  if (command.empty())
    throw std::invalid_argument("rerun: " + manifest_path + " has no command key");
  auto out_or = [&](const std::string& key) {
    return out_override.empty() ? kv_str(kv, key, "") : out_override;
  };

  if (command == "gen") {
    GenOptions o;
    o.out_dir = out_or("out_dir");
    o.kinds = kv_str(kv, "kinds", "");
    o.count = kv_i64(kv, "count", o.count);
    o.points = kv_i64(kv, "points", o.points);
    o.keep_fraction = kv_f64(kv, "keep_fraction", o.keep_fraction);
    o.seed = kv_u64(kv, "seed", 0);
    cmd_gen(o);
  } else if (command == "train") {
    TrainCmdOptions o;
    o.data_dir = kv_str(kv, "data_dir", "");
    o.out_dir = out_or("out_dir");
    o.overrides = kv;  // materialized config; unrelated keys are ignored
    o.seed = kv_u64(kv, "seed", 0);
    cmd_train(o);
  } else if (command == "complete") {
    CompleteOptions o;
    o.checkpoint = kv_str(kv, "checkpoint", "");
    o.in_path = kv_str(kv, "in_path", "");
    o.out_path = out_or("out_path");
    o.repeat = kv_i64(kv, "repeat", 1);
    o.trace = kv_bool(kv, "trace", false);
    o.seed = kv_u64(kv, "seed", 0);
    cmd_complete(o);
  } else if (command == "eval") {
    EvalOptions o;
    o.checkpoint = kv_str(kv, "checkpoint", "");
    o.data_dir = kv_str(kv, "data_dir", "");
    o.metric = kv_str(kv, "metric", o.metric);
    o.out_csv = out_or("out_csv");
    o.seed = kv_u64(kv, "seed", 0);
    cmd_eval(o);
  } else if (command == "ablate") {
    AblateOptions o;
    o.data_dir = kv_str(kv, "data_dir", "");
    o.out_dir = out_or("out_dir");
    o.axis = kv_str(kv, "axis", "");
    o.values = kv_str(kv, "values", "");
    o.overrides = kv;
    o.seed = kv_u64(kv, "seed", 0);
    cmd_ablate(o);
  } else {
    throw std::invalid_argument("rerun: unknown command " + command);
  }
}

}  // namespace pmp
