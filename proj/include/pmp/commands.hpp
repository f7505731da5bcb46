#pragma once

// Command implementations behind the CLI binary. Each command resolves its
// full configuration (defaults < config file < explicit overrides), writes a
// RunManifest before any computation, then runs. Manifests are flat key=value
// files; cmd_rerun replays one, optionally redirecting outputs.
//
// Seed precedence: explicit --seed flag, then a `seed` key in the config
// file/overrides, then the PMP_SEED environment variable, then 0.

#include <cstdint>
#include <optional>
#include <string>

#include "pmp/config.hpp"
#include "pmp/train.hpp"

namespace pmp {

inline constexpr const char* kToolVersion = "1.0";

uint64_t resolve_seed(const std::optional<uint64_t>& explicit_seed, const KvMap& kv);

struct GenOptions {
  std::string out_dir;
  std::string kinds;  // comma-separated kind names; empty = all five
  int64_t count = 5;
  int64_t points = 256;
  double keep_fraction = 0.5;
  std::optional<uint64_t> seed;
};
void cmd_gen(const GenOptions& opt);

struct TrainCmdOptions {
  std::string data_dir;
  std::string out_dir;
  std::string config_path;  // optional flat key=value file
  KvMap overrides;          // highest-precedence config entries
  std::optional<uint64_t> seed;
};
void cmd_train(const TrainCmdOptions& opt);

struct CompleteOptions {
  std::string checkpoint;
  std::string in_path;
  std::string out_path;
  int64_t repeat = 1;
  bool trace = false;  // also write per-pass, per-step clouds
  std::optional<uint64_t> seed;
};
void cmd_complete(const CompleteOptions& opt);

struct EvalOptions {
  std::string checkpoint;
  std::string data_dir;
  std::string metric = "cd-l1";  // cd-l1 | cd-l2 | emd
  std::string out_csv = "eval.csv";
  std::optional<uint64_t> seed;
};
// Returns the CSV text (also written to out_csv). CD-L1 is reported x1000 and
// CD-L2 x10000; scaling happens here only, never inside the loss code.
std::string cmd_eval(const EvalOptions& opt);

struct AblateOptions {
  std::string data_dir;
  std::string out_dir;
  std::string axis;    // steps | radius | noise-dim | noise-std | rpa-variant
  std::string values;  // semicolon-separated; radius entries are comma lists
  std::string config_path;
  KvMap overrides;
  std::optional<uint64_t> seed;
};
void cmd_ablate(const AblateOptions& opt);

// Replays the command recorded in a manifest file. out_override, when
// nonempty, redirects the primary output (directory or file) of the run.
void cmd_rerun(const std::string& manifest_path, const std::string& out_override = "");

}  // namespace pmp
