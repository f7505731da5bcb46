// Command-line front end: dataset generation, training, completion,
// evaluation, ablation sweeps, and manifest replay.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "pmp/commands.hpp"

namespace {

// CLI11 stores into concrete fields; seed needs tri-state for the
// flag > config > PMP_SEED > 0 precedence chain.
struct SeedFlag {
  uint64_t value = 0;
  bool given = false;
  std::optional<uint64_t> get() const {
    return given ? std::optional<uint64_t>(value) : std::nullopt;
  }
};

void add_seed(CLI::App* cmd, SeedFlag& s) {
  cmd->add_option("--seed", s.value, "RNG seed (default: PMP_SEED env, then 0)")
      ->each([&s](const std::string&) { s.given = true; });
}

// Collects --key value style config overrides into a KvMap.
void add_config_overrides(CLI::App* cmd, pmp::KvMap& kv) {
  auto grab = [&kv](const std::string& key) {
    return [&kv, key](const std::string& v) { kv[key] = v; };
  };
  cmd->add_option_function<std::string>("--points", grab("points"), "input cloud size");
  cmd->add_option_function<std::string>("--steps", grab("steps"), "deformation steps K");
  cmd->add_option_function<std::string>("--radius-schedule", grab("radius_schedule"),
                                        "per-step displacement bounds, comma list");
  cmd->add_option_function<std::string>("--noise-dim", grab("noise_dim"), "noise vector width");
  cmd->add_option_function<std::string>("--noise-std", grab("noise_stddev"), "noise stddev");
  cmd->add_option_function<std::string>("--rpa-variant", grab("rpa_variant"),
                                        "rpa | nopath | add | gru");
  cmd->add_option_function<std::string>("--epochs", grab("epochs"), "training epochs");
  cmd->add_option_function<std::string>("--batch-size", grab("batch_size"), "mini-batch size");
  cmd->add_option_function<std::string>("--lr", grab("lr"), "initial learning rate");
  cmd->add_option_function<std::string>("--pmd-weight", grab("pmd_weight"),
                                        "path-length regularizer weight");
  cmd->add_option_function<std::string>("--emd-weight", grab("emd_weight"),
                                        "extra assignment-cost term weight (default 0)");
  cmd->add_option_function<std::string>("--val-fraction", grab("val_fraction"),
                                        "validation split fraction");
  cmd->add_option_function<std::string>("--checkpoint-every", grab("checkpoint_every"),
                                        "save a checkpoint every N epochs");
  cmd->add_option_function<std::vector<std::string>>(
      "--set", [&kv](const std::vector<std::string>& pairs) {
        for (const auto& p : pairs) {
          auto eq = p.find('=');
          if (eq == std::string::npos)
            throw CLI::ValidationError("--set expects key=value, got: " + p);
          kv[p.substr(0, eq)] = p.substr(eq + 1);
        }
      },
      "extra key=value config overrides (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"point cloud completion by multi-step point moving paths"};
  app.require_subcommand(1);

  pmp::GenOptions gen;
  SeedFlag gen_seed;
  auto* cgen = app.add_subcommand("gen", "generate a synthetic partial/complete dataset");
  cgen->add_option("--out", gen.out_dir, "output dataset directory")->required();
  cgen->add_option("--kinds", gen.kinds,
                   "comma list of plane-slab,sphere,cylinder,box,l-bracket (default all)");
  cgen->add_option("--count", gen.count, "number of shape pairs");
  cgen->add_option("--points", gen.points, "points per cloud");
  cgen->add_option("--keep-fraction", gen.keep_fraction, "fraction kept by the occlusion cut");
  add_seed(cgen, gen_seed);

  pmp::TrainCmdOptions tr;
  SeedFlag tr_seed;
  auto* ctrain = app.add_subcommand("train", "train a completion model");
  ctrain->add_option("--data", tr.data_dir, "dataset directory")->required();
  ctrain->add_option("--out", tr.out_dir, "run output directory")->required();
  ctrain->add_option("--config", tr.config_path, "flat key=value config file");
  add_config_overrides(ctrain, tr.overrides);
  add_seed(ctrain, tr_seed);

  pmp::CompleteOptions co;
  SeedFlag co_seed;
  auto* ccomp = app.add_subcommand("complete", "complete a partial cloud with a checkpoint");
  ccomp->add_option("--checkpoint", co.checkpoint, "model checkpoint (.pmpk)")->required();
  ccomp->add_option("--in", co.in_path, "partial input cloud")->required();
  ccomp->add_option("--out", co.out_path, "output cloud path")->required();
  ccomp->add_option("--repeat", co.repeat, "independent passes; output is their union");
  ccomp->add_flag("--trace", co.trace, "also write per-pass, per-step clouds");
  add_seed(ccomp, co_seed);

  pmp::EvalOptions ev;
  SeedFlag ev_seed;
  auto* ceval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  ceval->add_option("--checkpoint", ev.checkpoint, "model checkpoint (.pmpk)")->required();
  ceval->add_option("--data", ev.data_dir, "dataset directory")->required();
  ceval->add_option("--metric", ev.metric, "cd-l1 | cd-l2 | emd");
  ceval->add_option("--out", ev.out_csv, "output CSV path (default eval.csv)");
  add_seed(ceval, ev_seed);

  pmp::AblateOptions ab;
  SeedFlag ab_seed;
  auto* cabl = app.add_subcommand("ablate", "train one model per value of a config axis");
  cabl->add_option("--data", ab.data_dir, "dataset directory")->required();
  cabl->add_option("--out", ab.out_dir, "sweep output directory")->required();
  cabl->add_option("--axis", ab.axis, "steps | radius | noise-dim | noise-std | rpa-variant")
      ->required();
  cabl->add_option("--values", ab.values, "semicolon-separated values; radius uses comma lists")
      ->required();
  cabl->add_option("--config", ab.config_path, "flat key=value config file");
  add_config_overrides(cabl, ab.overrides);
  add_seed(cabl, ab_seed);

  std::string rerun_manifest, rerun_out;
  auto* crerun = app.add_subcommand("rerun", "replay a run from its manifest");
  crerun->add_option("manifest", rerun_manifest, "manifest file of a previous run")->required();
  crerun->add_option("--out", rerun_out, "redirect the run's primary output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cgen->parsed()) {
      gen.seed = gen_seed.get();
      pmp::cmd_gen(gen);
    } else if (ctrain->parsed()) {
      tr.seed = tr_seed.get();
      pmp::cmd_train(tr);
    } else if (ccomp->parsed()) {
      co.seed = co_seed.get();
      pmp::cmd_complete(co);
    } else if (ceval->parsed()) {
      ev.seed = ev_seed.get();
      std::cout << pmp::cmd_eval(ev);
    } else if (cabl->parsed()) {
      ab.seed = ab_seed.get();
      pmp::cmd_ablate(ab);
    } else if (crerun->parsed()) {
      pmp::cmd_rerun(rerun_manifest, rerun_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
