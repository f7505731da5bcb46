#include "pmp/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "pmp/checkpoint.hpp"
#include "pmp/losses.hpp"

namespace pmp {

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

double cloud_cd(const PointCloud& out, const PointCloud& target, ChamferNorm norm) {
  return chamfer_value(out, target, norm);
}

double pmd_value(const std::vector<StepTrace>& traces) {
  double s = 0;
  for (const auto& tr : traces)
    for (double len : tr.path_lengths()) s += len;
  return s;
}

[[noreturn]] void diagnose_nonfinite(const std::vector<StepTrace>& traces,
                                     const PointCloud& target, double pmd_weight,
                                     double emd_weight, int64_t epoch, int64_t batch) {
  std::string term = "total";
  for (const auto& tr : traces) {
    double cd = cloud_cd(tr.output_cloud(), target, ChamferNorm::L1);
    if (!std::isfinite(cd)) {
      term = "cd_l1 step " + std::to_string(tr.step);
      break;
    }
  }
  if (term == "total" && !std::isfinite(pmd_weight * pmd_value(traces))) term = "pmd";
  if (term == "total" && emd_weight != 0.0) term = "possibly emd";
  throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                           " batch " + std::to_string(batch) + ", offending term: " + term);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0)) throw std::invalid_argument("train: lr must be positive");
  if (!(lr_decay > 0)) throw std::invalid_argument("train: lr_decay must be positive");
  if (lr_decay_every <= 0) throw std::invalid_argument("train: lr_decay_every must be positive");
  if (batch_size <= 0) throw std::invalid_argument("train: batch_size must be positive");
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (pmd_weight < 0) throw std::invalid_argument("train: pmd_weight must be >= 0");
  if (emd_weight < 0) throw std::invalid_argument("train: emd_weight must be >= 0");
  if (clip_norm < 0) throw std::invalid_argument("train: clip_norm must be >= 0");
  if (val_fraction < 0 || val_fraction >= 1)
    throw std::invalid_argument("train: val_fraction must be in [0, 1)");
  if (checkpoint_every < 0)
    throw std::invalid_argument("train: checkpoint_every must be >= 0");
}

void adam_step(ParamStore& params, AdamState& state, double lr) {
  auto& items = params.items();
  if (state.m.empty()) {
    state.m.resize(items.size());
    state.v.resize(items.size());
    for (size_t i = 0; i < items.size(); ++i) {
      state.m[i].assign(items[i].second.values().size(), 0.0);
      state.v[i].assign(items[i].second.values().size(), 0.0);
    }
  }
  if (state.m.size() != items.size())
    throw std::invalid_argument("adam_step: state tracks " + std::to_string(state.m.size()) +
                                " tensors, store has " + std::to_string(items.size()));
  state.t += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < items.size(); ++i) {
    Tensor& p = items[i].second;
    auto& vals = p.mutable_values();
    const auto& g = p.grad();
    if (g.size() != vals.size())
      throw std::invalid_argument("adam_step: grad/value size mismatch for " + items[i].first);
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (size_t j = 0; j < vals.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      vals[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double lr_at(int64_t epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw std::invalid_argument("lr_at: epoch must be >= 0");
  return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_decay_every));
}

TrainConfig train_config_from_kv(const KvMap& kv, TrainConfig base) {
  TrainConfig c = base;
  c.lr = kv_f64(kv, "lr", c.lr);
  c.lr_decay = kv_f64(kv, "lr_decay", c.lr_decay);
  c.lr_decay_every = kv_i64(kv, "lr_decay_every", c.lr_decay_every);
  c.batch_size = kv_i64(kv, "batch_size", c.batch_size);
  c.epochs = kv_i64(kv, "epochs", c.epochs);
  c.pmd_weight = kv_f64(kv, "pmd_weight", c.pmd_weight);
  c.emd_weight = kv_f64(kv, "emd_weight", c.emd_weight);
  c.emd_iterations = kv_i64(kv, "emd_iterations", c.emd_iterations);
  c.clip_norm = kv_f64(kv, "clip_norm", c.clip_norm);
  c.val_fraction = kv_f64(kv, "val_fraction", c.val_fraction);
  c.checkpoint_every = kv_i64(kv, "checkpoint_every", c.checkpoint_every);
  c.seed = kv_u64(kv, "seed", c.seed);
  return c;
}

KvMap train_config_to_kv(const TrainConfig& cfg) {
  KvMap kv;
  kv["lr"] = fmt17(cfg.lr);
  kv["lr_decay"] = fmt17(cfg.lr_decay);
  kv["lr_decay_every"] = std::to_string(cfg.lr_decay_every);
  kv["batch_size"] = std::to_string(cfg.batch_size);
  kv["epochs"] = std::to_string(cfg.epochs);
  kv["pmd_weight"] = fmt17(cfg.pmd_weight);
  kv["emd_weight"] = fmt17(cfg.emd_weight);
  kv["emd_iterations"] = std::to_string(cfg.emd_iterations);
  kv["clip_norm"] = fmt17(cfg.clip_norm);
  kv["val_fraction"] = fmt17(cfg.val_fraction);
  kv["checkpoint_every"] = std::to_string(cfg.checkpoint_every);
  kv["seed"] = std::to_string(cfg.seed);
  return kv;
}

std::string metrics_csv(const std::vector<EpochMetrics>& history) {
  std::ostringstream os;
  os << "epoch,lr,loss,cd_l1,cd_l2,pmd\n";
  for (const auto& m : history)
    os << m.epoch << "," << fmt17(m.lr) << "," << fmt17(m.loss) << "," << fmt17(m.cd_l1) << ","
       << fmt17(m.cd_l2) << "," << fmt17(m.pmd) << "\n";
  return os.str();
}

bool is_validation_pair(const std::string& id, double val_fraction) {
  return static_cast<double>(fnv1a(id) % 10000) < val_fraction * 10000.0;
}

TrainResult train(PmpNet& net, const std::vector<ShapePair>& data, const TrainConfig& cfg,
                  const std::string& out_dir) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: dataset is empty");

  namespace fs = std::filesystem;
  bool writing = !out_dir.empty();
  if (writing) fs::create_directories(out_dir);
  auto out_path = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

  std::vector<size_t> train_idx, val_idx;
  for (size_t i = 0; i < data.size(); ++i) {
    if (is_validation_pair(data[i].id, cfg.val_fraction))
      val_idx.push_back(i);
    else
      train_idx.push_back(i);
  }
  if (train_idx.empty() || val_idx.empty()) {
    train_idx.resize(data.size());
    std::iota(train_idx.begin(), train_idx.end(), size_t{0});
    val_idx = train_idx;
  }

  Rng base(cfg.seed);
  Rng shuffle_rng = base.fork(1);
  Rng noise_rng = base.fork(2);
  Rng val_rng = base.fork(3);

  // one fixed noise set per validation pair so epoch-to-epoch comparisons are fair
  int64_t noises_per_pass =
      net.config().share_noise_across_steps ? 1 : net.config().steps;
  std::vector<std::vector<Tensor>> val_noise(val_idx.size());
  if (net.config().noise_dim > 0) {
    for (size_t i = 0; i < val_idx.size(); ++i)
      for (int64_t k = 0; k < noises_per_pass; ++k)
        val_noise[i].push_back(
            net.sample_noise(data[val_idx[i]].partial.size(), val_rng));
  }

  auto val_cd_l2 = [&]() {
    NoGradGuard ng;
    double total = 0;
    for (size_t i = 0; i < val_idx.size(); ++i) {
      const ShapePair& pair = data[val_idx[i]];
      auto traces = net.forward(pair.partial, val_noise[i]);
      total += cloud_cd(traces.back().output_cloud(), pair.complete, ChamferNorm::L2);
    }
    return total / static_cast<double>(val_idx.size());
  };

  TrainResult result;
  if (cfg.epochs == 0) {
    if (writing) {
      save_checkpoint(out_path("final.pmpk"), net);
      std::ofstream csv(out_path("metrics.csv"));
      csv << metrics_csv({});
    }
    return result;
  }

  AdamState adam;
  result.best_val_cd_l2 = std::numeric_limits<double>::infinity();

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = lr_at(epoch, cfg);
    std::vector<size_t> order = train_idx;
    shuffle_rng.shuffle(order);

    double sum_loss = 0, sum_cd1 = 0, sum_cd2 = 0, sum_pmd = 0;
    int64_t batch_count = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      double inv_n = 1.0 / static_cast<double>(end - start);
      ++batch_count;

      for (size_t b = start; b < end; ++b) {
        const ShapePair& pair = data[order[b]];
        auto traces = net.forward(pair.partial, noise_rng);
        Tensor target = pair.complete.to_tensor();
        Tensor loss = total_loss(traces, target, cfg.pmd_weight, cfg.emd_weight,
                                 cfg.emd_iterations);
        double loss_val = loss.value();
        if (!std::isfinite(loss_val))
          diagnose_nonfinite(traces, pair.complete, cfg.pmd_weight, cfg.emd_weight, epoch + 1,
                             batch_count);
        scale(loss, inv_n).backward();

        NoGradGuard ng;
        PointCloud out = traces.back().output_cloud();
        sum_loss += loss_val;
        sum_cd1 += cloud_cd(out, pair.complete, ChamferNorm::L1);
        sum_cd2 += cloud_cd(out, pair.complete, ChamferNorm::L2);
        sum_pmd += pmd_value(traces);
      }

      if (cfg.clip_norm > 0) {
        double sq = 0;
        for (auto& [name, p] : net.params().items())
          for (double g : p.grad()) sq += g * g;
        double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) {
          double s = cfg.clip_norm / norm;
          for (auto& [name, p] : net.params().items()) {
            // grads live on the impl; rescale through accumulate-by-scaling
            auto& impl = *p.impl();
            for (double& g : impl.grad) g *= s;
          }
        }
      }
      adam_step(net.params(), adam, lr);
      net.params().zero_grads();
    }

    double n_train = static_cast<double>(order.size());
    EpochMetrics m;
    m.epoch = epoch + 1;
    m.lr = lr;
    m.loss = sum_loss / n_train;
    m.cd_l1 = sum_cd1 / n_train;
    m.cd_l2 = sum_cd2 / n_train;
    m.pmd = sum_pmd / n_train;
    result.history.push_back(m);

    double vcd = val_cd_l2();
    if (vcd < result.best_val_cd_l2) {
      result.best_val_cd_l2 = vcd;
      result.best_epoch = epoch + 1;
      if (writing) save_checkpoint(out_path("best.pmpk"), net);
    }
    if (writing && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04lld.pmpk", static_cast<long long>(epoch + 1));
      save_checkpoint(out_path(name), net);
    }
  }

  if (writing) {
    save_checkpoint(out_path("final.pmpk"), net);
    std::ofstream csv(out_path("metrics.csv"));
    if (!csv) throw std::runtime_error("train: cannot write " + out_path("metrics.csv"));
    csv << metrics_csv(result.history);
  }
  return result;
}

}  // namespace pmp
