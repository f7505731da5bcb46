#pragma once

// Optimization loop: Adam with stepwise-decayed learning rate, shuffled
// mini-batches, per-epoch metric logging, and checkpointing.

#include <cstdint>
#include <string>
#include <vector>

#include "pmp/config.hpp"
#include "pmp/data.hpp"
#include "pmp/net.hpp"

namespace pmp {

struct TrainConfig {
  double lr = 1e-3;
  double lr_decay = 0.5;
  int64_t lr_decay_every = 20;
  int64_t batch_size = 8;
  int64_t epochs = 30;
  double pmd_weight = 1e-2;
  double emd_weight = 0.0;       // extra EMD term on the final step, off by default
  int64_t emd_iterations = 50;
  double clip_norm = 0.0;        // 0 disables gradient clipping
  double val_fraction = 0.2;
  int64_t checkpoint_every = 0;  // 0: only final + best
  uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

TrainConfig train_config_from_kv(const KvMap& kv, TrainConfig base = TrainConfig());
KvMap train_config_to_kv(const TrainConfig& cfg);

// Adam with bias correction. Moment buffers are laid out parallel to the
// ParamStore registration order and sized lazily on the first step.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;
  std::vector<std::vector<double>> m, v;
};

void adam_step(ParamStore& params, AdamState& state, double lr);

// lr(epoch) = lr0 * decay^floor(epoch / decay_every), epoch 0-based.
double lr_at(int64_t epoch, const TrainConfig& cfg);

struct EpochMetrics {
  int64_t epoch = 0;  // 1-based row index in the log
  double lr = 0;
  double loss = 0;    // mean total loss over training elements
  double cd_l1 = 0;   // mean final-step chamfer vs target
  double cd_l2 = 0;
  double pmd = 0;     // mean unweighted path-length sum
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  double best_val_cd_l2 = 0;
  int64_t best_epoch = 0;  // 0 when no epochs ran
};

std::string metrics_csv(const std::vector<EpochMetrics>& history);

// Deterministic validation split by FNV-1a hash of the pair id. When the
// split would leave either side empty the full dataset plays both roles.
bool is_validation_pair(const std::string& id, double val_fraction);

// Trains `net` in place. When out_dir is nonempty, writes metrics.csv,
// final.pmpk, best.pmpk (lowest validation CD-L2), and epoch_NNNN.pmpk every
// checkpoint_every epochs. epochs == 0 saves the initial parameters as
// final.pmpk and nothing else. Throws std::runtime_error naming the epoch,
// batch, and offending term if the loss goes non-finite.
TrainResult train(PmpNet& net, const std::vector<ShapePair>& data, const TrainConfig& cfg,
                  const std::string& out_dir = "");

}  // namespace pmp
