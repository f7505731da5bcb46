#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pmp/geom.hpp"
#include "pmp/rng.hpp"
#include "pmp/tensor.hpp"
#include "pmp/trace.hpp"

namespace pmp {

// How the per-level recurrent cell fuses current features f with the hidden
// state h carried from the previous step:
//   Rpa    - gated blend biased toward f: out = z*cand + (1-z)*f
//   Gru    - the conventional blend toward h: out = z*cand + (1-z)*h
//   Add    - out = f + h
//   NoPath - out = f (history discarded)
enum class RpaVariant { Rpa, NoPath, Add, Gru };

RpaVariant rpa_variant_from_string(const std::string& s);
std::string to_string(RpaVariant v);

struct SaLevel {
  int64_t centers = 0;
  double radius = 0.0;
  int64_t nsample = 0;
  std::vector<int64_t> mlp;
};

struct NetConfig {
  int64_t points = 256;
  SaLevel sa1{64, 0.2, 32, {64, 64, 128}};
  SaLevel sa2{16, 0.4, 32, {128, 128, 256}};
  std::vector<int64_t> sa3_mlp{256, 512, 1024};
  std::vector<int64_t> fp1_mlp{256, 256};
  std::vector<int64_t> fp2_mlp{256, 128};
  std::vector<int64_t> fp3_mlp{128, 128, 128};
  std::vector<int64_t> head_mlp{128, 64, 3};  // final entry must be 3
  int64_t noise_dim = 32;
  double noise_stddev = 1.0;
  int steps = 3;
  std::vector<double> radius_schedule{1.0, 0.1, 0.01};
  RpaVariant rpa_variant = RpaVariant::Rpa;
  bool share_noise_across_steps = true;  // false: fresh draw per step
  bool per_step_encoder = false;         // true: encoder/propagation/head weights per step

  static NetConfig desk() { return NetConfig{}; }
  static NetConfig full_scale();  // 2048 points, 512/128 centers

  void validate() const;  // throws std::invalid_argument on inconsistency
};

// Named parameter registry with a stable order (registration order), which
// fixes both checkpoint layout and init draws.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Shape shape);
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  int64_t count() const { return static_cast<int64_t>(items_.size()); }
  int64_t total_size() const;
  void zero_grads();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, size_t> index_;
};

struct EncoderOutputs {
  Tensor l0_xyz;               // [N x 3], the analyzed cloud
  PointCloud pc0, pc1, pc2;    // value snapshots for the geometric kernels
  Tensor l1_xyz, l2_xyz;       // sampled center coordinates
  Tensor l1_feat, l2_feat;     // per-level features
  Tensor global_feat;          // [1 x C3]
};

// Hidden features per propagation level, carried across steps. Rows align
// positionally with the next step's sampled centers (deterministic sampling
// keeps selections nearly stable between small deformations). Empty = step 1.
struct RpaState {
  std::vector<Tensor> h;  // levels 1..3
  bool empty() const { return h.empty(); }
};

struct PropagateResult {
  Tensor point_feat;  // [N x C], final per-point feature
  RpaState state;
};

class PmpNet {
 public:
  PmpNet(NetConfig cfg, uint64_t init_seed);

  const NetConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Set-abstraction pyramid over the current cloud. step matters only with
  // per-step weights.
  EncoderOutputs encode(const Tensor& cloud, int step = 1) const;

  // f: current level features, h_prev: hidden state of the same level from
  // the previous step; equal widths required.
  Tensor rpa_cell(const Tensor& f, const Tensor& h_prev, int step, int level) const;

  // Three interpolation levels down to per-point features, each fused with
  // the carried hidden state of its level.
  PropagateResult propagate(const EncoderOutputs& enc, const RpaState& prev, int step) const;

  // delta = radius_schedule[step-1] * tanh(mlp([feat : noise]))
  Tensor displacement_head(const Tensor& feat, const Tensor& noise, int step) const;

  // noise: one tensor when noise is shared across steps, otherwise `steps`
  // tensors, each [N x noise_dim]
  std::vector<StepTrace> forward(const PointCloud& cloud, const std::vector<Tensor>& noise) const;
  std::vector<StepTrace> forward(const PointCloud& cloud, Rng& rng) const;

  Tensor sample_noise(int64_t n, Rng& rng) const;
  static Tensor sample_noise(int64_t n, int64_t dim, double stddev, Rng& rng);

  void init_params(uint64_t seed);  // Xavier-uniform weights, zero biases
  void zero_all_params();

 private:
  void register_params();
  void register_mlp(const std::string& prefix, int64_t in_width,
                    const std::vector<int64_t>& widths);
  Tensor mlp_forward(const Tensor& in, const std::string& prefix, bool relu_on_last) const;
  std::string step_prefix(int step) const;

  NetConfig cfg_;
  ParamStore params_;
};

}  // namespace pmp
