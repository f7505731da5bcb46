#include "pmp/net.hpp"

#include <cmath>
#include <stdexcept>

namespace pmp {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::vector<int64_t> group_center_rows(int64_t s, int64_t m) {
  std::vector<int64_t> idx(static_cast<size_t>(s * m));
  for (int64_t c = 0; c < s; ++c)
    for (int64_t t = 0; t < m; ++t) idx[c * m + t] = c;
  return idx;
}

}  // namespace

RpaVariant rpa_variant_from_string(const std::string& s) {
  if (s == "rpa") return RpaVariant::Rpa;
  if (s == "nopath") return RpaVariant::NoPath;
  if (s == "add") return RpaVariant::Add;
  if (s == "gru") return RpaVariant::Gru;
  throw std::invalid_argument("unknown rpa variant: " + s +
                              " (expected rpa|nopath|add|gru)");
}

std::string to_string(RpaVariant v) {
  switch (v) {
    case RpaVariant::Rpa: return "rpa";
    case RpaVariant::NoPath: return "nopath";
    case RpaVariant::Add: return "add";
    case RpaVariant::Gru: return "gru";
  }
  return "rpa";
}

NetConfig NetConfig::full_scale() {
  NetConfig c;
  c.points = 2048;
  c.sa1.centers = 512;
  c.sa2.centers = 128;
  return c;
}

void NetConfig::validate() const {
  check(points >= 1, "config: points must be positive");
  check(sa1.centers >= 1 && sa2.centers >= 1, "config: sampling levels need at least one center");
  check(points >= sa1.centers,
        "config: points (" + std::to_string(points) + ") must cover sa1 centers (" +
            std::to_string(sa1.centers) + ")");
  check(sa1.centers >= sa2.centers,
        "config: sa1 centers (" + std::to_string(sa1.centers) + ") must cover sa2 centers (" +
            std::to_string(sa2.centers) + ")");
  check(sa1.nsample >= 1 && sa2.nsample >= 1, "config: nsample must be positive");
  check(sa1.radius > 0.0 && sa2.radius > 0.0, "config: radii must be positive");
  for (const auto* mlp : {&sa1.mlp, &sa2.mlp, &sa3_mlp, &fp1_mlp, &fp2_mlp, &fp3_mlp, &head_mlp})
    check(!mlp->empty(), "config: empty mlp width list");
  check(head_mlp.back() == 3, "config: displacement head must end in width 3");
  check(steps >= 1, "config: steps must be positive");
  check(static_cast<int>(radius_schedule.size()) == steps,
        "config: radius schedule has " + std::to_string(radius_schedule.size()) +
            " entries for " + std::to_string(steps) + " steps");
  for (double r : radius_schedule) check(r > 0.0, "config: radius scales must be positive");
  check(noise_dim >= 0, "config: noise_dim must be nonnegative");
  check(noise_stddev >= 0.0, "config: noise_stddev must be nonnegative");
}

Tensor& ParamStore::add(const std::string& name, Shape shape) {
  check(!has(name), "params: duplicate name " + name);
  index_[name] = items_.size();
  items_.emplace_back(name, Tensor::zeros(std::move(shape), true));
  return items_.back().second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  check(it != index_.end(), "params: unknown name " + name);
  return items_[it->second].second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  check(it != index_.end(), "params: unknown name " + name);
  return items_[it->second].second;
}

int64_t ParamStore::total_size() const {
  int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& [name, t] : items_) t.zero_grad();
}

PmpNet::PmpNet(NetConfig cfg, uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  register_params();
  init_params(init_seed);
}

std::string PmpNet::step_prefix(int step) const {
  return cfg_.per_step_encoder ? "s" + std::to_string(step) + "." : "";
}

void PmpNet::register_mlp(const std::string& prefix, int64_t in_width,
                          const std::vector<int64_t>& widths) {
  int64_t in = in_width;
  for (size_t i = 0; i < widths.size(); ++i) {
    params_.add(prefix + ".w" + std::to_string(i), {in, widths[i]});
    params_.add(prefix + ".b" + std::to_string(i), {widths[i]});
    in = widths[i];
  }
}

void PmpNet::register_params() {
  int copies = cfg_.per_step_encoder ? cfg_.steps : 1;
  for (int s = 1; s <= copies; ++s) {
    std::string p = cfg_.per_step_encoder ? "s" + std::to_string(s) + "." : "";
    register_mlp(p + "enc.sa1", 3, cfg_.sa1.mlp);
    register_mlp(p + "enc.sa2", 3 + cfg_.sa1.mlp.back(), cfg_.sa2.mlp);
    register_mlp(p + "enc.sa3", 3 + cfg_.sa2.mlp.back(), cfg_.sa3_mlp);
    register_mlp(p + "fp1", cfg_.sa3_mlp.back() + cfg_.sa2.mlp.back(), cfg_.fp1_mlp);
    register_mlp(p + "fp2", cfg_.fp1_mlp.back() + cfg_.sa1.mlp.back(), cfg_.fp2_mlp);
    register_mlp(p + "fp3", cfg_.fp2_mlp.back() + 3, cfg_.fp3_mlp);
    register_mlp(p + "head", cfg_.fp3_mlp.back() + cfg_.noise_dim, cfg_.head_mlp);
  }
  if (cfg_.rpa_variant == RpaVariant::Rpa || cfg_.rpa_variant == RpaVariant::Gru) {
    int64_t widths[3] = {cfg_.fp1_mlp.back(), cfg_.fp2_mlp.back(), cfg_.fp3_mlp.back()};
    for (int s = 1; s <= cfg_.steps; ++s) {
      for (int l = 1; l <= 3; ++l) {
        int64_t c = widths[l - 1];
        std::string p = "rpa.s" + std::to_string(s) + ".l" + std::to_string(l);
        params_.add(p + ".wz", {2 * c, c});
        params_.add(p + ".bz", {c});
        params_.add(p + ".wr", {2 * c, c});
        params_.add(p + ".br", {c});
        params_.add(p + ".wh", {2 * c, c});
        params_.add(p + ".bh", {c});
      }
    }
  }
}

void PmpNet::init_params(uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, t] : params_.items()) {
    auto& v = t.mutable_values();
    if (t.rank() == 2) {
      double limit = std::sqrt(6.0 / static_cast<double>(t.dim(0) + t.dim(1)));
      for (double& x : v) x = rng.uniform(-limit, limit);
    } else {
      std::fill(v.begin(), v.end(), 0.0);  // biases
    }
  }
}

void PmpNet::zero_all_params() {
  for (auto& [name, t] : params_.items()) {
    auto& v = t.mutable_values();
    std::fill(v.begin(), v.end(), 0.0);
  }
}

Tensor PmpNet::mlp_forward(const Tensor& in, const std::string& prefix, bool relu_on_last) const {
  Tensor x = in;
  for (size_t i = 0;; ++i) {
    std::string wname = prefix + ".w" + std::to_string(i);
    if (!params_.has(wname)) {
      check(i > 0, "net: no layers registered under " + prefix);
      break;
    }
    bool last = !params_.has(prefix + ".w" + std::to_string(i + 1));
    x = add(matmul(x, params_.at(wname)), params_.at(prefix + ".b" + std::to_string(i)));
    if (!last || relu_on_last) x = relu(x);
  }
  return x;
}

EncoderOutputs PmpNet::encode(const Tensor& cloud, int step) const {
  check(cloud.rank() == 2 && cloud.cols() == 3,
        "encode: [N,3] cloud required, got " + shape_str(cloud.shape()));
  check(cloud.rows() >= cfg_.sa1.centers,
        "encode: cloud of " + std::to_string(cloud.rows()) + " points is below the " +
            std::to_string(cfg_.sa1.centers) + "-center sampling level");
  std::string p = step_prefix(step);

  EncoderOutputs enc;
  enc.l0_xyz = cloud;
  enc.pc0 = PointCloud::from_tensor(cloud);

  // level 1: sample, group relative coordinates, shared mlp, max-pool
  auto idx1 = farthest_point_sample(enc.pc0, cfg_.sa1.centers);
  auto nb1 = ball_query(enc.pc0, idx1, cfg_.sa1.radius, cfg_.sa1.nsample);
  enc.l1_xyz = gather_rows(cloud, idx1);
  Tensor rel1 = sub(gather_rows(cloud, nb1.neighbors),
                    gather_rows(enc.l1_xyz, group_center_rows(cfg_.sa1.centers, nb1.group_size)));
  Tensor g1 = mlp_forward(rel1, p + "enc.sa1", true);
  enc.l1_feat =
      max_axis(reshape(g1, {cfg_.sa1.centers, nb1.group_size, cfg_.sa1.mlp.back()}), 1);
  enc.pc1 = PointCloud::from_tensor(enc.l1_xyz);

  // level 2: same, with level-1 features appended to the relative coordinates
  auto idx2 = farthest_point_sample(enc.pc1, cfg_.sa2.centers);
  auto nb2 = ball_query(enc.pc1, idx2, cfg_.sa2.radius, cfg_.sa2.nsample);
  enc.l2_xyz = gather_rows(enc.l1_xyz, idx2);
  Tensor rel2 = sub(gather_rows(enc.l1_xyz, nb2.neighbors),
                    gather_rows(enc.l2_xyz, group_center_rows(cfg_.sa2.centers, nb2.group_size)));
  Tensor in2 = concat_cols(rel2, gather_rows(enc.l1_feat, nb2.neighbors));
  Tensor g2 = mlp_forward(in2, p + "enc.sa2", true);
  enc.l2_feat =
      max_axis(reshape(g2, {cfg_.sa2.centers, nb2.group_size, cfg_.sa2.mlp.back()}), 1);
  enc.pc2 = PointCloud::from_tensor(enc.l2_xyz);

  // level 3: one global group over all remaining centers
  Tensor in3 = concat_cols(enc.l2_xyz, enc.l2_feat);
  Tensor g3 = mlp_forward(in3, p + "enc.sa3", true);
  enc.global_feat = reshape(max_axis(g3, 0), {1, cfg_.sa3_mlp.back()});
  return enc;
}

Tensor PmpNet::rpa_cell(const Tensor& f, const Tensor& h_prev, int step, int level) const {
  check(f.rank() == 2 && h_prev.rank() == 2 && f.shape() == h_prev.shape(),
        "rpa_cell: feature/state shapes must match, got " + shape_str(f.shape()) + " vs " +
            shape_str(h_prev.shape()));
  check(step >= 1 && step <= cfg_.steps, "rpa_cell: step out of range");
  check(level >= 1 && level <= 3, "rpa_cell: level out of range");

  switch (cfg_.rpa_variant) {
    case RpaVariant::NoPath:
      return f;
    case RpaVariant::Add:
      return add(f, h_prev);
    default:
      break;
  }

  std::string p = "rpa.s" + std::to_string(step) + ".l" + std::to_string(level);
  Tensor fh = concat_cols(f, h_prev);
  Tensor z = sigmoid(add(matmul(fh, params_.at(p + ".wz")), params_.at(p + ".bz")));
  Tensor r = sigmoid(add(matmul(fh, params_.at(p + ".wr")), params_.at(p + ".br")));
  Tensor cand_in = concat_cols(mul(r, h_prev), f);
  Tensor cand = relu(add(matmul(cand_in, params_.at(p + ".wh")), params_.at(p + ".bh")));
  Tensor keep = sub(Tensor::full(z.shape(), 1.0), z);
  const Tensor& carry = (cfg_.rpa_variant == RpaVariant::Gru) ? h_prev : f;
  return add(mul(z, cand), mul(keep, carry));
}

PropagateResult PmpNet::propagate(const EncoderOutputs& enc, const RpaState& prev,
                                  int step) const {
  check(prev.empty() || prev.h.size() == 3, "propagate: carried state needs 3 levels");
  std::string p = step_prefix(step);

  auto prev_h = [&](int level, int64_t rows, int64_t width) -> Tensor {
    if (prev.empty()) return Tensor::zeros({rows, width});
    const Tensor& h = prev.h[static_cast<size_t>(level - 1)];
    check(h.rows() == rows && h.cols() == width,
          "propagate: carried state " + shape_str(h.shape()) + " does not fit level " +
              std::to_string(level));
    return h;
  };

  // the single global feature is copied onto every level-2 center
  PointCloud global_carrier;
  global_carrier.points = {{0.0, 0.0, 0.0}};

  PropagateResult out;
  Tensor interp1 = three_nn_interpolate(global_carrier, enc.pc2, enc.global_feat);
  Tensor f1 = mlp_forward(concat_cols(interp1, enc.l2_feat), p + "fp1", true);
  Tensor h1 = rpa_cell(f1, prev_h(1, f1.rows(), f1.cols()), step, 1);

  Tensor interp2 = three_nn_interpolate(enc.l2_xyz, enc.l1_xyz, h1);
  Tensor f2 = mlp_forward(concat_cols(interp2, enc.l1_feat), p + "fp2", true);
  Tensor h2 = rpa_cell(f2, prev_h(2, f2.rows(), f2.cols()), step, 2);

  Tensor interp3 = three_nn_interpolate(enc.l1_xyz, enc.l0_xyz, h2);
  Tensor f3 = mlp_forward(concat_cols(interp3, enc.l0_xyz), p + "fp3", true);
  Tensor h3 = rpa_cell(f3, prev_h(3, f3.rows(), f3.cols()), step, 3);

  out.point_feat = h3;
  out.state.h = {h1, h2, h3};
  return out;
}

Tensor PmpNet::displacement_head(const Tensor& feat, const Tensor& noise, int step) const {
  check(step >= 1 && step <= cfg_.steps, "displacement_head: step out of range");
  Tensor in = feat;
  if (cfg_.noise_dim > 0) {
    check(noise.defined() && noise.rank() == 2 && noise.rows() == feat.rows() &&
              noise.cols() == cfg_.noise_dim,
          "displacement_head: noise must be [N," + std::to_string(cfg_.noise_dim) + "]");
    in = concat_cols(feat, noise);
  }
  Tensor raw = mlp_forward(in, step_prefix(step) + "head", false);
  return scale(tanh(raw), cfg_.radius_schedule[static_cast<size_t>(step - 1)]);
}

std::vector<StepTrace> PmpNet::forward(const PointCloud& cloud,
                                       const std::vector<Tensor>& noise) const {
  size_t want = cfg_.share_noise_across_steps ? 1 : static_cast<size_t>(cfg_.steps);
  if (cfg_.noise_dim == 0) want = noise.size();  // ignored entirely
  check(noise.size() == want || cfg_.noise_dim == 0,
        "forward: expected " + std::to_string(want) + " noise tensors, got " +
            std::to_string(noise.size()));

  Tensor x = cloud.to_tensor();
  RpaState state;
  std::vector<StepTrace> traces;
  traces.reserve(static_cast<size_t>(cfg_.steps));
  for (int k = 1; k <= cfg_.steps; ++k) {
    EncoderOutputs enc = encode(x, k);
    PropagateResult pr = propagate(enc, state, k);
    Tensor nz;
    if (cfg_.noise_dim > 0)
      nz = cfg_.share_noise_across_steps ? noise[0] : noise[static_cast<size_t>(k - 1)];
    Tensor delta = displacement_head(pr.point_feat, nz, k);
    Tensor out = add(x, delta);
    traces.push_back({k, x, delta, out, cfg_.radius_schedule[static_cast<size_t>(k - 1)]});
    state = std::move(pr.state);
    x = out;
  }
  return traces;
}

std::vector<StepTrace> PmpNet::forward(const PointCloud& cloud, Rng& rng) const {
  std::vector<Tensor> noise;
  if (cfg_.noise_dim > 0) {
    int draws = cfg_.share_noise_across_steps ? 1 : cfg_.steps;
    for (int i = 0; i < draws; ++i) noise.push_back(sample_noise(cloud.size(), rng));
  }
  return forward(cloud, noise);
}

Tensor PmpNet::sample_noise(int64_t n, Rng& rng) const {
  return sample_noise(n, cfg_.noise_dim, cfg_.noise_stddev, rng);
}

Tensor PmpNet::sample_noise(int64_t n, int64_t dim, double stddev, Rng& rng) {
  check(n >= 0 && dim >= 0, "sample_noise: negative shape");
  std::vector<double> v(static_cast<size_t>(n * dim));
  for (double& x : v) x = rng.gaussian(0.0, stddev);
  return Tensor::from({n, dim}, std::move(v));
}

}  // namespace pmp
