#include "pmp/geom.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace pmp {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

PointCloud PointCloud::from_tensor(const Tensor& t) {
  check(t.rank() == 2 && t.cols() == 3,
        "point cloud: [N,3] tensor required, got " + shape_str(t.shape()));
  PointCloud pc;
  pc.points.resize(static_cast<size_t>(t.rows()));
  const auto& v = t.values();
  for (int64_t i = 0; i < t.rows(); ++i)
    pc.points[i] = {v[i * 3], v[i * 3 + 1], v[i * 3 + 2]};
  return pc;
}

Tensor PointCloud::to_tensor(bool requires_grad) const {
  std::vector<double> v;
  v.reserve(points.size() * 3);
  for (const Vec3& p : points) {
    v.push_back(p[0]);
    v.push_back(p[1]);
    v.push_back(p[2]);
  }
  return Tensor::from({size(), 3}, std::move(v), requires_grad);
}

std::vector<int64_t> farthest_point_sample(const PointCloud& cloud, int64_t s) {
  int64_t n = cloud.size();
  check(s >= 1 && s <= n, "farthest_point_sample: need 1 <= s <= N, got s=" + std::to_string(s) +
                              " N=" + std::to_string(n));
  std::vector<int64_t> picked;
  picked.reserve(static_cast<size_t>(s));
  std::vector<double> min_d2(static_cast<size_t>(n));
  std::vector<uint8_t> taken(static_cast<size_t>(n), 0);

  picked.push_back(0);
  taken[0] = 1;
  for (int64_t i = 0; i < n; ++i) min_d2[i] = dist2(cloud.points[i], cloud.points[0]);

  while (static_cast<int64_t>(picked.size()) < s) {
    int64_t best = -1;
    double best_d = -1.0;
    for (int64_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (min_d2[i] > best_d) {  // strict: ties fall to the lowest index
        best_d = min_d2[i];
        best = i;
      }
    }
    picked.push_back(best);
    taken[best] = 1;
    for (int64_t i = 0; i < n; ++i) {
      double d = dist2(cloud.points[i], cloud.points[best]);
      if (d < min_d2[i]) min_d2[i] = d;
    }
  }
  return picked;
}

NeighborIndex ball_query(const PointCloud& cloud, const std::vector<int64_t>& centers,
                         double radius, int64_t m) {
  int64_t n = cloud.size();
  check(n > 0, "ball_query: empty cloud");
  check(m >= 1, "ball_query: need m >= 1, got " + std::to_string(m));
  check(radius > 0.0, "ball_query: need radius > 0");
  for (int64_t c : centers)
    check(c >= 0 && c < n, "ball_query: center index " + std::to_string(c) + " out of range");

  NeighborIndex out;
  out.centers = centers;
  out.group_size = m;
  out.neighbors.assign(centers.size() * static_cast<size_t>(m), 0);
  out.valid.assign(centers.size() * static_cast<size_t>(m), 0);
  double r2 = radius * radius;

  for (size_t ci = 0; ci < centers.size(); ++ci) {
    const Vec3& c = cloud.points[centers[ci]];
    int64_t found = 0;
    int64_t* row = out.neighbors.data() + ci * m;
    uint8_t* vrow = out.valid.data() + ci * m;
    for (int64_t j = 0; j < n && found < m; ++j) {
      if (dist2(cloud.points[j], c) <= r2) {
        row[found] = j;
        vrow[found] = 1;
        ++found;
      }
    }
    // the center itself is always within radius, so found >= 1
    for (int64_t t = found; t < m; ++t) row[t] = row[0];
  }
  return out;
}

ThreeNN three_nn(const PointCloud& fine, const PointCloud& coarse) {
  int64_t nf = fine.size(), nc = coarse.size();
  check(nc > 0, "three_nn: empty coarse cloud");
  ThreeNN out;
  out.k = std::min<int64_t>(3, nc);
  out.idx.resize(static_cast<size_t>(nf * out.k));
  out.w.resize(static_cast<size_t>(nf * out.k));

  std::vector<std::pair<double, int64_t>> near(static_cast<size_t>(out.k));
  for (int64_t i = 0; i < nf; ++i) {
    for (int64_t t = 0; t < out.k; ++t) near[t] = {1e300, -1};
    for (int64_t j = 0; j < nc; ++j) {
      double d = dist2(fine.points[i], coarse.points[j]);
      // insertion keeps (distance, index) sorted, so ties prefer lower index
      for (int64_t t = 0; t < out.k; ++t) {
        if (d < near[t].first) {
          for (int64_t u = out.k - 1; u > t; --u) near[u] = near[u - 1];
          near[t] = {d, j};
          break;
        }
      }
    }
    double sum = 0.0;
    for (int64_t t = 0; t < out.k; ++t) sum += 1.0 / (near[t].first + 1e-8);
    for (int64_t t = 0; t < out.k; ++t) {
      out.idx[i * out.k + t] = near[t].second;
      out.w[i * out.k + t] = (1.0 / (near[t].first + 1e-8)) / sum;
    }
  }
  return out;
}

Tensor three_nn_interpolate(const Tensor& coarse_xyz, const Tensor& fine_xyz,
                            const Tensor& features) {
  check(coarse_xyz.rank() == 2 && coarse_xyz.cols() == 3 && fine_xyz.rank() == 2 &&
            fine_xyz.cols() == 3,
        "three_nn_interpolate: [N,3] coordinate tensors required, got " +
            shape_str(coarse_xyz.shape()) + " and " + shape_str(fine_xyz.shape()));
  check(features.rank() == 2 && features.rows() == coarse_xyz.rows(),
        "three_nn_interpolate: features " + shape_str(features.shape()) +
            " do not match coarse cloud of " + std::to_string(coarse_xyz.rows()) + " points");
  ThreeNN nn =
      three_nn(PointCloud::from_tensor(fine_xyz), PointCloud::from_tensor(coarse_xyz));
  int64_t n = fine_xyz.rows();

  // a single coarse point gets weight exactly 1 regardless of distance
  if (nn.k == 1) return gather_rows(features, std::move(nn.idx));

  // neighbor choice stays fixed, but the weights are rebuilt on the tape so
  // coordinate gradients flow through them
  std::vector<std::vector<int64_t>> slot(static_cast<size_t>(nn.k));
  for (int64_t t = 0; t < nn.k; ++t) {
    slot[static_cast<size_t>(t)].resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
      slot[static_cast<size_t>(t)][static_cast<size_t>(i)] = nn.idx[i * nn.k + t];
  }

  std::vector<Tensor> inv(static_cast<size_t>(nn.k));
  for (int64_t t = 0; t < nn.k; ++t) {
    Tensor diff = sub(fine_xyz, gather_rows(coarse_xyz, slot[static_cast<size_t>(t)]));
    Tensor d2 = sum_axis(mul(diff, diff), 1);
    inv[static_cast<size_t>(t)] = reciprocal(add(d2, Tensor::full({n}, 1e-8)));
  }
  Tensor denom = inv[0];
  for (int64_t t = 1; t < nn.k; ++t) denom = add(denom, inv[static_cast<size_t>(t)]);
  Tensor inv_denom = reciprocal(denom);

  Tensor ones = Tensor::full({1, features.cols()}, 1.0);
  Tensor out;
  for (int64_t t = 0; t < nn.k; ++t) {
    Tensor w = reshape(mul(inv[static_cast<size_t>(t)], inv_denom), {n, 1});
    Tensor part = mul(matmul(w, ones), gather_rows(features, slot[static_cast<size_t>(t)]));
    out = t == 0 ? part : add(out, part);
  }
  return out;
}

Tensor three_nn_interpolate(const PointCloud& coarse, const PointCloud& fine,
                            const Tensor& features) {
  return three_nn_interpolate(coarse.to_tensor(), fine.to_tensor(), features);
}

}  // namespace pmp
