#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pmp/tensor.hpp"

namespace pmp {

using Vec3 = std::array<double, 3>;

inline double dist2(const Vec3& a, const Vec3& b) {
  double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

struct PointCloud {
  std::vector<Vec3> points;

  int64_t size() const { return static_cast<int64_t>(points.size()); }
  bool empty() const { return points.empty(); }

  static PointCloud from_tensor(const Tensor& t);
  Tensor to_tensor(bool requires_grad = false) const;  // [N x 3] leaf
};

// Greedy max-min sampling. Starts at index 0; ties resolved toward the lowest
// index. s == N yields a permutation of all indices.
std::vector<int64_t> farthest_point_sample(const PointCloud& cloud, int64_t s);

struct NeighborIndex {
  std::vector<int64_t> centers;    // S center indices into the cloud
  std::vector<int64_t> neighbors;  // S x M, row-major
  std::vector<uint8_t> valid;      // S x M, 1 = real neighbor, 0 = padding
  int64_t group_size = 0;          // M
};

// Up to m neighbors within `radius` (inclusive) of each center, scanned in
// index order; slots beyond the found count repeat the first found neighbor.
NeighborIndex ball_query(const PointCloud& cloud, const std::vector<int64_t>& centers,
                         double radius, int64_t m);

struct ThreeNN {
  std::vector<int64_t> idx;  // N x k
  std::vector<double> w;     // N x k, nonnegative, rows sum to 1
  int64_t k = 0;             // min(3, coarse size)
};

// Inverse-squared-distance weights over the (up to) three nearest coarse
// points of every fine point: w ~ 1 / (d^2 + 1e-8), normalized per row.
ThreeNN three_nn(const PointCloud& fine, const PointCloud& coarse);

// Carries per-point features from the coarse cloud onto the fine cloud. The
// neighbor choice is fixed at the input values, but the inverse-distance
// weights are rebuilt as tape expressions, so gradients flow into `features`
// and into both coordinate tensors. Coordinates must be [*, 3].
Tensor three_nn_interpolate(const Tensor& coarse_xyz, const Tensor& fine_xyz,
                            const Tensor& features);

// Same interpolation with plain clouds; the coordinates enter as constants,
// so only `features` receives gradients.
Tensor three_nn_interpolate(const PointCloud& coarse, const PointCloud& fine,
                            const Tensor& features);

}  // namespace pmp
