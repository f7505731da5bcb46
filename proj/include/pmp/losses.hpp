#pragma once

#include <cstdint>
#include <vector>

#include "pmp/geom.hpp"
#include "pmp/tensor.hpp"
#include "pmp/trace.hpp"

namespace pmp {

// L1: per-point mean of Euclidean nearest-neighbor distances, both directions
// summed. L2: the same with squared distances.
enum class ChamferNorm { L1, L2 };

// Differentiable at generic inputs where the nearest-neighbor assignment is
// locally stable; x, y are [N x 3] tensors.
Tensor chamfer(const Tensor& x, const Tensor& y, ChamferNorm norm);
double chamfer_value(const PointCloud& x, const PointCloud& y, ChamferNorm norm);

struct Assignment {
  std::vector<int64_t> mapping;  // x index -> y index, a bijection
  double total_cost = 0.0;       // mean per-point Euclidean distance
};

// Optimal assignment (O(N^3) shortest augmenting paths). Capped at N <= 512.
Assignment emd_exact(const PointCloud& x, const PointCloud& y);

// Auction with epsilon scaling: epsilon starts at max-cost/4 and divides by 4
// until it falls below 1/(4N); `iterations` caps the bidding rounds spent in
// each scaling phase, any persons still unassigned at the cap are matched
// greedily. Cost never beats emd_exact.
Assignment emd_approx(const PointCloud& x, const PointCloud& y, int64_t iterations);

// Mean per-point distance under a fixed mapping, as a tape expression.
Tensor emd_cost(const Tensor& x, const Tensor& y, const std::vector<int64_t>& mapping);

// Total path length: sum over steps and points of the displacement norms.
Tensor pmd(const std::vector<StepTrace>& traces);

// Sum over steps of chamfer-L1(step output, target) + pmd_weight * pmd.
// emd_weight > 0 additionally charges the final output's assignment cost
// (mapping from emd_approx with `emd_iterations` rounds per phase).
Tensor total_loss(const std::vector<StepTrace>& traces, const Tensor& target, double pmd_weight,
                  double emd_weight = 0.0, int64_t emd_iterations = 50);

}  // namespace pmp
