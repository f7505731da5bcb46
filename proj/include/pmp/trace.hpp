#pragma once

#include <cmath>
#include <vector>

#include "pmp/geom.hpp"
#include "pmp/tensor.hpp"

namespace pmp {

// One deformation step: output = input + displacement, with the displacement
// bounded per axis by radius_scale. Tensors stay attached to the tape so step
// outputs can feed losses.
struct StepTrace {
  int step = 0;  // 1-based
  Tensor input;         // [N x 3]
  Tensor displacement;  // [N x 3]
  Tensor output;        // [N x 3]
  double radius_scale = 0.0;

  PointCloud input_cloud() const { return PointCloud::from_tensor(input); }
  PointCloud output_cloud() const { return PointCloud::from_tensor(output); }

  std::vector<double> path_lengths() const {
    const auto& d = displacement.values();
    std::vector<double> out(static_cast<size_t>(displacement.rows()));
    for (size_t i = 0; i < out.size(); ++i)
      out[i] = std::sqrt(d[i * 3] * d[i * 3] + d[i * 3 + 1] * d[i * 3 + 1] +
                         d[i * 3 + 2] * d[i * 3 + 2]);
    return out;
  }
};

}  // namespace pmp
