#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace pmp {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;
  // tape record; empty for leaves and untracked results
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(const std::vector<double>&)> backward_fn;
};

bool grad_enabled();

}  // namespace detail

// Disables tape recording for its scope. Results computed under the guard are
// plain values with no graph attached.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Dense row-major tensor of 64-bit floats with reverse-mode autodiff.
// Ops record a dynamic tape when any input requires grad; backward() walks the
// tape once, accumulates gradients additively into every tracked ancestor, and
// frees the tape records it visited. Gradients persist until zero_grad().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int64_t dim(int axis) const;
  int64_t numel() const;
  int64_t rows() const { return dim(0); }
  int64_t cols() const { return dim(1); }

  const std::vector<double>& values() const;
  std::vector<double>& mutable_values();  // in-place updates (optimizer); leaves only
  double value() const;                   // scalar convenience
  double at(std::initializer_list<int64_t> index) const;

  bool requires_grad() const;
  const std::vector<double>& grad() const;  // zeros-sized if never accumulated
  void zero_grad();

  // Scalar roots only. Seeds d(root)/d(root) = 1, accumulates into every
  // tracked ancestor's grad, then releases the visited tape records.
  void backward() const;

  // Number of tape records reachable from this tensor. Untracked results
  // report 0: they carry no graph at all.
  int64_t graph_nodes() const;

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// ---- operations ----
// Shapes are validated; violations throw std::invalid_argument naming both
// shapes. Gradient conventions: relu'(0) = 0, sqrt'(0) = 0 (subgradient
// choices, pinned so tests can rely on them).

Tensor matmul(const Tensor& a, const Tensor& b);

// add: identical shapes, or b of shape [C] broadcast across the rows of a
// (bias). sub/mul: identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor reciprocal(const Tensor& a);  // elementwise 1/x; callers keep x away from 0

// rank-2 tensors, equal row counts; joins along the last axis
Tensor concat_cols(const Tensor& a, const Tensor& b);

// reductions remove the reduced axis; max routes gradient to the first
// maximal element of each slice
Tensor max_axis(const Tensor& a, int axis);
Tensor mean_axis(const Tensor& a, int axis);
Tensor sum_axis(const Tensor& a, int axis);
Tensor sum_all(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);

// out[i] = a[idx[i]] for rank-2 a; backward scatter-adds into the source rows
Tensor gather_rows(const Tensor& a, std::vector<int64_t> idx);

// out[i] = sum_t w[i*k+t] * feats[idx[i*k+t]]; weights are fixed coefficients,
// gradient flows into feats only
Tensor blend_rows(const Tensor& feats, std::vector<int64_t> idx, std::vector<double> w, int64_t k);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace pmp
