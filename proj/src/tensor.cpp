#include "pmp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace pmp {

namespace {

thread_local int nograd_depth = 0;

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

using detail::TensorImpl;

void ensure_grad(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), 0.0);
}

void accumulate(const std::shared_ptr<TensorImpl>& t, const std::vector<double>& g) {
  if (!t->requires_grad) return;
  ensure_grad(*t);
  for (size_t i = 0; i < g.size(); ++i) t->grad[i] += g[i];
}

// Builds the result node and records the tape entry when tracking is on and
// any parent is tracked.
Tensor make_op(Shape shape, std::vector<double> data,
               std::vector<std::shared_ptr<TensorImpl>> parents,
               std::function<void(const std::vector<double>&)> backward_fn) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  bool track = detail::grad_enabled();
  if (track) {
    track = false;
    for (const auto& p : parents)
      if (p->requires_grad) track = true;
  }
  if (track) {
    impl->requires_grad = true;
    impl->parents = std::move(parents);
    impl->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(impl));
}

}  // namespace

namespace detail {
bool grad_enabled() { return nograd_depth == 0; }
}  // namespace detail

NoGradGuard::NoGradGuard() { ++nograd_depth; }
NoGradGuard::~NoGradGuard() { --nograd_depth; }

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  int64_t n = shape_numel(shape);
  check(n >= 0, "tensor: negative dimension in " + shape_str(shape));
  impl->shape = std::move(shape);
  impl->data.assign(static_cast<size_t>(n), value);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  int64_t n = shape_numel(shape);
  check(n == static_cast<int64_t>(values.size()),
        "tensor: value count " + std::to_string(values.size()) + " does not fill shape " +
            shape_str(shape));
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

const Shape& Tensor::shape() const {
  check(defined(), "tensor: undefined");
  return impl_->shape;
}

int64_t Tensor::dim(int axis) const {
  const Shape& s = shape();
  check(axis >= 0 && axis < static_cast<int>(s.size()),
        "tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

int64_t Tensor::numel() const { return static_cast<int64_t>(values().size()); }

const std::vector<double>& Tensor::values() const {
  check(defined(), "tensor: undefined");
  return impl_->data;
}

std::vector<double>& Tensor::mutable_values() {
  check(defined(), "tensor: undefined");
  return impl_->data;
}

double Tensor::value() const {
  check(numel() == 1, "tensor: value() needs a one-element tensor, got " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<int64_t> index) const {
  const Shape& s = shape();
  check(index.size() == s.size(),
        "tensor: index rank " + std::to_string(index.size()) + " vs shape " + shape_str(s));
  int64_t flat = 0;
  int axis = 0;
  for (int64_t i : index) {
    check(i >= 0 && i < s[axis], "tensor: index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return impl_->data[static_cast<size_t>(flat)];
}

bool Tensor::requires_grad() const { return defined() && impl_->requires_grad; }

const std::vector<double>& Tensor::grad() const {
  check(defined(), "tensor: undefined");
  ensure_grad(*impl_);
  return impl_->grad;
}

void Tensor::zero_grad() {
  check(defined(), "tensor: undefined");
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::backward() const {
  check(defined(), "tensor: undefined");
  check(numel() == 1,
        "tensor: backward() needs a scalar root, got shape " + shape_str(shape()));
  if (!impl_->requires_grad) return;

  // reverse post-order: every node appears before its parents. Owning
  // pointers keep intermediates alive while earlier entries clear the
  // parent links that would otherwise be their last reference.
  std::vector<std::shared_ptr<TensorImpl>> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<std::shared_ptr<TensorImpl>, size_t>> stack;
  stack.emplace_back(impl_, 0);
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      std::shared_ptr<TensorImpl> p = node->parents[next++];
      if (p->requires_grad && !seen.count(p.get())) {
        seen.insert(p.get());
        stack.emplace_back(std::move(p), 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  std::reverse(order.begin(), order.end());

  ensure_grad(*impl_);
  impl_->grad[0] += 1.0;
  for (const auto& node : order) {
    if (node->backward_fn) {
      ensure_grad(*node);
      node->backward_fn(node->grad);
      // free the tape record; values and grads stay
      node->backward_fn = nullptr;
      node->parents.clear();
    }
  }
}

int64_t Tensor::graph_nodes() const {
  if (!defined()) return 0;
  std::unordered_set<TensorImpl*> seen;
  std::vector<TensorImpl*> stack{impl_.get()};
  int64_t count = 0;
  while (!stack.empty()) {
    TensorImpl* node = stack.back();
    stack.pop_back();
    if (seen.count(node)) continue;
    seen.insert(node);
    if (node->backward_fn) ++count;
    for (const auto& p : node->parents) stack.push_back(p.get());
  }
  return count;
}

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2,
        "matmul: rank-2 tensors required, got " + shape_str(a.shape()) + " x " +
            shape_str(b.shape()));
  check(a.cols() == b.rows(),
        "matmul: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
            shape_str(b.shape()));
  int64_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  const double* A = a.values().data();
  const double* B = b.values().data();
  for (int64_t i = 0; i < m; ++i) {
    double* crow = out.data() + i * n;
    const double* arow = A + i * k;
    for (int64_t p = 0; p < k; ++p) {
      double aip = arow[p];
      const double* brow = B + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  auto ai = a.impl(), bi = b.impl();
  return make_op({m, n}, std::move(out), {ai, bi}, [ai, bi, m, k, n](const std::vector<double>& g) {
    if (ai->requires_grad) {
      ensure_grad(*ai);
      // dA = dC * B^T
      for (int64_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        double* darow = ai->grad.data() + i * k;
        for (int64_t p = 0; p < k; ++p) {
          const double* brow = bi->data.data() + p * n;
          double acc = 0.0;
          for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          darow[p] += acc;
        }
      }
    }
    if (bi->requires_grad) {
      ensure_grad(*bi);
      // dB = A^T * dC
      for (int64_t i = 0; i < m; ++i) {
        const double* arow = ai->data.data() + i * k;
        const double* grow = g.data() + i * n;
        for (int64_t p = 0; p < k; ++p) {
          double aip = arow[p];
          if (aip == 0.0) continue;
          double* dbrow = bi->grad.data() + p * n;
          for (int64_t j = 0; j < n; ++j) dbrow[j] += aip * grow[j];
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.values());
    const auto& bv = b.values();
    for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    auto ai = a.impl(), bi = b.impl();
    return make_op(a.shape(), std::move(out), {ai, bi}, [ai, bi](const std::vector<double>& g) {
      accumulate(ai, g);
      accumulate(bi, g);
    });
  }
  // bias broadcast: b has shape [C], a's trailing dimension is C
  check(b.rank() == 1 && a.rank() >= 1 && a.dim(a.rank() - 1) == b.dim(0),
        "add: shapes incompatible: " + shape_str(a.shape()) + " + " + shape_str(b.shape()));
  int64_t c = b.dim(0);
  int64_t rows = a.numel() / std::max<int64_t>(c, 1);
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < c; ++j) out[r * c + j] += bv[j];
  auto ai = a.impl(), bi = b.impl();
  return make_op(a.shape(), std::move(out), {ai, bi},
                 [ai, bi, rows, c](const std::vector<double>& g) {
                   accumulate(ai, g);
                   if (bi->requires_grad) {
                     ensure_grad(*bi);
                     for (int64_t r = 0; r < rows; ++r)
                       for (int64_t j = 0; j < c; ++j) bi->grad[j] += g[r * c + j];
                   }
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(),
        "sub: shapes differ: " + shape_str(a.shape()) + " - " + shape_str(b.shape()));
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  auto ai = a.impl(), bi = b.impl();
  return make_op(a.shape(), std::move(out), {ai, bi}, [ai, bi](const std::vector<double>& g) {
    accumulate(ai, g);
    if (bi->requires_grad) {
      ensure_grad(*bi);
      for (size_t i = 0; i < g.size(); ++i) bi->grad[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(),
        "mul: shapes differ: " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  auto ai = a.impl(), bi = b.impl();
  return make_op(a.shape(), std::move(out), {ai, bi}, [ai, bi](const std::vector<double>& g) {
    if (ai->requires_grad) {
      ensure_grad(*ai);
      for (size_t i = 0; i < g.size(); ++i) ai->grad[i] += g[i] * bi->data[i];
    }
    if (bi->requires_grad) {
      ensure_grad(*bi);
      for (size_t i = 0; i < g.size(); ++i) bi->grad[i] += g[i] * ai->data[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.values());
  for (double& v : out) v *= s;
  auto ai = a.impl();
  return make_op(a.shape(), std::move(out), {ai}, [ai, s](const std::vector<double>& g) {
    ensure_grad(*ai);
    for (size_t i = 0; i < g.size(); ++i) ai->grad[i] += s * g[i];
  });
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd_factor_from_out) {
  std::vector<double> out(a.values());
  for (double& v : out) v = fwd(v);
  auto ai = a.impl();
  std::vector<double> saved = out;  // activation values for the backward pass
  return make_op(a.shape(), std::move(out), {ai},
                 [ai, saved = std::move(saved), bwd_factor_from_out](const std::vector<double>& g) {
                   ensure_grad(*ai);
                   for (size_t i = 0; i < g.size(); ++i)
                     ai->grad[i] += g[i] * bwd_factor_from_out(saved[i], ai->data[i]);
                 });
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double, double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double y, double) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); }, [](double y, double) { return 1.0 - y * y; });
}

Tensor sqrt(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::sqrt(x); },
      [](double y, double) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor reciprocal(const Tensor& a) {
  return unary_op(
      a, [](double x) { return 1.0 / x; }, [](double y, double) { return -y * y; });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2 && a.rows() == b.rows(),
        "concat_cols: need rank-2 tensors with equal rows: " + shape_str(a.shape()) + " | " +
            shape_str(b.shape()));
  int64_t n = a.rows(), ca = a.cols(), cb = b.cols();
  std::vector<double> out(static_cast<size_t>(n * (ca + cb)));
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int64_t r = 0; r < n; ++r) {
    std::copy_n(av.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(bv.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  auto ai = a.impl(), bi = b.impl();
  return make_op({n, ca + cb}, std::move(out), {ai, bi},
                 [ai, bi, n, ca, cb](const std::vector<double>& g) {
                   if (ai->requires_grad) {
                     ensure_grad(*ai);
                     for (int64_t r = 0; r < n; ++r)
                       for (int64_t j = 0; j < ca; ++j)
                         ai->grad[r * ca + j] += g[r * (ca + cb) + j];
                   }
                   if (bi->requires_grad) {
                     ensure_grad(*bi);
                     for (int64_t r = 0; r < n; ++r)
                       for (int64_t j = 0; j < cb; ++j)
                         bi->grad[r * cb + j] += g[r * (ca + cb) + ca + j];
                   }
                 });
}

namespace {

struct AxisSplit {
  int64_t outer, red, inner;
  Shape out_shape;
};

AxisSplit split_axis(const Tensor& a, int axis) {
  const Shape& s = a.shape();
  check(axis >= 0 && axis < static_cast<int>(s.size()),
        "reduce: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisSplit sp{1, s[axis], 1, {}};
  for (int i = 0; i < static_cast<int>(s.size()); ++i) {
    if (i < axis) sp.outer *= s[i];
    if (i > axis) sp.inner *= s[i];
    if (i != axis) sp.out_shape.push_back(s[i]);
  }
  check(sp.red > 0, "reduce: empty axis in " + shape_str(s));
  return sp;
}

}  // namespace

Tensor max_axis(const Tensor& a, int axis) {
  AxisSplit sp = split_axis(a, axis);
  const auto& av = a.values();
  std::vector<double> out(static_cast<size_t>(sp.outer * sp.inner));
  std::vector<int64_t> arg(out.size());
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t i = 0; i < sp.inner; ++i) {
      int64_t base = o * sp.red * sp.inner + i;
      double best = av[base];
      int64_t bestr = 0;
      for (int64_t r = 1; r < sp.red; ++r) {
        double v = av[base + r * sp.inner];
        if (v > best) {
          best = v;
          bestr = r;
        }
      }
      out[o * sp.inner + i] = best;
      arg[o * sp.inner + i] = bestr;
    }
  }
  auto ai = a.impl();
  return make_op(sp.out_shape, std::move(out), {ai},
                 [ai, sp, arg = std::move(arg)](const std::vector<double>& g) {
                   ensure_grad(*ai);
                   for (int64_t o = 0; o < sp.outer; ++o)
                     for (int64_t i = 0; i < sp.inner; ++i) {
                       int64_t flat = o * sp.inner + i;
                       ai->grad[o * sp.red * sp.inner + arg[flat] * sp.inner + i] += g[flat];
                     }
                 });
}

namespace {

Tensor sum_like(const Tensor& a, int axis, bool mean) {
  AxisSplit sp = split_axis(a, axis);
  const auto& av = a.values();
  double inv = mean ? 1.0 / static_cast<double>(sp.red) : 1.0;
  std::vector<double> out(static_cast<size_t>(sp.outer * sp.inner), 0.0);
  for (int64_t o = 0; o < sp.outer; ++o)
    for (int64_t r = 0; r < sp.red; ++r) {
      int64_t base = o * sp.red * sp.inner + r * sp.inner;
      for (int64_t i = 0; i < sp.inner; ++i) out[o * sp.inner + i] += av[base + i];
    }
  if (mean)
    for (double& v : out) v *= inv;
  auto ai = a.impl();
  return make_op(sp.out_shape, std::move(out), {ai},
                 [ai, sp, inv](const std::vector<double>& g) {
                   ensure_grad(*ai);
                   for (int64_t o = 0; o < sp.outer; ++o)
                     for (int64_t r = 0; r < sp.red; ++r) {
                       int64_t base = o * sp.red * sp.inner + r * sp.inner;
                       for (int64_t i = 0; i < sp.inner; ++i)
                         ai->grad[base + i] += inv * g[o * sp.inner + i];
                     }
                 });
}

}  // namespace

Tensor mean_axis(const Tensor& a, int axis) { return sum_like(a, axis, true); }
Tensor sum_axis(const Tensor& a, int axis) { return sum_like(a, axis, false); }

Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  auto ai = a.impl();
  return make_op({1}, {acc}, {ai}, [ai](const std::vector<double>& g) {
    ensure_grad(*ai);
    for (double& d : ai->grad) d += g[0];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  int64_t n = shape_numel(shape);
  check(n == a.numel(), "reshape: cannot view " + shape_str(a.shape()) + " as " +
                            shape_str(shape));
  std::vector<double> out(a.values());
  auto ai = a.impl();
  return make_op(std::move(shape), std::move(out), {ai}, [ai](const std::vector<double>& g) {
    accumulate(ai, g);
  });
}

Tensor gather_rows(const Tensor& a, std::vector<int64_t> idx) {
  check(a.rank() == 2, "gather_rows: rank-2 tensor required, got " + shape_str(a.shape()));
  int64_t n = a.rows(), c = a.cols();
  for (int64_t i : idx)
    check(i >= 0 && i < n,
          "gather_rows: index " + std::to_string(i) + " out of range for " + shape_str(a.shape()));
  int64_t k = static_cast<int64_t>(idx.size());
  std::vector<double> out(static_cast<size_t>(k * c));
  const auto& av = a.values();
  for (int64_t r = 0; r < k; ++r) std::copy_n(av.data() + idx[r] * c, c, out.data() + r * c);
  auto ai = a.impl();
  return make_op({k, c}, std::move(out), {ai},
                 [ai, idx = std::move(idx), c](const std::vector<double>& g) {
                   ensure_grad(*ai);
                   for (size_t r = 0; r < idx.size(); ++r) {
                     double* dst = ai->grad.data() + idx[r] * c;
                     const double* src = g.data() + r * c;
                     for (int64_t j = 0; j < c; ++j) dst[j] += src[j];
                   }
                 });
}

Tensor blend_rows(const Tensor& feats, std::vector<int64_t> idx, std::vector<double> w,
                  int64_t k) {
  check(feats.rank() == 2, "blend_rows: rank-2 features required, got " + shape_str(feats.shape()));
  check(k > 0 && idx.size() == w.size() && idx.size() % static_cast<size_t>(k) == 0,
        "blend_rows: index/weight lists must agree and be a multiple of k");
  int64_t m = feats.rows(), c = feats.cols();
  int64_t n = static_cast<int64_t>(idx.size()) / k;
  for (int64_t i : idx)
    check(i >= 0 && i < m, "blend_rows: index " + std::to_string(i) + " out of range for " +
                               shape_str(feats.shape()));
  std::vector<double> out(static_cast<size_t>(n * c), 0.0);
  const auto& fv = feats.values();
  for (int64_t r = 0; r < n; ++r) {
    double* dst = out.data() + r * c;
    for (int64_t t = 0; t < k; ++t) {
      double wt = w[r * k + t];
      const double* src = fv.data() + idx[r * k + t] * c;
      for (int64_t j = 0; j < c; ++j) dst[j] += wt * src[j];
    }
  }
  auto fi = feats.impl();
  return make_op({n, c}, std::move(out), {fi},
                 [fi, idx = std::move(idx), w = std::move(w), k, c](const std::vector<double>& g) {
                   ensure_grad(*fi);
                   int64_t n2 = static_cast<int64_t>(idx.size()) / k;
                   for (int64_t r = 0; r < n2; ++r) {
                     const double* src = g.data() + r * c;
                     for (int64_t t = 0; t < k; ++t) {
                       double wt = w[r * k + t];
                       double* dst = fi->grad.data() + idx[r * k + t] * c;
                       for (int64_t j = 0; j < c; ++j) dst[j] += wt * src[j];
                     }
                   }
                 });
}

}  // namespace pmp
