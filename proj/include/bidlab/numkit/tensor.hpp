#pragma once

// Minimal dense-tensor kernel with reverse-mode autodiff. Tensors are
// rank-1/2/3 row-major arrays; every op records a backward closure on the
// result node when any input requires grad. The primitive set is exactly
// what the learned modules need; no general broadcasting.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "bidlab/numkit/random.hpp"

namespace bidlab::nk {

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class T>
struct TensorNode {
  std::vector<int> shape;
  std::vector<T> val;
  std::vector<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward;

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  void ensure_grad() {
    if (grad.empty()) grad.assign(val.size(), T(0));
  }
};

template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<T>> n) : node_(std::move(n)) {}

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }
  static Tensor full(std::vector<int> shape, T v, bool requires_grad = false) {
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    n->val.assign(std::size_t(n->numel()), v);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }
  static Tensor scalar(T v, bool requires_grad = false) {
    return full({1}, v, requires_grad);
  }
  static Tensor from(std::vector<T> data, std::vector<int> shape,
                     bool requires_grad = false) {
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(shape);
    if (std::int64_t(data.size()) != n->numel())
      throw DimensionError("from: data length does not match shape");
    n->val = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }
  // Glorot-uniform leaf.
  static Tensor glorot(std::vector<int> shape, int fan_in, int fan_out,
                       Rng& rng, bool requires_grad = true) {
    auto t = zeros(std::move(shape), requires_grad);
    T bound = T(std::sqrt(6.0 / double(fan_in + fan_out)));
    for (auto& v : t.node_->val) v = T(rng.uniform(-double(bound), double(bound)));
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  TensorNode<T>* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode<T>>& ptr() const { return node_; }
  const std::vector<int>& shape() const { return node_->shape; }
  std::vector<T>& data() { return node_->val; }
  const std::vector<T>& data() const { return node_->val; }
  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool requires_grad() const { return node_->requires_grad; }
  std::int64_t numel() const { return node_->numel(); }
  int rank() const { return int(node_->shape.size()); }
  int rows() const { return node_->shape.at(0); }
  int cols() const {
    return rank() == 1 ? 1 : node_->shape.at(1);
  }
  T item() const {
    if (numel() != 1) throw DimensionError("item: tensor not scalar");
    return node_->val[0];
  }
  T at(int i, int j) const { return node_->val[std::size_t(i) * cols() + j]; }

  void zero_grad() { node_->grad.clear(); }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

// Disables tape recording in scope; used for sampling and evaluation.
class NoGradGuard {
 public:
  NoGradGuard() { ++depth(); }
  ~NoGradGuard() { --depth(); }
  NoGradGuard(const NoGradGuard&) = delete;
  static bool enabled() { return depth() == 0; }

 private:
  static int& depth() {
    thread_local int d = 0;
    return d;
  }
};

namespace detail {

template <class T>
Tensor<T> make_op(std::vector<int> shape,
                  std::vector<std::shared_ptr<TensorNode<T>>> parents,
                  std::function<void(TensorNode<T>&)> backward) {
  auto n = std::make_shared<TensorNode<T>>();
  n->shape = std::move(shape);
  n->val.assign(std::size_t(n->numel()), T(0));
  bool rg = false;
  for (auto& p : parents) rg = rg || p->requires_grad;
  rg = rg && NoGradGuard::enabled();
  if (rg) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward = std::move(backward);
  }
  return Tensor<T>(n);
}

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  auto pa = a.ptr(), pb = b.ptr();
  auto out = detail::make_op<T>(
      a.shape(), {pa, pb}, [pa, pb](TensorNode<T>& o) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::size_t i = 0; i < o.grad.size(); ++i) pb->grad[i] += o.grad[i];
        }
      });
  for (std::size_t i = 0; i < out.data().size(); ++i)
    out.data()[i] = pa->val[i] + pb->val[i];
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  auto pa = a.ptr(), pb = b.ptr();
  auto out = detail::make_op<T>(
      a.shape(), {pa, pb}, [pa, pb](TensorNode<T>& o) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::size_t i = 0; i < o.grad.size(); ++i) pb->grad[i] -= o.grad[i];
        }
      });
  for (std::size_t i = 0; i < out.data().size(); ++i)
    out.data()[i] = pa->val[i] - pb->val[i];
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  auto pa = a.ptr(), pb = b.ptr();
  auto out = detail::make_op<T>(
      a.shape(), {pa, pb}, [pa, pb](TensorNode<T>& o) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (std::size_t i = 0; i < o.grad.size(); ++i)
            pa->grad[i] += o.grad[i] * pb->val[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::size_t i = 0; i < o.grad.size(); ++i)
            pb->grad[i] += o.grad[i] * pa->val[i];
        }
      });
  for (std::size_t i = 0; i < out.data().size(); ++i)
    out.data()[i] = pa->val[i] * pb->val[i];
  return out;
}

template <class T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "div");
  auto pa = a.ptr(), pb = b.ptr();
  auto out = detail::make_op<T>(
      a.shape(), {pa, pb}, [pa, pb](TensorNode<T>& o) {
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (std::size_t i = 0; i < o.grad.size(); ++i)
            pa->grad[i] += o.grad[i] / pb->val[i];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (std::size_t i = 0; i < o.grad.size(); ++i)
            pb->grad[i] -= o.grad[i] * pa->val[i] / (pb->val[i] * pb->val[i]);
        }
      });
  for (std::size_t i = 0; i < out.data().size(); ++i)
    out.data()[i] = pa->val[i] / pb->val[i];
  return out;
}

template <class T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
  auto pa = a.ptr();
  auto out = detail::make_op<T>(a.shape(), {pa}, [pa, c](TensorNode<T>& o) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i] * c;
  });
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = pa->val[i] * c;
  return out;
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  auto pa = a.ptr();
  auto out = detail::make_op<T>(a.shape(), {pa}, [pa](TensorNode<T>& o) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
  });
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = pa->val[i] + c;
  return out;
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
  return mul_scalar(a, T(-1));
}

// ---- unary nonlinearities --------------------------------------------------

template <class T, class F, class DF>
Tensor<T> unary_op(const Tensor<T>& a, F f, DF df) {
  auto pa = a.ptr();
  auto out = detail::make_op<T>(a.shape(), {pa}, [pa, df](TensorNode<T>& o) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      pa->grad[i] += o.grad[i] * df(pa->val[i], o.val[i]);
  });
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = f(pa->val[i]);
  return out;
}

template <class T>
Tensor<T> exp_t(const Tensor<T>& a) {
  return unary_op(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log_t(const Tensor<T>& a) {
  return unary_op(
      a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Tensor<T> sqrt_t(const Tensor<T>& a) {
  return unary_op(
      a, [](T x) { return std::sqrt(x); },
      [](T, T y) { return T(0.5) / y; });
}

template <class T>
Tensor<T> tanh_t(const Tensor<T>& a) {
  return unary_op(
      a, [](T x) { return std::tanh(x); },
      [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> softplus(const Tensor<T>& a) {
  return unary_op(
      a,
      [](T x) {
        if (x > T(30)) return x;
        if (x < T(-30)) return std::exp(x);
        return std::log1p(std::exp(x));
      },
      [](T x, T) { return T(1) / (T(1) + std::exp(-x)); });
}

template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr double inv_sqrt2 = 0.7071067811865476;
  constexpr double inv_sqrt2pi = 0.3989422804014327;
  return unary_op(
      a,
      [=](T x) { return T(0.5 * double(x) * (1.0 + std::erf(double(x) * inv_sqrt2))); },
      [=](T x, T) {
        double cdf = 0.5 * (1.0 + std::erf(double(x) * inv_sqrt2));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * double(x) * double(x));
        return T(cdf + double(x) * pdf);
      });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope = T(0.2)) {
  return unary_op(
      a, [slope](T x) { return x > T(0) ? x : slope * x; },
      [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

// ---- reductions ------------------------------------------------------------

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  auto pa = a.ptr();
  auto out = detail::make_op<T>({1}, {pa}, [pa](TensorNode<T>& o) {
    pa->ensure_grad();
    for (auto& g : pa->grad) g += o.grad[0];
  });
  T s = 0;
  for (T v : pa->val) s += v;
  out.data()[0] = s;
  return out;
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  auto pa = a.ptr();
  T inv = T(1) / T(pa->numel());
  auto out = detail::make_op<T>({1}, {pa}, [pa, inv](TensorNode<T>& o) {
    pa->ensure_grad();
    for (auto& g : pa->grad) g += o.grad[0] * inv;
  });
  T s = 0;
  for (T v : pa->val) s += v;
  out.data()[0] = s * inv;
  return out;
}

// mean over rows: (N x C) -> (C)
template <class T>
Tensor<T> mean_rows(const Tensor<T>& a) {
  int n = a.rows(), c = a.cols();
  auto pa = a.ptr();
  T inv = T(1) / T(n);
  auto out = detail::make_op<T>({c}, {pa}, [pa, n, c, inv](TensorNode<T>& o) {
    pa->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < c; ++j)
        pa->grad[std::size_t(i) * c + j] += o.grad[std::size_t(j)] * inv;
  });
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      out.data()[std::size_t(j)] += pa->val[std::size_t(i) * c + j] * inv;
  return out;
}

// ---- matrix ops ------------------------------------------------------------

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw DimensionError("matmul: inner dimensions disagree");
  int m = a.rows(), k = a.cols(), n = b.cols();
  auto pa = a.ptr(), pb = b.ptr();
  auto out = detail::make_op<T>({m, n}, {pa, pb}, [pa, pb, m, k, n](TensorNode<T>& o) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      // dA = G B^T
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
          T g = o.grad[std::size_t(i) * n + j];
          if (g == T(0)) continue;
          for (int p = 0; p < k; ++p)
            pa->grad[std::size_t(i) * k + p] += g * pb->val[std::size_t(p) * n + j];
        }
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      // dB = A^T G
      for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
          T av = pa->val[std::size_t(i) * k + p];
          if (av == T(0)) continue;
          for (int j = 0; j < n; ++j)
            pb->grad[std::size_t(p) * n + j] += av * o.grad[std::size_t(i) * n + j];
        }
    }
  });
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      T av = pa->val[std::size_t(i) * k + p];
      if (av == T(0)) continue;
      const T* brow = &pb->val[std::size_t(p) * n];
      T* orow = &out.data()[std::size_t(i) * n];
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  return out;
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw DimensionError("transpose: rank 2 required");
  int m = a.rows(), n = a.cols();
  auto pa = a.ptr();
  auto out = detail::make_op<T>({n, m}, {pa}, [pa, m, n](TensorNode<T>& o) {
    pa->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        pa->grad[std::size_t(i) * n + j] += o.grad[std::size_t(j) * m + i];
  });
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.data()[std::size_t(j) * m + i] = pa->val[std::size_t(i) * n + j];
  return out;
}

// view a rank-1 tensor as 1 x n (shares tape via copy op)
template <class T>
Tensor<T> as_row(const Tensor<T>& a) {
  auto pa = a.ptr();
  int n = int(a.numel());
  auto out = detail::make_op<T>({1, n}, {pa}, [pa](TensorNode<T>& o) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
  });
  out.data() = pa->val;
  return out;
}

template <class T>
Tensor<T> flatten(const Tensor<T>& a) {
  auto pa = a.ptr();
  int n = int(a.numel());
  auto out = detail::make_op<T>({n}, {pa}, [pa](TensorNode<T>& o) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
  });
  out.data() = pa->val;
  return out;
}

// ---- structural ops --------------------------------------------------------

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: empty");
  int m = parts[0].rows();
  int total = 0;
  std::vector<std::shared_ptr<TensorNode<T>>> ps;
  for (auto& p : parts) {
    if (p.rows() != m) throw DimensionError("concat_cols: row mismatch");
    total += p.cols();
    ps.push_back(p.ptr());
  }
  auto parents = ps;
  auto out = detail::make_op<T>({m, total}, std::move(parents),
                                [ps, m, total](TensorNode<T>& o) {
    int off = 0;
    for (auto& p : ps) {
      int c = p->shape.size() == 1 ? 1 : p->shape[1];
      if (p->requires_grad) {
        p->ensure_grad();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < c; ++j)
            p->grad[std::size_t(i) * c + j] +=
                o.grad[std::size_t(i) * total + off + j];
      }
      off += c;
    }
  });
  int off = 0;
  for (auto& p : ps) {
    int c = p->shape.size() == 1 ? 1 : p->shape[1];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < c; ++j)
        out.data()[std::size_t(i) * total + off + j] = p->val[std::size_t(i) * c + j];
    off += c;
  }
  return out;
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& a, int c0, int c1) {
  int m = a.rows(), n = a.cols();
  if (c0 < 0 || c1 > n || c0 >= c1) throw DimensionError("slice_cols: bad range");
  int w = c1 - c0;
  auto pa = a.ptr();
  auto out = detail::make_op<T>({m, w}, {pa}, [pa, m, n, c0, w](TensorNode<T>& o) {
    pa->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < w; ++j)
        pa->grad[std::size_t(i) * n + c0 + j] += o.grad[std::size_t(i) * w + j];
  });
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < w; ++j)
      out.data()[std::size_t(i) * w + j] = pa->val[std::size_t(i) * n + c0 + j];
  return out;
}

template <class T>
Tensor<T> gather_rows(const Tensor<T>& a, const std::vector<int>& idx) {
  int c = a.cols();
  auto pa = a.ptr();
  auto out = detail::make_op<T>({int(idx.size()), c}, {pa},
                                [pa, idx, c](TensorNode<T>& o) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < c; ++j)
        pa->grad[std::size_t(idx[i]) * c + j] += o.grad[i * std::size_t(c) + j];
  });
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (int j = 0; j < c; ++j)
      out.data()[i * std::size_t(c) + j] = pa->val[std::size_t(idx[i]) * c + j];
  return out;
}

// rows of a summed into segments given per-row segment ids; result is (nseg x C)
template <class T>
Tensor<T> segment_sum(const Tensor<T>& a, const std::vector<int>& seg, int nseg) {
  if (int(seg.size()) != a.rows()) throw DimensionError("segment_sum: id count");
  int c = a.cols();
  auto pa = a.ptr();
  auto out = detail::make_op<T>({nseg, c}, {pa}, [pa, seg, c](TensorNode<T>& o) {
    pa->ensure_grad();
    for (std::size_t i = 0; i < seg.size(); ++i)
      for (int j = 0; j < c; ++j)
        pa->grad[i * std::size_t(c) + j] += o.grad[std::size_t(seg[i]) * c + j];
  });
  for (std::size_t i = 0; i < seg.size(); ++i)
    for (int j = 0; j < c; ++j)
      out.data()[std::size_t(seg[i]) * c + j] += pa->val[i * std::size_t(c) + j];
  return out;
}

// multiply row i of a (N x C) by v[i] (N or N x 1)
template <class T>
Tensor<T> mul_colvec(const Tensor<T>& a, const Tensor<T>& v) {
  int m = a.rows(), c = a.cols();
  if (int(v.numel()) != m) throw DimensionError("mul_colvec: length mismatch");
  auto pa = a.ptr(), pv = v.ptr();
  auto out = detail::make_op<T>(a.shape(), {pa, pv}, [pa, pv, m, c](TensorNode<T>& o) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < c; ++j)
          pa->grad[std::size_t(i) * c + j] +=
              o.grad[std::size_t(i) * c + j] * pv->val[std::size_t(i)];
    }
    if (pv->requires_grad) {
      pv->ensure_grad();
      for (int i = 0; i < m; ++i) {
        T s = 0;
        for (int j = 0; j < c; ++j)
          s += o.grad[std::size_t(i) * c + j] * pa->val[std::size_t(i) * c + j];
        pv->grad[std::size_t(i)] += s;
      }
    }
  });
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < c; ++j)
      out.data()[std::size_t(i) * c + j] =
          pa->val[std::size_t(i) * c + j] * pv->val[std::size_t(i)];
  return out;
}

// add row vector b (C) to every row of a (N x C)
template <class T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& b) {
  int m = a.rows(), c = a.cols();
  if (int(b.numel()) != c) throw DimensionError("add_rowvec: length mismatch");
  auto pa = a.ptr(), pb = b.ptr();
  auto out = detail::make_op<T>(a.shape(), {pa, pb}, [pa, pb, m, c](TensorNode<T>& o) {
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) pa->grad[i] += o.grad[i];
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < c; ++j)
          pb->grad[std::size_t(j)] += o.grad[std::size_t(i) * c + j];
    }
  });
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < c; ++j)
      out.data()[std::size_t(i) * c + j] =
          pa->val[std::size_t(i) * c + j] + pb->val[std::size_t(j)];
  return out;
}

template <class T>
Tensor<T> detach(const Tensor<T>& a) {
  auto n = std::make_shared<TensorNode<T>>();
  n->shape = a.shape();
  n->val = a.data();
  n->requires_grad = false;
  return Tensor<T>(n);
}

// ---- softmax / layer norm --------------------------------------------------

template <class T>
Tensor<T> row_softmax(const Tensor<T>& a) {
  int m = a.rows(), c = a.cols();
  auto pa = a.ptr();
  auto out = detail::make_op<T>(a.shape(), {pa}, [pa, m, c](TensorNode<T>& o) {
    pa->ensure_grad();
    for (int i = 0; i < m; ++i) {
      const T* y = &o.val[std::size_t(i) * c];
      const T* g = &o.grad[std::size_t(i) * c];
      T dot = 0;
      for (int j = 0; j < c; ++j) dot += g[j] * y[j];
      for (int j = 0; j < c; ++j)
        pa->grad[std::size_t(i) * c + j] += y[j] * (g[j] - dot);
    }
  });
  for (int i = 0; i < m; ++i) {
    const T* x = &pa->val[std::size_t(i) * c];
    T* y = &out.data()[std::size_t(i) * c];
    T mx = x[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
    T s = 0;
    for (int j = 0; j < c; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    for (int j = 0; j < c; ++j) y[j] /= s;
  }
  return out;
}

// per-row layer norm with affine parameters gain/bias of length C
template <class T>
Tensor<T> layer_norm_rows(const Tensor<T>& a, const Tensor<T>& gain,
                          const Tensor<T>& bias, T eps = T(1e-5)) {
  int m = a.rows(), c = a.cols();
  if (int(gain.numel()) != c || int(bias.numel()) != c)
    throw DimensionError("layer_norm: affine length mismatch");
  auto pa = a.ptr(), pg = gain.ptr(), pb = bias.ptr();
  // cache normalized values and inv-std per row for backward
  auto xhat = std::make_shared<std::vector<T>>(std::size_t(m) * c);
  auto istd = std::make_shared<std::vector<T>>(std::size_t(m));
  auto out = detail::make_op<T>(
      a.shape(), {pa, pg, pb}, [pa, pg, pb, xhat, istd, m, c](TensorNode<T>& o) {
        if (pg->requires_grad) pg->ensure_grad();
        if (pb->requires_grad) pb->ensure_grad();
        if (pa->requires_grad) pa->ensure_grad();
        for (int i = 0; i < m; ++i) {
          const T* g = &o.grad[std::size_t(i) * c];
          const T* xh = &(*xhat)[std::size_t(i) * c];
          if (pb->requires_grad)
            for (int j = 0; j < c; ++j) pb->grad[std::size_t(j)] += g[j];
          if (pg->requires_grad)
            for (int j = 0; j < c; ++j) pg->grad[std::size_t(j)] += g[j] * xh[j];
          if (pa->requires_grad) {
            T mean_dxh = 0, mean_dxh_xh = 0;
            for (int j = 0; j < c; ++j) {
              T dxh = g[j] * pg->val[std::size_t(j)];
              mean_dxh += dxh;
              mean_dxh_xh += dxh * xh[j];
            }
            mean_dxh /= T(c);
            mean_dxh_xh /= T(c);
            for (int j = 0; j < c; ++j) {
              T dxh = g[j] * pg->val[std::size_t(j)];
              pa->grad[std::size_t(i) * c + j] +=
                  (*istd)[std::size_t(i)] * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
            }
          }
        }
      });
  for (int i = 0; i < m; ++i) {
    const T* x = &pa->val[std::size_t(i) * c];
    T mu = 0;
    for (int j = 0; j < c; ++j) mu += x[j];
    mu /= T(c);
    T var = 0;
    for (int j = 0; j < c; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= T(c);
    T is = T(1) / std::sqrt(var + eps);
    (*istd)[std::size_t(i)] = is;
    for (int j = 0; j < c; ++j) {
      T xh = (x[j] - mu) * is;
      (*xhat)[std::size_t(i) * c + j] = xh;
      out.data()[std::size_t(i) * c + j] =
          xh * pg->val[std::size_t(j)] + pb->val[std::size_t(j)];
    }
  }
  return out;
}

// ---- conv1d ----------------------------------------------------------------

// x: (C_in x T), w: (C_out x C_in x K), b: (C_out), "same" zero padding, K odd
template <class T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 2 || w.rank() != 3) throw DimensionError("conv1d: bad ranks");
  int cin = x.shape()[0], tt = x.shape()[1];
  int cout = w.shape()[0], wcin = w.shape()[1], k = w.shape()[2];
  if (wcin != cin) throw DimensionError("conv1d: channel mismatch");
  if (k % 2 == 0) throw ConfigError("conv1d: kernel size must be odd");
  if (int(b.numel()) != cout) throw DimensionError("conv1d: bias length");
  int half = k / 2;
  auto px = x.ptr(), pw = w.ptr(), pb = b.ptr();
  auto out = detail::make_op<T>(
      {cout, tt}, {px, pw, pb},
      [px, pw, pb, cin, tt, cout, k, half](TensorNode<T>& o) {
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (int oc = 0; oc < cout; ++oc) {
            T s = 0;
            for (int t = 0; t < tt; ++t) s += o.grad[std::size_t(oc) * tt + t];
            pb->grad[std::size_t(oc)] += s;
          }
        }
        if (pw->requires_grad) {
          pw->ensure_grad();
          for (int oc = 0; oc < cout; ++oc)
            for (int ic = 0; ic < cin; ++ic)
              for (int kk = 0; kk < k; ++kk) {
                T s = 0;
                int lo = std::max(0, half - kk), hi = std::min(tt, tt + half - kk);
                for (int t = lo; t < hi; ++t)
                  s += o.grad[std::size_t(oc) * tt + t] *
                       px->val[std::size_t(ic) * tt + t + kk - half];
                pw->grad[(std::size_t(oc) * cin + ic) * k + kk] += s;
              }
        }
        if (px->requires_grad) {
          px->ensure_grad();
          for (int oc = 0; oc < cout; ++oc)
            for (int ic = 0; ic < cin; ++ic)
              for (int kk = 0; kk < k; ++kk) {
                T wv = pw->val[(std::size_t(oc) * cin + ic) * k + kk];
                if (wv == T(0)) continue;
                int lo = std::max(0, half - kk), hi = std::min(tt, tt + half - kk);
                for (int t = lo; t < hi; ++t)
                  px->grad[std::size_t(ic) * tt + t + kk - half] +=
                      o.grad[std::size_t(oc) * tt + t] * wv;
              }
        }
      });
  for (int oc = 0; oc < cout; ++oc) {
    T* orow = &out.data()[std::size_t(oc) * tt];
    for (int t = 0; t < tt; ++t) orow[t] = pb->val[std::size_t(oc)];
    for (int ic = 0; ic < cin; ++ic) {
      const T* xrow = &px->val[std::size_t(ic) * tt];
      const T* wrow = &pw->val[(std::size_t(oc) * cin + ic) * k];
      for (int kk = 0; kk < k; ++kk) {
        T wv = wrow[kk];
        if (wv == T(0)) continue;
        int lo = std::max(0, half - kk), hi = std::min(tt, tt + half - kk);
        for (int t = lo; t < hi; ++t) orow[t] += wv * xrow[t + kk - half];
      }
    }
  }
  return out;
}

// ---- backward driver -------------------------------------------------------

template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) throw DimensionError("backward: loss must be scalar");
  if (!loss.requires_grad()) return;
  // iterative post-order topological sort
  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> seen;
  std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
  stack.push_back({loss.node(), 0});
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, ci] = stack.back();
    if (ci < node->parents.size()) {
      TensorNode<T>* p = node->parents[ci++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace bidlab::nk
