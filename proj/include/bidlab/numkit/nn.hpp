#pragma once

// Layer set on top of the autodiff kernel: linear, layer norm, multi-head
// attention, an attention message-passing layer for graphs, and Adam.

#include <map>
#include <string>
#include <vector>

#include "bidlab/numkit/tensor.hpp"

namespace bidlab::nk {

// Named parameter registry; owns nothing beyond the tensor handles.
template <class T>
class ParamSet {
 public:
  Tensor<T> add(const std::string& name, Tensor<T> t) {
    names_.push_back(name);
    params_.push_back(t);
    return t;
  }
  std::size_t size() const { return params_.size(); }
  const std::vector<Tensor<T>>& tensors() const { return params_; }
  std::vector<Tensor<T>>& tensors() { return params_; }
  const std::vector<std::string>& names() const { return names_; }
  Tensor<T> find(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return params_[i];
    throw ConfigError("param not found: " + name);
  }
  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }
  double grad_norm() const {
    double s = 0;
    for (auto& p : params_) {
      auto* n = p.node();
      for (T g : n->grad) s += double(g) * double(g);
    }
    return std::sqrt(s);
  }
  // Copy values from another set with identical layout.
  void copy_values_from(const ParamSet& src) {
    if (src.size() != size()) throw DimensionError("copy_values_from: layout");
    for (std::size_t i = 0; i < params_.size(); ++i)
      params_[i].data() = src.params_[i].data();
  }
  // EMA update: this <- decay*this + (1-decay)*src
  void ema_from(const ParamSet& src, T decay) {
    if (src.size() != size()) throw DimensionError("ema_from: layout");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& dst = params_[i].data();
      const auto& s = src.params_[i].data();
      for (std::size_t j = 0; j < dst.size(); ++j)
        dst[j] = decay * dst[j] + (T(1) - decay) * s[j];
    }
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> params_;
};

template <class T>
struct Linear {
  Tensor<T> w;  // (in x out)
  Tensor<T> b;  // (out)

  Linear() = default;
  Linear(int in, int out, Rng& rng, ParamSet<T>& ps, const std::string& name) {
    w = ps.add(name + ".w", Tensor<T>::glorot({in, out}, in, out, rng));
    b = ps.add(name + ".b", Tensor<T>::zeros({out}, true));
  }
  Tensor<T> operator()(const Tensor<T>& x) const {
    return add_rowvec(matmul(x, w), b);
  }
};

template <class T>
struct LayerNorm {
  Tensor<T> gain, bias;

  LayerNorm() = default;
  LayerNorm(int dim, ParamSet<T>& ps, const std::string& name) {
    gain = ps.add(name + ".g", Tensor<T>::full({dim}, T(1), true));
    bias = ps.add(name + ".b", Tensor<T>::zeros({dim}, true));
  }
  Tensor<T> operator()(const Tensor<T>& x) const {
    return layer_norm_rows(x, gain, bias);
  }
};

// Standard multi-head self-attention over a token matrix (S x d).
template <class T>
struct MultiHeadAttention {
  Linear<T> wq, wk, wv, wo;
  int heads = 1;
  int dim = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(int d, int n_heads, Rng& rng, ParamSet<T>& ps,
                     const std::string& name)
      : heads(n_heads), dim(d) {
    if (d % n_heads != 0)
      throw ConfigError("attention: dim not divisible by heads");
    wq = Linear<T>(d, d, rng, ps, name + ".q");
    wk = Linear<T>(d, d, rng, ps, name + ".k");
    wv = Linear<T>(d, d, rng, ps, name + ".v");
    wo = Linear<T>(d, d, rng, ps, name + ".o");
  }

  // attn_out: when non-null, receives one (S x S) weight matrix per head.
  Tensor<T> operator()(const Tensor<T>& x,
                       std::vector<Tensor<T>>* attn_out = nullptr) const {
    int dh = dim / heads;
    Tensor<T> q = wq(x), k = wk(x), v = wv(x);
    std::vector<Tensor<T>> outs;
    for (int h = 0; h < heads; ++h) {
      auto qh = slice_cols(q, h * dh, (h + 1) * dh);
      auto kh = slice_cols(k, h * dh, (h + 1) * dh);
      auto vh = slice_cols(v, h * dh, (h + 1) * dh);
      auto scores = mul_scalar(matmul(qh, transpose(kh)),
                               T(1.0 / std::sqrt(double(dh))));
      auto attn = row_softmax(scores);
      if (attn_out) attn_out->push_back(attn);
      outs.push_back(matmul(attn, vh));
    }
    return wo(concat_cols(outs));
  }
};

// Attention-based message passing over an explicit directed edge list.
// Coefficients come from both endpoint features and are normalized over
// each destination's in-neighborhood (GATv2 scoring). Callers add self
// loops when a node should see its own features.
template <class T>
struct GraphAttention {
  Linear<T> w_src, w_dst, w_val;
  Tensor<T> attn_vec;  // (out x 1)
  int out_dim = 0;

  GraphAttention() = default;
  GraphAttention(int in, int out, Rng& rng, ParamSet<T>& ps,
                 const std::string& name)
      : out_dim(out) {
    w_src = Linear<T>(in, out, rng, ps, name + ".src");
    w_dst = Linear<T>(in, out, rng, ps, name + ".dst");
    w_val = Linear<T>(in, out, rng, ps, name + ".val");
    attn_vec = ps.add(name + ".a", Tensor<T>::glorot({out, 1}, out, 1, rng));
  }

  // x: (N x in); edges: src/dst index arrays of equal length (may be empty).
  Tensor<T> operator()(const Tensor<T>& x, const std::vector<int>& src,
                       const std::vector<int>& dst, int n_nodes) const {
    Tensor<T> s = w_src(x), t = w_dst(x), v = w_val(x);
    if (src.empty()) return Tensor<T>::zeros({n_nodes, out_dim});
    auto m = add(gather_rows(s, src), gather_rows(t, dst));
    auto e = matmul(leaky_relu(m), attn_vec);  // (E x 1)
    // segment softmax over destinations; max shift is treated as constant
    std::vector<T> seg_max(std::size_t(n_nodes), T(-1e30));
    for (std::size_t i = 0; i < src.size(); ++i)
      seg_max[std::size_t(dst[i])] =
          std::max(seg_max[std::size_t(dst[i])], e.data()[i]);
    std::vector<T> shift(src.size());
    for (std::size_t i = 0; i < src.size(); ++i)
      shift[i] = seg_max[std::size_t(dst[i])];
    auto ex = exp_t(sub(e, Tensor<T>::from(shift, {int(src.size()), 1})));
    auto denom = segment_sum(ex, dst, n_nodes);  // (N x 1)
    auto alpha = div(ex, gather_rows(denom, dst));
    auto msgs = mul_colvec(gather_rows(v, src), flatten(alpha));
    return segment_sum(msgs, dst, n_nodes);
  }
};

// Bias-corrected Adam over a ParamSet. Clears gradients after each step.
template <class T>
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::int64_t step_count() const { return step_; }

  void step(ParamSet<T>& params) {
    if (m_.empty()) {
      for (auto& p : params.tensors()) {
        m_.emplace_back(p.data().size(), 0.0);
        v_.emplace_back(p.data().size(), 0.0);
      }
    }
    if (m_.size() != params.size())
      throw DimensionError("adam: parameter count changed");
    ++step_;
    double bc1 = 1.0 - std::pow(b1_, double(step_));
    double bc2 = 1.0 - std::pow(b2_, double(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params.tensors()[i];
      auto* n = p.node();
      if (n->grad.size() != 0 && n->grad.size() != n->val.size())
        throw DimensionError("adam: grad/param shape mismatch");
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < n->val.size(); ++j) {
        double g = n->grad.empty() ? 0.0 : double(n->grad[j]);
        m[j] = b1_ * m[j] + (1.0 - b1_) * g;
        v[j] = b2_ * v[j] + (1.0 - b2_) * g * g;
        double mhat = m[j] / bc1;
        double vhat = v[j] / bc2;
        n->val[j] -= T(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
      n->grad.clear();
    }
  }

 private:
  double lr_, b1_, b2_, eps_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Small MLP with GELU activations between hidden layers.
template <class T>
struct Mlp {
  std::vector<Linear<T>> layers;

  Mlp() = default;
  Mlp(const std::vector<int>& dims, Rng& rng, ParamSet<T>& ps,
      const std::string& name) {
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
      layers.emplace_back(dims[i], dims[i + 1], rng, ps,
                          name + ".l" + std::to_string(i));
  }
  Tensor<T> operator()(Tensor<T> x) const {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      x = layers[i](x);
      if (i + 1 < layers.size()) x = gelu(x);
    }
    return x;
  }
};

}  // namespace bidlab::nk
