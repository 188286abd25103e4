#pragma once

// Equilibrium computation: one Transformer-encoder block over the agent set
// followed by global mean pooling. Permutation invariant over agents.

#include "bidlab/numkit/nn.hpp"
#include "bidlab/real.hpp"

namespace bidlab::graph {

class EcAggregator {
 public:
  EcAggregator() = default;
  EcAggregator(int d, int heads, nk::Rng& rng, const std::string& prefix = "ec") {
    attn_ = nk::MultiHeadAttention<real>(d, heads, rng, params_, prefix + ".attn");
    ln1_ = nk::LayerNorm<real>(d, params_, prefix + ".ln1");
    ln2_ = nk::LayerNorm<real>(d, params_, prefix + ".ln2");
    ff1_ = nk::Linear<real>(d, 4 * d, rng, params_, prefix + ".ff1");
    ff2_ = nk::Linear<real>(4 * d, d, rng, params_, prefix + ".ff2");
  }

  nk::ParamSet<real>& params() { return params_; }
  const nk::ParamSet<real>& params() const { return params_; }

  // embeddings: (n_agents x d) -> joint embedding (d)
  nk::Tensor<real> aggregate(const nk::Tensor<real>& embeddings) const {
    if (embeddings.rows() < 1)
      throw nk::DimensionError("ec_aggregate: empty agent set");
    auto h = ln1_(add(embeddings, attn_(embeddings)));
    auto ff = ff2_(gelu(ff1_(h)));
    auto out = ln2_(add(h, ff));
    return mean_rows(out);
  }

 private:
  nk::ParamSet<real> params_;
  nk::MultiHeadAttention<real> attn_;
  nk::LayerNorm<real> ln1_, ln2_;
  nk::Linear<real> ff1_, ff2_;
};

}  // namespace bidlab::graph
