#pragma once

// Attention message-passing encoder over an AuctionGraph. Per-agent
// embedding is the sum of the two virtual-hub node embeddings.

#include "bidlab/graph/build.hpp"
#include "bidlab/numkit/checkpoint.hpp"
#include "bidlab/numkit/nn.hpp"

namespace bidlab::graph {

struct EncodeResult {
  nk::Tensor<real> node_h;       // (N x d)
  nk::Tensor<real> agent_embed;  // (n_agents x d)
  nk::Tensor<real> io_embed;     // (n_live x d), aligned with graph io_ids
};

class GnnEncoder {
 public:
  GnnEncoder() = default;
  GnnEncoder(const GraphConfig& cfg, nk::Rng& rng, const std::string& prefix = "gnn")
      : cfg_(cfg) {
    int in = cfg.feat_dim();
    for (int l = 0; l < cfg.layers; ++l) {
      layers_.emplace_back(in, cfg.d, rng, params_,
                           prefix + ".gat" + std::to_string(l));
      in = cfg.d;
    }
  }

  const GraphConfig& config() const { return cfg_; }
  nk::ParamSet<real>& params() { return params_; }
  const nk::ParamSet<real>& params() const { return params_; }

  EncodeResult encode(const AuctionGraph& g) const {
    if (g.features.cols() != cfg_.feat_dim())
      throw nk::ConfigError("encode: feature dimension mismatch");
    nk::Tensor<real> h = g.features;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      h = layers_[l](h, g.src, g.dst, g.n_nodes);
      if (l + 1 < layers_.size()) h = gelu(h);
    }
    EncodeResult r;
    r.node_h = h;
    // Aggregated embeddings are row-normalized so downstream density models
    // and value heads always see unit-scale latents.
    r.agent_embed =
        norm_rows(add(gather_rows(h, g.ve_idx), gather_rows(h, g.vn_idx)));
    if (!g.io_node.empty()) r.io_embed = norm_rows(gather_rows(h, g.io_node));
    return r;
  }

  static nk::Tensor<real> norm_rows(const nk::Tensor<real>& x) {
    auto gain = nk::Tensor<real>::full({x.cols()}, real(1));
    auto bias = nk::Tensor<real>::zeros({x.cols()});
    return nk::layer_norm_rows(x, gain, bias);
  }

  void save(const std::string& path) const { nk::save_params(path, params_); }
  void load(const std::string& path) { nk::load_params(path, params_); }

 private:
  GraphConfig cfg_;
  nk::ParamSet<real> params_;
  std::vector<nk::GraphAttention<real>> layers_;
};

}  // namespace bidlab::graph
