#pragma once

// Temporal self-predictive auxiliary loss: a predictor maps (x_t, summary of
// the other agents) to the EMA-target encoding of t+1; the loss is negative
// cosine similarity. The EMA target is frozen within a step.

#include "bidlab/graph/encoder.hpp"

namespace bidlab::graph {

class SplHead {
 public:
  SplHead() = default;
  SplHead(int d, nk::Rng& rng, const std::string& prefix = "spl") : dim_(d) {
    predictor_ = nk::Mlp<real>({2 * d, d, d}, rng, params_, prefix + ".pred");
  }

  nk::ParamSet<real>& params() { return params_; }
  int warning_count() const { return warnings_; }

  nk::Tensor<real> predict(const nk::Tensor<real>& x_t,
                           const nk::Tensor<real>& others_summary) {
    return predictor_(nk::concat_cols<real>({x_t, others_summary}));
  }

  // x_t, others_summary: (n x d) rows per agent; target: (n x d), detached
  // EMA encoding of t+1. Returns mean negative cosine similarity.
  nk::Tensor<real> loss(const nk::Tensor<real>& x_t,
                        const nk::Tensor<real>& others_summary,
                        const nk::Tensor<real>& target) {
    auto pred = predictor_(nk::concat_cols<real>({x_t, others_summary}));
    auto tgt = detach(target);
    int n = pred.rows();
    // row-wise cosine; zero-norm rows contribute 0 with a warning
    std::vector<real> mask(std::size_t(n), real(1));
    for (int i = 0; i < n; ++i) {
      double np = 0, nt = 0;
      for (int j = 0; j < dim_; ++j) {
        np += double(pred.at(i, j)) * double(pred.at(i, j));
        nt += double(tgt.at(i, j)) * double(tgt.at(i, j));
      }
      if (np < 1e-24 || nt < 1e-24) {
        mask[std::size_t(i)] = real(0);
        ++warnings_;
      }
    }
    // row sums over the feature dim via matmul with a ones column
    auto ones = nk::Tensor<real>::full({dim_, 1}, real(1));
    auto dsum = matmul(mul(pred, tgt), ones);
    auto psum = add_scalar(matmul(mul(pred, pred), ones), real(1e-12));
    auto tsum = add_scalar(matmul(mul(tgt, tgt), ones), real(1e-12));
    auto cos = div(dsum, sqrt_t(mul(psum, tsum)));
    auto masked = mul_colvec(cos, nk::Tensor<real>::from(mask, {n}));
    return mul_scalar(mean(masked), real(-1));
  }

 private:
  int dim_ = 0;
  nk::ParamSet<real> params_;
  nk::Mlp<real> predictor_;
  int warnings_ = 0;
};

}  // namespace bidlab::graph
