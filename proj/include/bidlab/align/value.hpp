#pragma once

// KPI value head trained with expectile regression, plus preference-weighted
// candidate scoring used by the planner and the rejection fine-tuner.

#include <vector>

#include "bidlab/auction/types.hpp"
#include "bidlab/numkit/checkpoint.hpp"
#include "bidlab/numkit/nn.hpp"
#include "bidlab/real.hpp"

namespace bidlab::align {

// predicted columns: cpa, roi, win_rate, budget_adherence, welfare_share, spend
constexpr int kKpiDim = 6;

class ValueHead {
 public:
  ValueHead() = default;
  ValueHead(int in_dim, nk::Rng& rng, const std::string& prefix = "value")
      : in_dim_(in_dim) {
    mlp_ = nk::Mlp<real>({in_dim, 128, 128, kKpiDim}, rng, params_,
                         prefix + ".mlp");
  }

  int in_dim() const { return in_dim_; }
  nk::ParamSet<real>& params() { return params_; }

  nk::Tensor<real> predict(const nk::Tensor<real>& x) const {
    if (x.cols() != in_dim_)
      throw nk::DimensionError("value_head: input width mismatch");
    return mlp_(x);
  }

  void save(const std::string& path) const { nk::save_params(path, params_); }
  void load(const std::string& path) { nk::load_params(path, params_); }

 private:
  int in_dim_ = 0;
  nk::ParamSet<real> params_;
  nk::Mlp<real> mlp_;
};

// Asymmetric squared error |tau - 1{u<0}| u^2 with u = target - pred,
// averaged over all entries. tau = 0.5 recovers half the squared error.
inline nk::Tensor<real> expectile_loss(const nk::Tensor<real>& pred,
                                       const nk::Tensor<real>& target,
                                       double tau) {
  if (pred.shape() != target.shape())
    throw nk::DimensionError("expectile_loss: shape mismatch");
  if (tau <= 0.0 || tau >= 1.0)
    throw nk::ConfigError("expectile_loss: tau must lie in (0,1)");
  auto u = sub(nk::detach(target), pred);
  std::vector<real> w(u.numel());
  for (std::size_t i = 0; i < w.size(); ++i)
    w[i] = real(u.data()[i] < real(0) ? 1.0 - tau : tau);
  auto wt = nk::Tensor<real>::from(w, pred.shape());
  return mean(mul(wt, mul(u, u)));
}

// One optimizer step of expectile regression; returns the loss value.
inline double iql_value_update(ValueHead& head, const nk::Tensor<real>& x,
                               const nk::Tensor<real>& targets, double tau,
                               nk::Adam<real>& opt) {
  auto loss = expectile_loss(head.predict(x), targets, tau);
  head.params().zero_grad();
  nk::backward(loss);
  opt.step(head.params());
  return double(loss.item());
}

// Preference-weighted z-scored sum across candidates. kpis: (n x K) with one
// row per candidate. Columns with zero spread are skipped: they cannot
// discriminate between candidates.
inline std::vector<double> score_candidates(const nk::Tensor<real>& kpis,
                                            const std::vector<double>& weights) {
  int n = kpis.rows(), K = kpis.cols();
  if (int(weights.size()) != K)
    throw nk::DimensionError("score_candidates: weight length");
  if (n == 0) throw auction::InputError("score_candidates: no candidates");
  std::vector<double> scores(std::size_t(n), 0.0);
  for (int j = 0; j < K; ++j) {
    double m = 0;
    for (int i = 0; i < n; ++i) m += double(kpis.at(i, j));
    m /= n;
    double v = 0;
    for (int i = 0; i < n; ++i) {
      double d = double(kpis.at(i, j)) - m;
      v += d * d;
    }
    double sd = std::sqrt(v / n);
    if (sd < 1e-12) continue;
    for (int i = 0; i < n; ++i)
      scores[std::size_t(i)] += weights[std::size_t(j)] *
                                (double(kpis.at(i, j)) - m) / sd;
  }
  return scores;
}

}  // namespace bidlab::align
