#pragma once

// Inverse dynamics model: recovers the per-IO bid explaining a latent
// transition x_t -> x_{t+1}, given the IO node embedding and an agent
// context vector. Output passes through softplus so bids stay nonnegative.

#include "bidlab/auction/types.hpp"
#include "bidlab/numkit/checkpoint.hpp"
#include "bidlab/numkit/nn.hpp"
#include "bidlab/real.hpp"

namespace bidlab::idm {

inline int context_dim(int n_categories) { return 4 + n_categories; }

// Fields: remaining-budget fraction, normalized time, cumulative cost and
// return normalized by budget, category one-hot.
inline std::vector<real> context_vector(const auction::AgentProfile& agent,
                                        double cum_cost, double cum_value,
                                        int t, int horizon, int n_categories) {
  std::vector<real> c(std::size_t(context_dim(n_categories)), real(0));
  c[0] = real(std::max(0.0, (agent.budget - cum_cost) / agent.budget));
  c[1] = real(double(t) / std::max(1, horizon));
  c[2] = real(cum_cost / agent.budget);
  c[3] = real(cum_value / agent.budget);
  c[std::size_t(4 + agent.category % n_categories)] = real(1);
  return c;
}

class IdmModel {
 public:
  IdmModel() = default;
  IdmModel(int d, int ctx_dim, nk::Rng& rng, const std::string& prefix = "idm")
      : in_dim_(3 * d + ctx_dim) {
    mlp_ = nk::Mlp<real>({in_dim_, 128, 128, 1}, rng, params_, prefix + ".mlp");
  }

  nk::ParamSet<real>& params() { return params_; }
  const nk::ParamSet<real>& params() const { return params_; }

  // Rows are tuples: x_t | x_next | f_k | c. Returns (B x 1) bids >= 0.
  nk::Tensor<real> predict(const nk::Tensor<real>& x_t,
                           const nk::Tensor<real>& x_next,
                           const nk::Tensor<real>& f_k,
                           const nk::Tensor<real>& ctx) const {
    auto in = nk::concat_cols<real>({x_t, x_next, f_k, ctx});
    if (in.cols() != in_dim_)
      throw nk::ConfigError("idm_predict: input dimension mismatch");
    return softplus(mlp_(in));
  }

  // Unit-variance Gaussian log-likelihood objective, i.e. MSE between
  // predicted and target bids averaged over the batch.
  nk::Tensor<real> graph_loss(const nk::Tensor<real>& predicted,
                              const nk::Tensor<real>& targets) const {
    if (predicted.rows() == 0) throw auction::InputError("graph_loss: empty batch");
    auto d = sub(predicted, targets);
    return mean(mul(d, d));
  }

  void save(const std::string& path) const { nk::save_params(path, params_); }
  void load(const std::string& path) { nk::load_params(path, params_); }

 private:
  int in_dim_ = 0;
  nk::ParamSet<real> params_;
  nk::Mlp<real> mlp_;
};

// Mean per-agent per-step l2 norm between predicted and true bid vectors.
struct BidAccuracy {
  double sum_l2 = 0.0;
  int count = 0;  // (agent, step) pairs with at least one exposed IO
  double value() const { return count > 0 ? sum_l2 / count : 0.0; }
};

}  // namespace bidlab::idm
