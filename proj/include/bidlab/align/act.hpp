#pragma once

// Online bidding policy backed by the planner: encode the current market
// state, plan a latent future with the diffusion model, decode next-step
// bids with the inverse dynamics model, and cap each bid at the remaining
// budget so planned spending stays feasible.

#include <map>

#include "bidlab/align/planner.hpp"
#include "bidlab/auction/env.hpp"
#include "bidlab/graph/encoder.hpp"
#include "bidlab/idm/idm.hpp"

namespace bidlab::align {

struct ActConfig {
  int plan_candidates = 4;
  int plan_every = 4;  // steps between replans; plans are reused in between
  std::vector<double> weights =
      std::vector<double>(std::size_t(kKpiDim), 0.0);
};

// Drives one or more "managed" agents inside an episode. Other agents must
// be covered by a fallback policy supplied by the caller.
class Actor {
 public:
  Actor(const graph::GraphConfig& gcfg, const ActConfig& acfg,
        const graph::GnnEncoder& enc, const ldm::LatentDiffusion& dm,
        const idm::IdmModel& idm, const ValueHead& value,
        std::vector<int> managed, std::uint64_t seed)
      : gcfg_(gcfg), acfg_(acfg), enc_(enc), dm_(dm), idm_(idm), value_(value),
        managed_(std::move(managed)), rng_(seed) {
    if (acfg_.plan_every < 1) throw nk::ConfigError("act: plan_every >= 1");
    if (int(acfg_.weights.size()) != kKpiDim)
      throw nk::ConfigError("act: weight vector length");
  }

  int fallback_count() const { return fallbacks_; }

  void reset() {
    history_.clear();
    plans_.clear();
    fallbacks_ = 0;
  }

  // Bids for the managed agents at the env's current step. Bids never exceed
  // the remaining budget, so managed agents are not hard-suppressed.
  auction::BidMatrix bids(const auction::AuctionEnv& env) {
    nk::NoGradGuard ng;
    auto view = graph::step_view(env);
    auto g = graph::build_graph(view, gcfg_, rng_);
    auto res = enc_.encode(g);
    int T = env.config().horizon, d = gcfg_.d;
    // record this step's embeddings (one row per agent)
    std::vector<real> row(res.agent_embed.data());
    history_.push_back(std::move(row));

    int t = env.t();
    auction::BidMatrix out;
    for (int agent : managed_) {
      if (t % acfg_.plan_every == 0 || plans_.count(agent) == 0)
        replan(env, agent, T, d);
      auto& plan = plans_[agent];
      // IDM context and per-IO features at the current step
      auto ctx_v = idm::context_vector(env.agents()[std::size_t(agent)],
                                       env.cum_cost()[std::size_t(agent)],
                                       env.cum_value()[std::size_t(agent)], t,
                                       T, env.config().n_categories);
      double remaining = env.remaining_budget(agent);
      if (!plan.defined()) continue;  // fallback plan: sit out this step
      std::vector<int> exposed;
      for (std::size_t k = 0; k < view.live_ios.size(); ++k)
        if (view.live_ios[k]->exposed_to(agent)) exposed.push_back(int(k));
      if (exposed.empty()) continue;
      int n = int(exposed.size());
      auto x_t = nk::Tensor<real>::zeros({n, d});
      auto x_next = nk::Tensor<real>::zeros({n, d});
      auto f_k = nk::Tensor<real>::zeros({n, d});
      auto ctx = nk::Tensor<real>::zeros({n, int(ctx_v.size())});
      int next_t = std::min(t + 1, T - 1);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
          x_t.data()[std::size_t(i * d + j)] =
              history_.back()[std::size_t(agent * d + j)];
          x_next.data()[std::size_t(i * d + j)] = plan.at(next_t, j);
          f_k.data()[std::size_t(i * d + j)] =
              res.io_embed.at(exposed[std::size_t(i)], j);
        }
        for (std::size_t j = 0; j < ctx_v.size(); ++j)
          ctx.data()[std::size_t(i) * ctx_v.size() + j] = ctx_v[j];
      }
      auto pred = idm_.predict(x_t, x_next, f_k, ctx);
      for (int i = 0; i < n; ++i) {
        double b = double(pred.at(i, 0));
        b = std::min(b, remaining);  // cap instead of risking suppression
        if (b <= 0.0) continue;
        out.push_back({agent, view.live_ios[std::size_t(exposed[std::size_t(i)])]->id,
                       b});
      }
    }
    return out;
  }

 private:
  void replan(const auction::AuctionEnv& env, int agent, int T, int d) {
    int t = env.t();
    auto known = nk::Tensor<real>::zeros({T, d});
    std::vector<real> mask(std::size_t(T), real(0));
    for (int s = 0; s <= t && s < T; ++s) {
      mask[std::size_t(s)] = real(1);
      const auto& h = history_[std::size_t(std::min<int>(s, int(history_.size()) - 1))];
      for (int j = 0; j < d; ++j)
        known.data()[std::size_t(s * d + j)] = h[std::size_t(agent * d + j)];
    }
    auto cond = nk::Tensor<real>::zeros({1, d});
    for (int j = 0; j < d; ++j)
      cond.data()[std::size_t(j)] =
          history_.back()[std::size_t(agent * d + j)];

    double remaining = env.remaining_budget(agent);
    double spent = env.cum_cost()[std::size_t(agent)];
    auto generate = [&](int) {
      return dm_.sample_inpaint(known, mask, cond, rng_);
    };
    auto kpi_of = [&](const nk::Tensor<real>& traj) {
      // summarize the planned future as its mean embedding, conditioned on
      // the present
      auto msum = nk::Tensor<real>::zeros({1, 2 * d});
      int cnt = 0;
      for (int s = t; s < T; ++s) {
        for (int j = 0; j < d; ++j)
          msum.data()[std::size_t(j)] += traj.at(s, j);
        ++cnt;
      }
      for (int j = 0; j < d; ++j) {
        msum.data()[std::size_t(j)] /= real(std::max(1, cnt));
        msum.data()[std::size_t(d + j)] = cond.data()[std::size_t(j)];
      }
      return value_.predict(msum);
    };
    auto feasible = [&](const nk::Tensor<real>& traj) {
      // predicted episode spend (last KPI column) must fit the total budget,
      // i.e. what was already spent plus what is still available
      auto k = kpi_of(traj);
      return double(k.at(0, kKpiDim - 1)) <= spent + remaining + 1e-9;
    };
    auto plan = best_of_n_plan(acfg_.plan_candidates, generate, kpi_of,
                               acfg_.weights, feasible);
    if (plan.fallback) {
      ++fallbacks_;
      plans_[agent] = nk::Tensor<real>();  // zero bids until the next replan
    } else {
      plans_[agent] = plan.trajectory();
    }
  }

  graph::GraphConfig gcfg_;
  ActConfig acfg_;
  const graph::GnnEncoder& enc_;
  const ldm::LatentDiffusion& dm_;
  const idm::IdmModel& idm_;
  const ValueHead& value_;
  std::vector<int> managed_;
  nk::Rng rng_;
  std::vector<std::vector<real>> history_;
  std::map<int, nk::Tensor<real>> plans_;
  int fallbacks_ = 0;
};

}  // namespace bidlab::align
