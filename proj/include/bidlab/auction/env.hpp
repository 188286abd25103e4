#pragma once

// IO stream generation and the stepped auction environment.

#include <functional>

#include "bidlab/auction/mechanism.hpp"
#include "bidlab/auction/types.hpp"
#include "bidlab/numkit/random.hpp"

namespace bidlab::auction {

// Agent profiles for one episode; deterministic given seed.
inline std::vector<AgentProfile> generate_agents(const AuctionConfig& cfg,
                                                 nk::Rng& rng) {
  std::vector<AgentProfile> agents;
  for (int i = 0; i < cfg.n_agents; ++i) {
    AgentProfile a;
    a.id = i;
    a.category = i % cfg.n_categories;
    a.budget = rng.uniform(cfg.budget_min, cfg.budget_max);
    agents.push_back(a);
  }
  return agents;
}

// Full IO stream for one episode. Values use a two-level scheme: a per-IO
// base value times a per-agent episode multiplier.
inline std::vector<ImpressionOpportunity> generate_ios(const AuctionConfig& cfg,
                                                       nk::Rng& rng) {
  cfg.validate();
  std::vector<double> mult(std::size_t(cfg.n_agents), 1.0);
  if (cfg.multiplier_spread > 0) {
    double hi = 1.0 + cfg.multiplier_spread;
    for (auto& m : mult) m = rng.log_uniform(1.0 / hi, hi);
  }
  std::vector<ImpressionOpportunity> ios;
  int next_id = 0;
  for (int t = 0; t < cfg.horizon; ++t) {
    int n_new = cfg.arrival_rate > 0 ? rng.poisson(cfg.arrival_rate) : 0;
    for (int j = 0; j < n_new; ++j) {
      ImpressionOpportunity io;
      io.id = next_id++;
      io.t_start = t;
      io.t_end = std::min(t + rng.geometric(cfg.lifecycle_p), cfg.horizon - 1);
      for (int a = 0; a < cfg.n_agents; ++a)
        if (rng.bernoulli(cfg.exposure_p)) io.exposure.push_back(a);
      if (io.exposure.empty())
        io.exposure.push_back(int(rng.randint(std::uint64_t(cfg.n_agents))));
      int slots = 1 + int(rng.randint(std::uint64_t(cfg.max_slots)));
      io.slots = std::min<int>(slots, int(io.exposure.size()));
      io.conv_prob = cfg.stochastic_conversions ? rng.uniform(0.3, 1.0) : 1.0;
      double base = cfg.base_value_mean *
                    std::exp(cfg.value_sigma * rng.normal() -
                             0.5 * cfg.value_sigma * cfg.value_sigma);
      for (int a : io.exposure) io.value[a] = base * mult[std::size_t(a)];
      ios.push_back(std::move(io));
    }
  }
  return ios;
}

// Sparse bid matrix for one step: bid per live, exposed (agent, io) pair.
using BidMatrix = std::vector<BidEntry>;

class AuctionEnv {
 public:
  AuctionEnv(AuctionConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    rng_ = nk::Rng(seed);
    seed_ = seed;
    agents_ = generate_agents(cfg_, rng_);
    ios_ = generate_ios(cfg_, rng_);
    sold_.assign(ios_.size(), 0);
    cum_cost_.assign(std::size_t(cfg_.n_agents), 0.0);
    cum_value_.assign(std::size_t(cfg_.n_agents), 0.0);
    wins_.assign(std::size_t(cfg_.n_agents), 0);
    positive_bids_.assign(std::size_t(cfg_.n_agents), 0);
  }

  const AuctionConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  int t() const { return t_; }
  bool done() const { return t_ >= cfg_.horizon; }
  const std::vector<AgentProfile>& agents() const { return agents_; }
  const std::vector<ImpressionOpportunity>& ios() const { return ios_; }
  const std::vector<double>& cum_cost() const { return cum_cost_; }
  const std::vector<double>& cum_value() const { return cum_value_; }
  double remaining_budget(int agent) const {
    return agents_[std::size_t(agent)].budget - cum_cost_[std::size_t(agent)];
  }

  // IOs auctioned this step: live window reached, not yet sold.
  std::vector<const ImpressionOpportunity*> live_ios() const {
    std::vector<const ImpressionOpportunity*> out;
    for (std::size_t i = 0; i < ios_.size(); ++i)
      if (!sold_[i] && ios_[i].live_at(t_)) out.push_back(&ios_[i]);
    return out;
  }

  // Runs one auction round. Every entry must reference a live IO the agent
  // is exposed to. With hard_budget on, a bid above the remaining budget is
  // suppressed to zero; budgets are debited IO by IO in id order.
  StepOutcome step(const BidMatrix& bids, bool hard_budget) {
    if (done()) throw InputError("step: episode finished");
    StepOutcome out;
    out.cost.assign(std::size_t(cfg_.n_agents), 0.0);
    out.value.assign(std::size_t(cfg_.n_agents), 0.0);
    out.wins.assign(std::size_t(cfg_.n_agents), 0);
    out.positive_bids.assign(std::size_t(cfg_.n_agents), 0);

    auto live = live_ios();
    // per-IO bid lists, validated
    std::vector<std::vector<std::pair<int, double>>> per_io(live.size());
    for (const auto& e : bids) {
      bool found = false;
      for (std::size_t j = 0; j < live.size(); ++j) {
        if (live[j]->id != e.io_id) continue;
        if (!live[j]->exposed_to(e.agent))
          throw InputError("step: bid on non-exposed IO");
        if (e.bid < 0) throw InputError("step: negative bid");
        per_io[j].push_back({e.agent, e.bid});
        found = true;
        break;
      }
      if (!found) throw InputError("step: bid on non-live IO");
    }

    for (std::size_t j = 0; j < live.size(); ++j) {
      const auto& io = *live[j];
      auto io_bids = per_io[j];
      std::sort(io_bids.begin(), io_bids.end());  // by agent id, deterministic
      if (hard_budget) {
        for (auto& [agent, bid] : io_bids) {
          double rem = agents_[std::size_t(agent)].budget -
                       cum_cost_[std::size_t(agent)] -
                       out.cost[std::size_t(agent)];
          if (bid > rem) bid = 0.0;
        }
      }
      for (auto& [agent, bid] : io_bids)
        if (bid > 0) ++out.positive_bids[std::size_t(agent)];

      auto winners = allocate_and_price(io_bids, io.slots, cfg_.rule);
      if (!winners.empty()) {
        IoOutcome oc;
        oc.io_id = io.id;
        oc.winners = winners;
        for (const auto& w : winners) {
          out.cost[std::size_t(w.agent)] += w.price;
          double v = io.value.at(w.agent);
          if (cfg_.stochastic_conversions) {
            double realized = rng_.bernoulli(io.conv_prob) ? v / io.conv_prob : 0.0;
            out.value[std::size_t(w.agent)] += realized;
          } else {
            out.value[std::size_t(w.agent)] += v;
          }
          ++out.wins[std::size_t(w.agent)];
        }
        sold_[std::size_t(io.id)] = 1;
        out.ios.push_back(std::move(oc));
      }
    }

    for (int a = 0; a < cfg_.n_agents; ++a) {
      cum_cost_[std::size_t(a)] += out.cost[std::size_t(a)];
      cum_value_[std::size_t(a)] += out.value[std::size_t(a)];
      wins_[std::size_t(a)] += out.wins[std::size_t(a)];
      positive_bids_[std::size_t(a)] += out.positive_bids[std::size_t(a)];
    }
    ++t_;
    return out;
  }

 private:
  AuctionConfig cfg_;
  nk::Rng rng_{0};
  std::uint64_t seed_ = 0;
  std::vector<AgentProfile> agents_;
  std::vector<ImpressionOpportunity> ios_;
  std::vector<char> sold_;
  std::vector<double> cum_cost_, cum_value_;
  std::vector<int> wins_, positive_bids_;
  int t_ = 0;
};

// Bid policy: maps the env state at the current step to a bid matrix.
using BidPolicy = std::function<BidMatrix(const AuctionEnv&)>;

inline EpisodeRecord run_episode(const AuctionConfig& cfg, std::uint64_t seed,
                                 const BidPolicy& policy,
                                 const std::string& config_hash = "") {
  AuctionEnv env(cfg, seed);
  EpisodeRecord rec;
  rec.config_hash = config_hash;
  rec.seed = seed;
  rec.agents = env.agents();
  rec.ios = env.ios();
  while (!env.done()) {
    StepRecord sr;
    sr.t = env.t();
    sr.bids = policy(env);
    sr.outcome = env.step(sr.bids, cfg.hard_budget);
    rec.steps.push_back(std::move(sr));
  }
  rec.final_cost = env.cum_cost();
  rec.final_value = env.cum_value();
  return rec;
}

}  // namespace bidlab::auction
