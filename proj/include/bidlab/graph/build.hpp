#pragma once

// Bipartite agent-IO graph construction. Each agent contributes two virtual
// hub nodes: VE (exposed IOs, complete edges) and VN (non-exposed IOs,
// uniformly sampled up to cap_m). Cross-agent information flows through
// shared IO nodes only; there is no VE-VN edge.

#include "bidlab/auction/env.hpp"
#include "bidlab/numkit/tensor.hpp"
#include "bidlab/real.hpp"

namespace bidlab::graph {

struct GraphConfig {
  int d = 64;     // embedding dimension
  int layers = 2;
  int cap_m = 64;
  int n_categories = 4;
  int heads = 4;  // EC attention heads

  // node feature layout: role flags, IO block, category one-hot, agent block
  int feat_dim() const { return 4 + 6 + n_categories + 5; }
};

// Everything the builder needs about one time-step.
struct StepView {
  int t = 0;
  int horizon = 1;
  std::vector<const auction::ImpressionOpportunity*> live_ios;
  const std::vector<auction::AgentProfile>* agents = nullptr;
  std::vector<double> cum_cost, cum_value;
};

inline StepView step_view(const auction::AuctionEnv& env) {
  StepView v;
  v.t = env.t();
  v.horizon = env.config().horizon;
  v.live_ios = env.live_ios();
  v.agents = &env.agents();
  v.cum_cost = env.cum_cost();
  v.cum_value = env.cum_value();
  return v;
}

// Replays an episode record into per-step views (live set reconstructed from
// recorded sale times). Views index into the record, which must outlive them.
inline std::vector<StepView> step_views_from_record(
    const auction::EpisodeRecord& rec, int horizon) {
  std::vector<int> sold_at(rec.ios.size(), -1);
  for (const auto& s : rec.steps)
    for (const auto& oc : s.outcome.ios) sold_at[std::size_t(oc.io_id)] = s.t;
  int n = int(rec.agents.size());
  std::vector<double> cost(std::size_t(n), 0.0), value(std::size_t(n), 0.0);
  std::vector<StepView> views;
  for (int t = 0; t < int(rec.steps.size()); ++t) {
    StepView v;
    v.t = t;
    v.horizon = horizon;
    v.agents = &rec.agents;
    v.cum_cost = cost;
    v.cum_value = value;
    for (const auto& io : rec.ios)
      if (io.live_at(t) && (sold_at[std::size_t(io.id)] < 0 ||
                            sold_at[std::size_t(io.id)] >= t))
        v.live_ios.push_back(&io);
    views.push_back(std::move(v));
    const auto& oc = rec.steps[std::size_t(t)].outcome;
    for (int a = 0; a < n; ++a) {
      cost[std::size_t(a)] += oc.cost[std::size_t(a)];
      value[std::size_t(a)] += oc.value[std::size_t(a)];
    }
  }
  return views;
}

struct AuctionGraph {
  nk::Tensor<real> features;       // (N x F) constant leaf
  std::vector<int> src, dst;       // directed edges, both orientations + self loops
  std::vector<int> ve_idx, vn_idx; // hub node index per agent
  std::vector<int> io_node;        // node index per live IO position
  std::vector<int> io_ids;         // io id aligned with io_node
  int n_nodes = 0;
};

namespace detail {

inline void add_undirected(AuctionGraph& g, int a, int b) {
  g.src.push_back(a);
  g.dst.push_back(b);
  g.src.push_back(b);
  g.dst.push_back(a);
}

inline void fill_agent_features(std::vector<real>& row, const GraphConfig& cfg,
                                const auction::AgentProfile& a, double cum_cost,
                                double cum_value, double time_norm,
                                bool pseudo) {
  if (!pseudo) {
    row[std::size_t(10 + a.category % cfg.n_categories)] = real(1);
    double remaining = (a.budget - cum_cost) / a.budget;
    int base = 10 + cfg.n_categories;
    row[std::size_t(base + 0)] = real(a.budget / 100.0);
    row[std::size_t(base + 1)] = real(std::max(0.0, remaining));
    row[std::size_t(base + 2)] = real(cum_cost / a.budget);
    row[std::size_t(base + 3)] = real(cum_value / a.budget);
    row[std::size_t(base + 4)] = real(time_norm);
  } else {
    row[std::size_t(10 + cfg.n_categories + 4)] = real(time_norm);
  }
}

inline void fill_io_features(std::vector<real>& row, const GraphConfig& cfg,
                             const auction::ImpressionOpportunity& io, int t,
                             int n_agents) {
  (void)cfg;
  double vmean = 0.0, vmax = 0.0;
  for (const auto& [agent, v] : io.value) {
    (void)agent;
    vmean += v;
    vmax = std::max(vmax, v);
  }
  if (!io.value.empty()) vmean /= double(io.value.size());
  row[4] = real(vmean);
  row[5] = real(vmax);
  row[6] = real(double(io.exposure.size()) / std::max(1, n_agents));
  row[7] = real(io.slots);
  int span = std::max(1, io.t_end - io.t_start);
  row[8] = real(double(t - io.t_start) / span);
  row[9] = real(1);
}

}  // namespace detail

// Deterministic given rng. Exposed edges are complete; non-exposed edges are
// sampled without replacement up to cap_m per agent.
inline AuctionGraph build_graph(const StepView& view, const GraphConfig& cfg,
                                nk::Rng& rng) {
  const auto& agents = *view.agents;
  int n_agents = int(agents.size());
  int n_ios = int(view.live_ios.size());
  AuctionGraph g;
  g.n_nodes = 2 * n_agents + n_ios;
  std::vector<std::vector<real>> rows(
      std::size_t(g.n_nodes), std::vector<real>(std::size_t(cfg.feat_dim()), real(0)));
  double time_norm = double(view.t) / std::max(1, view.horizon);

  for (int i = 0; i < n_agents; ++i) {
    g.ve_idx.push_back(2 * i);
    g.vn_idx.push_back(2 * i + 1);
    rows[std::size_t(2 * i)][1] = real(1);
    rows[std::size_t(2 * i + 1)][2] = real(1);
    for (int h = 0; h < 2; ++h)
      detail::fill_agent_features(rows[std::size_t(2 * i + h)], cfg, agents[std::size_t(i)],
                                  view.cum_cost[std::size_t(i)],
                                  view.cum_value[std::size_t(i)], time_norm, false);
  }
  for (int k = 0; k < n_ios; ++k) {
    int node = 2 * n_agents + k;
    g.io_node.push_back(node);
    g.io_ids.push_back(view.live_ios[std::size_t(k)]->id);
    rows[std::size_t(node)][0] = real(1);
    detail::fill_io_features(rows[std::size_t(node)], cfg,
                             *view.live_ios[std::size_t(k)], view.t, n_agents);
  }

  // exposed edges: complete
  for (int k = 0; k < n_ios; ++k)
    for (int a : view.live_ios[std::size_t(k)]->exposure)
      detail::add_undirected(g, g.ve_idx[std::size_t(a)], 2 * n_agents + k);
  // non-exposed edges: sampled up to cap_m
  for (int i = 0; i < n_agents; ++i) {
    std::vector<int> candidates;
    for (int k = 0; k < n_ios; ++k)
      if (!view.live_ios[std::size_t(k)]->exposed_to(i)) candidates.push_back(k);
    auto picks = rng.sample_without_replacement(int(candidates.size()),
                                               std::min<int>(cfg.cap_m, int(candidates.size())));
    for (int p : picks)
      detail::add_undirected(g, g.vn_idx[std::size_t(i)],
                             2 * n_agents + candidates[std::size_t(p)]);
  }
  for (int v = 0; v < g.n_nodes; ++v) {
    g.src.push_back(v);
    g.dst.push_back(v);
  }

  std::vector<real> flat;
  flat.reserve(std::size_t(g.n_nodes) * cfg.feat_dim());
  for (auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  g.features = nk::Tensor<real>::from(std::move(flat), {g.n_nodes, cfg.feat_dim()});
  return g;
}

}  // namespace bidlab::graph
