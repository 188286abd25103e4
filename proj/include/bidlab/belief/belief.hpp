#pragma once

// Incomplete-information support: belief graphs (h pseudo-agent subgraphs
// over the agent's own view) and the response-based distillation loss.

#include "bidlab/graph/encoder.hpp"

namespace bidlab::belief {

using graph::AuctionGraph;
using graph::GraphConfig;
using graph::StepView;

// Agent `agent`'s belief graph: its true subgraph (VE with all exposed IOs,
// VN with sampled non-exposed IOs) plus h pseudo subgraphs in which the
// known IOs are randomly split between exposed and non-exposed roles
// (p = 0.5 each). Deterministic given rng.
inline AuctionGraph build_belief_graph(const StepView& view, int agent,
                                       const GraphConfig& cfg, int h,
                                       nk::Rng& rng) {
  if (h < 1) throw nk::ConfigError("build_belief_graph: h must be >= 1");
  const auto& profile = (*view.agents)[std::size_t(agent)];
  double time_norm = double(view.t) / std::max(1, view.horizon);
  int n_agents = int(view.agents->size());

  // own view: all exposed IOs, plus non-exposed sampled up to cap_m
  std::vector<int> known;  // positions into view.live_ios
  std::vector<char> exposed_flag;
  std::vector<int> non_exposed;
  for (int k = 0; k < int(view.live_ios.size()); ++k) {
    if (view.live_ios[std::size_t(k)]->exposed_to(agent)) {
      known.push_back(k);
      exposed_flag.push_back(1);
    } else {
      non_exposed.push_back(k);
    }
  }
  auto picks = rng.sample_without_replacement(
      int(non_exposed.size()), std::min<int>(cfg.cap_m, int(non_exposed.size())));
  for (int p : picks) {
    known.push_back(non_exposed[std::size_t(p)]);
    exposed_flag.push_back(0);
  }

  AuctionGraph g;
  int n_hubs = 2 + 2 * h;
  g.n_nodes = n_hubs + int(known.size());
  g.ve_idx = {0};
  g.vn_idx = {1};
  std::vector<std::vector<real>> rows(
      std::size_t(g.n_nodes), std::vector<real>(std::size_t(cfg.feat_dim()), real(0)));
  rows[0][1] = real(1);
  rows[1][2] = real(1);
  for (int hub = 0; hub < 2; ++hub)
    graph::detail::fill_agent_features(rows[std::size_t(hub)], cfg, profile,
                                       view.cum_cost[std::size_t(agent)],
                                       view.cum_value[std::size_t(agent)],
                                       time_norm, false);
  for (int p = 0; p < h; ++p) {
    rows[std::size_t(2 + 2 * p)][1] = real(1);
    rows[std::size_t(2 + 2 * p)][3] = real(1);
    rows[std::size_t(3 + 2 * p)][2] = real(1);
    rows[std::size_t(3 + 2 * p)][3] = real(1);
    for (int hub = 0; hub < 2; ++hub)
      graph::detail::fill_agent_features(rows[std::size_t(2 + 2 * p + hub)], cfg,
                                         profile, 0.0, 0.0, time_norm, true);
  }
  for (std::size_t j = 0; j < known.size(); ++j) {
    int node = n_hubs + int(j);
    const auto& io = *view.live_ios[std::size_t(known[j])];
    g.io_node.push_back(node);
    g.io_ids.push_back(io.id);
    rows[std::size_t(node)][0] = real(1);
    graph::detail::fill_io_features(rows[std::size_t(node)], cfg, io, view.t,
                                    n_agents);
    // true subgraph edge
    graph::detail::add_undirected(g, exposed_flag[j] ? 0 : 1, node);
    // pseudo subgraphs: each known IO takes exactly one role per pseudo agent
    for (int p = 0; p < h; ++p) {
      int hub = rng.bernoulli(0.5) ? 2 + 2 * p : 3 + 2 * p;
      graph::detail::add_undirected(g, hub, node);
    }
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

// Response-based distillation: MSE between student and teacher embeddings.
// Teacher values are detached and receive no gradient.
inline nk::Tensor<real> kd_loss(const nk::Tensor<real>& student,
                                const nk::Tensor<real>& teacher) {
  if (student.shape() != teacher.shape())
    throw nk::DimensionError("kd_loss: shape mismatch");
  auto d = sub(student, detach(teacher));
  return mean(mul(d, d));
}

}  // namespace bidlab::belief
