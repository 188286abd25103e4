#pragma once

// KPI engine over completed episodes.

#include <limits>

#include "bidlab/auction/types.hpp"

namespace bidlab::auction {

// Single-episode KPI report. Budget adherence per agent is the 0/1 indicator
// cost <= budget; the aggregate adherence is the fraction of agents within
// budget (callers aggregating many episodes average these indicators over
// all (agent, episode) pairs).
inline KpiReport compute_kpis(const EpisodeRecord& episode) {
  int n = int(episode.agents.size());
  KpiReport rep;
  rep.per_agent.resize(std::size_t(n));
  std::vector<double> cost(std::size_t(n), 0.0), ret(std::size_t(n), 0.0);
  std::vector<int> wins(std::size_t(n), 0), pos_bids(std::size_t(n), 0);
  for (const auto& s : episode.steps) {
    for (int a = 0; a < n; ++a) {
      cost[std::size_t(a)] += s.outcome.cost[std::size_t(a)];
      ret[std::size_t(a)] += s.outcome.value[std::size_t(a)];
      wins[std::size_t(a)] += s.outcome.wins[std::size_t(a)];
      pos_bids[std::size_t(a)] += s.outcome.positive_bids[std::size_t(a)];
    }
  }
  double welfare = 0.0;
  for (int a = 0; a < n; ++a) welfare += ret[std::size_t(a)];

  double agg_cost = 0, agg_ret = 0, adh = 0;
  int agg_wins = 0, agg_bids = 0;
  for (int a = 0; a < n; ++a) {
    auto& row = rep.per_agent[std::size_t(a)];
    double c = cost[std::size_t(a)], r = ret[std::size_t(a)];
    row.ret = r;
    if (r > 0)
      row.cpa = c / r;
    else
      row.cpa = c > 0 ? std::numeric_limits<double>::infinity() : 0.0;
    row.roi = c > 0 ? (r - c) / c : 0.0;
    row.win_rate = pos_bids[std::size_t(a)] > 0
                       ? double(wins[std::size_t(a)]) / pos_bids[std::size_t(a)]
                       : 0.0;
    row.budget_adherence =
        c <= episode.agents[std::size_t(a)].budget + 1e-9 ? 1.0 : 0.0;
    row.social_welfare = welfare;
    agg_cost += c;
    agg_ret += r;
    adh += row.budget_adherence;
    agg_wins += wins[std::size_t(a)];
    agg_bids += pos_bids[std::size_t(a)];
  }
  auto& ag = rep.aggregate;
  ag.ret = agg_ret;
  if (agg_ret > 0)
    ag.cpa = agg_cost / agg_ret;
  else
    ag.cpa = agg_cost > 0 ? std::numeric_limits<double>::infinity() : 0.0;
  ag.roi = agg_cost > 0 ? (agg_ret - agg_cost) / agg_cost : 0.0;
  ag.win_rate = agg_bids > 0 ? double(agg_wins) / agg_bids : 0.0;
  ag.budget_adherence = n > 0 ? adh / n : 0.0;
  ag.social_welfare = welfare;
  return rep;
}

}  // namespace bidlab::auction
