#pragma once

// Sampling-based planner: draw candidate latent futures from the diffusion
// model, score them with the value head under preference weights, and keep
// the best budget-feasible one. With no feasible candidate the caller falls
// back to zero bids for the horizon.

#include <functional>

#include "bidlab/align/value.hpp"
#include "bidlab/ldm/diffusion.hpp"

namespace bidlab::align {

struct PlanCandidate {
  int id = -1;  // draw index, stable provenance within one plan call
  nk::Tensor<real> traj;
  double score = 0.0;
  bool feasible = false;
};

struct PlanResult {
  int chosen = -1;  // index into candidates; -1 means zero-bid fallback
  bool fallback = false;
  std::vector<PlanCandidate> candidates;

  const nk::Tensor<real>& trajectory() const {
    if (chosen < 0) throw auction::InputError("plan: no chosen trajectory");
    return candidates[std::size_t(chosen)].traj;
  }
};

// generate(i) -> candidate trajectory; kpi_of(traj) -> (1 x K) KPI forecast;
// feasible(traj) -> budget feasibility.
inline PlanResult best_of_n_plan(
    int n, const std::function<nk::Tensor<real>(int)>& generate,
    const std::function<nk::Tensor<real>(const nk::Tensor<real>&)>& kpi_of,
    const std::vector<double>& weights,
    const std::function<bool(const nk::Tensor<real>&)>& feasible) {
  if (n < 1) throw nk::ConfigError("plan: n must be >= 1");
  PlanResult r;
  std::vector<nk::Tensor<real>> kpis;
  for (int i = 0; i < n; ++i) {
    PlanCandidate c;
    c.id = i;
    c.traj = generate(i);
    c.feasible = feasible(c.traj);
    kpis.push_back(kpi_of(c.traj));
    r.candidates.push_back(std::move(c));
  }
  auto all = nk::Tensor<real>::zeros({n, kpis[0].cols()});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < kpis[0].cols(); ++j)
      all.data()[std::size_t(i * kpis[0].cols() + j)] = kpis[std::size_t(i)].at(0, j);
  auto scores = score_candidates(all, weights);
  double best = 0;
  for (int i = 0; i < n; ++i) {
    r.candidates[std::size_t(i)].score = scores[std::size_t(i)];
    if (!r.candidates[std::size_t(i)].feasible) continue;
    if (r.chosen < 0 || scores[std::size_t(i)] > best) {
      r.chosen = i;
      best = scores[std::size_t(i)];
    }
  }
  r.fallback = r.chosen < 0;
  return r;
}

}  // namespace bidlab::align
