#pragma once

// Rejection fine-tuning round for the diffusion planner: sample completions
// per context, keep the top scoring fraction, fine-tune the denoiser on the
// kept trajectories, and report provenance for auditing.

#include <algorithm>

#include "bidlab/align/planner.hpp"

namespace bidlab::align {

struct RaftContext {
  nk::Tensor<real> known;      // (T x d), known rows hold real history
  std::vector<real> mask;      // 1 = known step
  nk::Tensor<real> cond;       // (1 x cond_dim)
};

struct RaftKept {
  int context = -1;
  int draw = -1;  // sample index within the context
  double score = 0.0;
};

struct RaftResult {
  std::vector<RaftKept> kept;
  double mean_score = 0.0;       // over all drawn samples
  double mean_kept_score = 0.0;  // over kept samples
  int fine_tune_steps = 0;
  bool degenerate = false;  // all scores tied; kept samples chosen at random
};

// score(traj) -> scalar preference score. keep_fraction q in (0,1]; each
// context keeps ceil(q*m) samples. epochs: fine-tune passes over kept set.
inline RaftResult raft_round(
    ldm::LatentDiffusion& dm, const std::vector<RaftContext>& contexts, int m,
    double q, const std::function<double(const nk::Tensor<real>&)>& score,
    int epochs, nk::Adam<real>& opt, nk::Rng& rng) {
  if (m < 1) throw nk::ConfigError("raft: m must be >= 1");
  if (q <= 0.0 || q > 1.0) throw nk::ConfigError("raft: q must lie in (0,1]");
  if (contexts.empty()) throw auction::InputError("raft: no contexts");
  int keep = int(std::ceil(q * m));

  RaftResult r;
  std::vector<std::pair<RaftKept, nk::Tensor<real>>> kept_trajs;
  double lo = 1e300, hi = -1e300;
  for (std::size_t c = 0; c < contexts.size(); ++c) {
    const auto& ctx = contexts[c];
    std::vector<std::pair<double, int>> ranked;
    std::vector<nk::Tensor<real>> trajs;
    for (int i = 0; i < m; ++i) {
      auto t = dm.sample_inpaint(ctx.known, ctx.mask, ctx.cond, rng);
      double s = score(t);
      r.mean_score += s;
      lo = std::min(lo, s);
      hi = std::max(hi, s);
      ranked.push_back({s, i});
      trajs.push_back(std::move(t));
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](auto& a, auto& b) { return a.first > b.first; });
    if (hi - lo < 1e-12) {
      // no signal to rank on: keep a random subset instead of a biased prefix
      std::vector<int> order(std::size_t(m), 0);
      for (int i = 0; i < m; ++i) order[std::size_t(i)] = i;
      rng.shuffle(order);
      for (int i = 0; i < m; ++i) ranked[std::size_t(i)].second = order[std::size_t(i)];
    }
    for (int i = 0; i < keep; ++i) {
      RaftKept k;
      k.context = int(c);
      k.draw = ranked[std::size_t(i)].second;
      k.score = ranked[std::size_t(i)].first;
      r.mean_kept_score += k.score;
      kept_trajs.push_back({k, trajs[std::size_t(k.draw)]});
      r.kept.push_back(k);
    }
  }
  r.mean_score /= double(contexts.size() * m);
  r.mean_kept_score /= double(r.kept.size());
  r.degenerate = hi - lo < 1e-12;

  for (int e = 0; e < epochs; ++e)
    for (auto& [k, traj] : kept_trajs)
      dm.train_step(traj, contexts[std::size_t(k.context)].mask,
                    contexts[std::size_t(k.context)].cond, rng, opt);
  r.fine_tune_steps = epochs * int(kept_trajs.size());
  return r;
}

}  // namespace bidlab::align
