#pragma once

// Offline dataset generation: every agent picks a uniform or non-uniform
// bid-scaling strategy per episode with p = 0.5 and parameters drawn from
// documented ranges.

#include <filesystem>
#include <fstream>
#include <variant>

#include "bidlab/auction/env.hpp"
#include "bidlab/auction/io_json.hpp"
#include "bidlab/bidders/scalers.hpp"

namespace bidlab::bidders {

struct DatasetParams {
  double alpha_min = 0.3, alpha_max = 1.5;        // uniform-scaler range
  double mult_min = 0.3, mult_max = 3.0;          // non-uniform bin multipliers
  int value_bins = 4;
  int episodes_per_shard = 256;
  // Fix every agent to a uniform scaler (known-policy datasets).
  bool force_uniform = false;
};

using Strategy = std::variant<UniformScaler, NonUniformScaler>;

// Per-episode strategy assignment, deterministic given rng state.
inline std::vector<Strategy> assign_strategies(const auction::AuctionConfig& cfg,
                                               const DatasetParams& dp,
                                               nk::Rng& rng) {
  std::vector<Strategy> out;
  for (int a = 0; a < cfg.n_agents; ++a) {
    bool uniform = dp.force_uniform || rng.bernoulli(0.5);
    if (uniform) {
      out.push_back(UniformScaler{rng.log_uniform(dp.alpha_min, dp.alpha_max)});
    } else {
      NonUniformScaler s;
      // bin edges from the configured value scale; multipliers log-uniform
      double scale = cfg.base_value_mean;
      for (int b = 1; b < dp.value_bins; ++b)
        s.boundaries.push_back(scale * (0.5 + double(b - 1) * 0.5));
      for (int b = 0; b < dp.value_bins; ++b)
        s.multipliers.push_back(rng.log_uniform(dp.mult_min, dp.mult_max));
      s.validate();
      out.push_back(std::move(s));
    }
  }
  return out;
}

inline double strategy_bid(const Strategy& s, double value) {
  return std::visit([&](const auto& sc) { return sc.bid(value); }, s);
}

// Scaling policy over the current live IO set.
inline auction::BidMatrix scaling_bids(const auction::AuctionEnv& env,
                                       const std::vector<Strategy>& strategies) {
  auction::BidMatrix bids;
  for (const auto* io : env.live_ios())
    for (int a : io->exposure)
      bids.push_back({a, io->id, strategy_bid(strategies[std::size_t(a)],
                                              io->value.at(a))});
  return bids;
}

inline auction::EpisodeRecord generate_episode(const auction::AuctionConfig& cfg,
                                               const DatasetParams& dp,
                                               std::uint64_t seed,
                                               const std::string& hash) {
  // strategy RNG is a separate stream so episode content stays aligned with
  // the env stream for a given seed
  nk::Rng srng = nk::Rng(seed).split(0xb1d5);
  auto strategies = assign_strategies(cfg, dp, srng);
  return auction::run_episode(
      cfg, seed,
      [&](const auction::AuctionEnv& env) { return scaling_bids(env, strategies); },
      hash);
}

// Writes shards + manifest under out_dir. Partial shards are removed on I/O
// failure before rethrowing.
inline auction::Manifest generate_dataset(const auction::AuctionConfig& cfg,
                                          const DatasetParams& dp, int n_episodes,
                                          std::uint64_t seed,
                                          const std::filesystem::path& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  auction::Manifest m;
  m.config_hash = auction::config_hash(cfg);
  m.seed_begin = seed;
  m.total_episodes = n_episodes;
  int shard_idx = 0;
  std::filesystem::path current;
  try {
    for (int e0 = 0; e0 < n_episodes; e0 += dp.episodes_per_shard) {
      int count = std::min(dp.episodes_per_shard, n_episodes - e0);
      char name[32];
      std::snprintf(name, sizeof(name), "shard-%04d.jsonl", shard_idx++);
      current = out_dir / name;
      std::ofstream out(current);
      if (!out) throw auction::InputError("cannot open shard: " + current.string());
      for (int e = 0; e < count; ++e) {
        auto rec = generate_episode(cfg, dp, seed + std::uint64_t(e0 + e),
                                    m.config_hash);
        out << auction::to_json(rec).dump() << "\n";
      }
      if (!out) throw auction::InputError("shard write failed: " + current.string());
      m.shards.push_back({name, seed + std::uint64_t(e0), count});
    }
  } catch (...) {
    if (!current.empty()) std::filesystem::remove(current);
    throw;
  }
  write_manifest(out_dir, m);
  return m;
}

}  // namespace bidlab::bidders
