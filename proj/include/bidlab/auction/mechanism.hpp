#pragma once

// FPA / GSP / VCG allocation and pricing for identical slots.
// Ties in bid rank break toward the lower agent id.

#include <algorithm>

#include "bidlab/auction/types.hpp"

namespace bidlab::auction {

// bids: (agent id, bid) pairs. Winners are the top-`slots` positive bidders.
inline std::vector<WinnerEntry> allocate_and_price(
    std::vector<std::pair<int, double>> bids, int slots, AllocationRule rule) {
  for (auto& [agent, bid] : bids) {
    (void)agent;
    if (bid < 0) throw InputError("allocate_and_price: negative bid");
  }
  std::vector<std::pair<int, double>> ranked;
  for (auto& b : bids)
    if (b.second > 0) ranked.push_back(b);
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  int n_win = std::min<int>(slots, int(ranked.size()));
  std::vector<WinnerEntry> winners;
  winners.reserve(std::size_t(n_win));
  for (int r = 0; r < n_win; ++r) {
    WinnerEntry w;
    w.agent = ranked[std::size_t(r)].first;
    switch (rule) {
      case AllocationRule::FPA:
        w.price = ranked[std::size_t(r)].second;
        break;
      case AllocationRule::GSP:
        w.price = std::size_t(r + 1) < ranked.size()
                      ? ranked[std::size_t(r + 1)].second
                      : 0.0;
        break;
      case AllocationRule::VCG:
        // identical slots: the externality is the first excluded bid
        w.price = std::size_t(slots) < ranked.size()
                      ? ranked[std::size_t(slots)].second
                      : 0.0;
        break;
    }
    winners.push_back(w);
  }
  return winners;
}

}  // namespace bidlab::auction
