#pragma once

// Baseline bid-scaling strategies.

#include <algorithm>

#include "bidlab/auction/types.hpp"

namespace bidlab::bidders {

struct UniformScaler {
  double alpha = 1.0;

  double bid(double value) const { return alpha * value; }
};

// Piecewise multiplier over value quantile bins. `boundaries` are the inner
// bin edges (strictly increasing); bin count = boundaries.size() + 1.
struct NonUniformScaler {
  std::vector<double> boundaries;
  std::vector<double> multipliers;

  void validate() const {
    if (multipliers.size() != boundaries.size() + 1)
      throw auction::ConfigError("non-uniform scaler: bin count mismatch");
    for (std::size_t i = 1; i < boundaries.size(); ++i)
      if (boundaries[i] <= boundaries[i - 1])
        throw auction::ConfigError("non-uniform scaler: boundaries not increasing");
    for (double m : multipliers)
      if (m <= 0) throw auction::ConfigError("non-uniform scaler: multiplier <= 0");
  }

  int bin_of(double value) const {
    int b = 0;
    while (b < int(boundaries.size()) && value >= boundaries[std::size_t(b)]) ++b;
    return b;
  }

  double bid(double value) const {
    return multipliers[std::size_t(bin_of(value))] * value;
  }
};

}  // namespace bidlab::bidders
