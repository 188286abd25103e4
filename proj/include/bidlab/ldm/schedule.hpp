#pragma once

// Cosine noise schedule for the discrete-step diffusion process.

#include <cmath>
#include <vector>

#include "bidlab/numkit/tensor.hpp"

namespace bidlab::ldm {

struct NoiseSchedule {
  int n_steps = 0;
  // index 0 is the clean signal: alpha_bar[0] = 1, beta[0] = 0
  std::vector<double> alpha_bar;
  std::vector<double> beta;

  static NoiseSchedule cosine(int n_steps = 100, double s = 0.008) {
    if (n_steps < 1) throw nk::ConfigError("schedule: n_steps must be >= 1");
    NoiseSchedule sc;
    sc.n_steps = n_steps;
    auto f = [&](double k) {
      double a = (k / n_steps + s) / (1.0 + s) * (3.14159265358979323846 / 2.0);
      double c = std::cos(a);
      return c * c;
    };
    double f0 = f(0.0);
    sc.alpha_bar.resize(std::size_t(n_steps) + 1);
    sc.beta.resize(std::size_t(n_steps) + 1);
    sc.alpha_bar[0] = 1.0;
    sc.beta[0] = 0.0;
    for (int k = 1; k <= n_steps; ++k) {
      double ab = f(double(k)) / f0;
      double b = 1.0 - ab / sc.alpha_bar[std::size_t(k) - 1];
      b = std::min(std::max(b, 1e-5), 0.999);
      sc.beta[std::size_t(k)] = b;
      sc.alpha_bar[std::size_t(k)] =
          sc.alpha_bar[std::size_t(k) - 1] * (1.0 - b);
      if (!(sc.alpha_bar[std::size_t(k)] <
            sc.alpha_bar[std::size_t(k) - 1]) ||
          sc.alpha_bar[std::size_t(k)] <= 0.0)
        throw nk::ConfigError("schedule: alpha_bar must stay positive and "
                              "strictly decreasing");
    }
    return sc;
  }
};

}  // namespace bidlab::ldm
