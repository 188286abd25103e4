#pragma once

// Central finite-difference gradient checking. Runs in whatever precision T
// the caller instantiates; tests use double.

#include <functional>

#include "bidlab/numkit/tensor.hpp"

namespace bidlab::nk {

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// f maps a leaf tensor to a scalar Tensor on a fresh tape each call.
// Returns the max relative error between autodiff and central differences.
template <class T>
double grad_check(const std::function<Tensor<T>(Tensor<T>&)>& f, Tensor<T> x,
                  double eps = 1e-5) {
  auto y = f(x);
  if (!std::isfinite(double(y.item()))) throw EvalError("grad_check: f(x) not finite");
  x.zero_grad();
  backward(y);
  std::vector<T> g = x.node()->grad;
  if (g.empty()) g.assign(x.data().size(), T(0));

  double max_rel = 0.0;
  for (std::size_t i = 0; i < x.data().size(); ++i) {
    T saved = x.data()[i];
    x.data()[i] = saved + T(eps);
    double yp = double(f(x).item());
    x.data()[i] = saved - T(eps);
    double ym = double(f(x).item());
    x.data()[i] = saved;
    double fd = (yp - ym) / (2.0 * eps);
    double ad = double(g[i]);
    double denom = std::max({std::abs(fd), std::abs(ad), 1.0});
    max_rel = std::max(max_rel, std::abs(fd - ad) / denom);
  }
  return max_rel;
}

}  // namespace bidlab::nk
