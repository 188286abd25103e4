#pragma once

// Latent trajectory diffusion with inpainting-style conditioning. Training
// uses noise prediction on the unknown region of a masked trajectory;
// generation repeatedly re-injects the known region at the matching noise
// level and clamps it exactly at the end.

#include <algorithm>

#include "bidlab/auction/types.hpp"
#include "bidlab/ldm/denoiser.hpp"
#include "bidlab/ldm/schedule.hpp"

namespace bidlab::ldm {

struct DiffusionConfig {
  DenoiserConfig net;
  int n_steps = 100;
  int resample = 1;  // inner repaint loops per step
};

class LatentDiffusion {
 public:
  LatentDiffusion() = default;
  LatentDiffusion(const DiffusionConfig& cfg, nk::Rng& rng)
      : cfg_(cfg),
        schedule_(NoiseSchedule::cosine(cfg.n_steps)),
        net_(cfg.net, rng) {}

  const DiffusionConfig& config() const { return cfg_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  ConvDenoiser& net() { return net_; }
  nk::ParamSet<real>& params() { return net_.params(); }
  int warning_count() const { return warnings_; }

  // Closed-form forward process: x_k = sqrt(ab_k) x0 + sqrt(1-ab_k) eps.
  nk::Tensor<real> q_sample(const nk::Tensor<real>& x0, int k,
                            const nk::Tensor<real>& eps) const {
    check_step(k);
    if (x0.shape() != eps.shape())
      throw nk::DimensionError("q_sample: shape mismatch");
    double ab = schedule_.alpha_bar[std::size_t(k)];
    return add(mul_scalar(x0, real(std::sqrt(ab))),
               mul_scalar(eps, real(std::sqrt(1.0 - ab))));
  }

  // One optimization step on a single masked trajectory. mask[t]=1 marks a
  // known step (conditioning); the loss covers unknown steps only. Returns
  // the loss value.
  double train_step(const nk::Tensor<real>& x0, const std::vector<real>& mask,
                    const nk::Tensor<real>& cond, nk::Rng& rng,
                    nk::Adam<real>& opt) {
    int T = x0.rows(), d = x0.cols();
    if (int(mask.size()) != T)
      throw nk::DimensionError("train_step: mask length");
    int unknown = 0;
    for (auto m : mask)
      if (m < real(0.5)) ++unknown;
    if (unknown == 0) {
      ++warnings_;  // nothing to learn from a fully observed trajectory
      return 0.0;
    }
    int k = 1 + int(rng.randint(std::uint64_t(cfg_.n_steps)));
    auto eps = gaussian_like(T, d, rng);
    auto xk = q_sample(nk::detach(x0), k, eps);
    // known steps stay clean in the network input
    auto xin = blend_rows(x0, xk, mask);
    auto pred = net_(xin, mask, cond, k);
    // masked mean squared error over unknown rows
    std::vector<real> inv(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i)
      inv[i] = mask[i] < real(0.5) ? real(1) : real(0);
    auto diff = sub(pred, nk::detach(eps));
    auto masked = nk::mul_colvec(mul(diff, diff), nk::Tensor<real>::from(inv, {T}));
    auto loss = mul_scalar(sum(masked), real(1.0 / (double(unknown) * d)));
    net_.params().zero_grad();
    nk::backward(loss);
    opt.step(net_.params());
    return double(loss.item());
  }

  // Generate the unknown region given the known steps of `known` (rows where
  // mask[t]=1). Returns a full (T x d) trajectory whose known rows equal the
  // input exactly.
  nk::Tensor<real> sample_inpaint(const nk::Tensor<real>& known,
                                  const std::vector<real>& mask,
                                  const nk::Tensor<real>& cond,
                                  nk::Rng& rng) const {
    nk::NoGradGuard ng;
    int T = known.rows(), d = known.cols();
    if (int(mask.size()) != T)
      throw nk::DimensionError("sample_inpaint: mask length");
    auto x = gaussian_like(T, d, rng);
    for (int k = cfg_.n_steps; k >= 1; --k) {
      for (int u = 0; u < std::max(1, cfg_.resample); ++u) {
        // re-inject the known region at this noise level
        auto xk_known = q_sample(known, k, gaussian_like(T, d, rng));
        x = blend_rows(xk_known, x, mask);
        x = denoise_step(x, mask, cond, k, rng);
        if (u + 1 < std::max(1, cfg_.resample) && k > 1) {
          // jump back one level to harmonize known and generated content
          double b = schedule_.beta[std::size_t(k)];
          auto e = gaussian_like(T, d, rng);
          x = add(mul_scalar(x, real(std::sqrt(1.0 - b))),
                  mul_scalar(e, real(std::sqrt(b))));
        }
      }
    }
    return blend_rows(known, x, mask);  // exact clamp of the known rows
  }

  // Monte-Carlo forecast score in nats per dimension over the unknown region:
  // a unit-variance Gaussian log-density at the mean completion error.
  double forecast_loglik(const nk::Tensor<real>& truth,
                         const std::vector<real>& mask,
                         const nk::Tensor<real>& cond, nk::Rng& rng,
                         int n_samples = 8) const {
    return forecast_loglik(truth, truth, mask, cond, rng, n_samples);
  }

  // Same score, but completions are conditioned on `known` (e.g. a partial
  // observation) while errors are measured against `truth`.
  double forecast_loglik(const nk::Tensor<real>& known,
                         const nk::Tensor<real>& truth,
                         const std::vector<real>& mask,
                         const nk::Tensor<real>& cond, nk::Rng& rng,
                         int n_samples = 8) const {
    if (n_samples < 1) throw nk::ConfigError("forecast: n_samples >= 1");
    if (known.rows() != truth.rows() || known.cols() != truth.cols())
      throw auction::InputError("forecast: known/truth shape mismatch");
    int T = truth.rows(), d = truth.cols();
    int unknown = 0;
    for (auto m : mask)
      if (m < real(0.5)) ++unknown;
    if (unknown == 0) throw auction::InputError("forecast: nothing to score");
    double mse = 0.0;
    for (int s = 0; s < n_samples; ++s) {
      auto gen = sample_inpaint(known, mask, cond, rng);
      double acc = 0.0;
      for (int t = 0; t < T; ++t) {
        if (mask[std::size_t(t)] >= real(0.5)) continue;
        for (int j = 0; j < d; ++j) {
          double e = double(gen.at(t, j)) - double(truth.at(t, j));
          acc += e * e;
        }
      }
      mse += acc / (double(unknown) * d);
    }
    mse /= n_samples;
    return -0.5 * mse - 0.5 * std::log(2.0 * 3.14159265358979323846);
  }

  void save(const std::string& path) const { net_.save(path); }
  void load(const std::string& path) { net_.load(path); }

 private:
  void check_step(int k) const {
    if (k < 1 || k > cfg_.n_steps)
      throw nk::ConfigError("diffusion: step out of range");
  }

  static nk::Tensor<real> gaussian_like(int T, int d, nk::Rng& rng) {
    auto t = nk::Tensor<real>::zeros({T, d});
    for (auto& v : t.data()) v = real(rng.normal());
    return t;
  }

  // rows of `a` where mask=1, rows of `b` elsewhere
  static nk::Tensor<real> blend_rows(const nk::Tensor<real>& a,
                                     const nk::Tensor<real>& b,
                                     const std::vector<real>& mask) {
    int T = a.rows();
    std::vector<real> inv(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) inv[i] = real(1) - mask[i];
    auto mcol = nk::Tensor<real>::from(mask, {T});
    auto icol = nk::Tensor<real>::from(inv, {T});
    return add(nk::mul_colvec(a, mcol), nk::mul_colvec(b, icol));
  }

  // one reverse step from level k to k-1 (ancestral, noise-prediction form)
  nk::Tensor<real> denoise_step(const nk::Tensor<real>& xk,
                                const std::vector<real>& mask,
                                const nk::Tensor<real>& cond, int k,
                                nk::Rng& rng) const {
    double ab = schedule_.alpha_bar[std::size_t(k)];
    double ab_prev = schedule_.alpha_bar[std::size_t(k) - 1];
    double b = schedule_.beta[std::size_t(k)];
    double a = 1.0 - b;
    auto eps = net_(xk, mask, cond, k);
    // Posterior mean in clean-signal form: recover the predicted clean
    // trajectory, clamp it to the unit-scale latent range, and mix it with
    // the current iterate. Clamping the signal estimate (rather than the
    // iterate) keeps the chain stable at the high-noise end of the schedule,
    // where the epsilon form would amplify prediction error by 1/sqrt(1-b).
    auto x0 = clamp_values(mul_scalar(
        sub(xk, mul_scalar(eps, real(std::sqrt(1.0 - ab)))),
        real(1.0 / std::sqrt(ab))));
    if (k == 1) return x0;
    auto mean = add(mul_scalar(x0, real(std::sqrt(ab_prev) * b / (1.0 - ab))),
                    mul_scalar(xk, real(std::sqrt(a) * (1.0 - ab_prev) /
                                        (1.0 - ab))));
    double var = b * (1.0 - ab_prev) / (1.0 - ab);
    auto noise = gaussian_like(xk.rows(), xk.cols(), rng);
    return add(mean, mul_scalar(noise, real(std::sqrt(var))));
  }

  static nk::Tensor<real> clamp_values(nk::Tensor<real> x) {
    constexpr real kLimit = real(4);
    for (auto& v : x.data()) v = std::clamp(v, -kLimit, kLimit);
    return x;
  }

  DiffusionConfig cfg_;
  NoiseSchedule schedule_;
  ConvDenoiser net_;
  int warnings_ = 0;
};

}  // namespace bidlab::ldm
