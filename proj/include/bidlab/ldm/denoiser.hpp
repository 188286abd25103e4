#pragma once

// Temporal convolutional noise predictor. Input is a latent trajectory plus a
// binary known-mask channel; conditioning (diffusion step + context vector)
// enters every residual block through per-channel scale/shift.

#include "bidlab/numkit/checkpoint.hpp"
#include "bidlab/numkit/nn.hpp"
#include "bidlab/real.hpp"

namespace bidlab::ldm {

struct DenoiserConfig {
  int d = 64;        // latent dimension per step
  int cond_dim = 64; // conditioning vector width
  int hidden = 64;   // conv channels
  int blocks = 4;
  int kernel = 5;
  int step_emb = 32; // sinusoidal embedding width (even)
};

inline std::vector<real> sinusoidal_embedding(int k, int width) {
  if (width < 2 || width % 2 != 0)
    throw nk::ConfigError("step embedding width must be even and >= 2");
  std::vector<real> e(std::size_t(width), real(0));
  int half = width / 2;
  for (int j = 0; j < half; ++j) {
    double freq = std::pow(10000.0, -double(j) / half);
    e[std::size_t(j)] = real(std::sin(k * freq));
    e[std::size_t(half + j)] = real(std::cos(k * freq));
  }
  return e;
}

class ConvDenoiser {
 public:
  ConvDenoiser() = default;
  ConvDenoiser(const DenoiserConfig& cfg, nk::Rng& rng,
               const std::string& prefix = "ldm")
      : cfg_(cfg) {
    if (cfg.kernel % 2 == 0)
      throw nk::ConfigError("denoiser: kernel size must be odd");
    int cin = cfg.d + 1;  // latent channels + mask channel
    in_w_ = params_.add(prefix + ".in.w",
                        nk::Tensor<real>::glorot({cfg.hidden, cin, cfg.kernel},
                                                 cin * cfg.kernel, cfg.hidden, rng));
    in_b_ = params_.add(prefix + ".in.b", nk::Tensor<real>::zeros({cfg.hidden}, true));
    for (int b = 0; b < cfg.blocks; ++b) {
      auto tag = prefix + ".blk" + std::to_string(b);
      int fan = cfg.hidden * cfg.kernel;
      c1_w_.push_back(params_.add(tag + ".c1.w",
          nk::Tensor<real>::glorot({cfg.hidden, cfg.hidden, cfg.kernel}, fan,
                                   cfg.hidden, rng)));
      c1_b_.push_back(params_.add(tag + ".c1.b",
          nk::Tensor<real>::zeros({cfg.hidden}, true)));
      c2_w_.push_back(params_.add(tag + ".c2.w",
          nk::Tensor<real>::glorot({cfg.hidden, cfg.hidden, cfg.kernel}, fan,
                                   cfg.hidden, rng)));
      c2_b_.push_back(params_.add(tag + ".c2.b",
          nk::Tensor<real>::zeros({cfg.hidden}, true)));
      film_.emplace_back(cfg.step_emb + cfg.cond_dim, 2 * cfg.hidden, rng,
                         params_, tag + ".film");
    }
    out_w_ = params_.add(prefix + ".out.w",
        nk::Tensor<real>::glorot({cfg.d, cfg.hidden, cfg.kernel},
                                 cfg.hidden * cfg.kernel, cfg.d, rng));
    out_b_ = params_.add(prefix + ".out.b", nk::Tensor<real>::zeros({cfg.d}, true));
  }

  const DenoiserConfig& config() const { return cfg_; }
  nk::ParamSet<real>& params() { return params_; }
  const nk::ParamSet<real>& params() const { return params_; }

  // x: (T x d) noisy latents; mask: length T, 1 where the step is known;
  // cond: (1 x cond_dim); k: diffusion step. Returns predicted noise (T x d).
  nk::Tensor<real> operator()(const nk::Tensor<real>& x,
                              const std::vector<real>& mask,
                              const nk::Tensor<real>& cond, int k) const {
    int T = x.rows();
    if (x.cols() != cfg_.d) throw nk::DimensionError("denoiser: latent width");
    if (int(mask.size()) != T) throw nk::DimensionError("denoiser: mask length");
    if (cond.numel() != cfg_.cond_dim)
      throw nk::DimensionError("denoiser: conditioning width");
    // channels-first input with the mask appended as one extra channel
    auto mcol = nk::Tensor<real>::from(mask, {T, 1});
    auto xin = nk::transpose(nk::concat_cols<real>({x, mcol}));  // (d+1 x T)
    auto h = nk::conv1d(xin, in_w_, in_b_);

    auto emb = sinusoidal_embedding(k, cfg_.step_emb);
    auto cvec = nk::concat_cols<real>(
        {nk::Tensor<real>::from(emb, {1, cfg_.step_emb}), nk::as_row(cond)});
    auto ones_row = nk::Tensor<real>::full({1, T}, real(1));
    for (int b = 0; b < cfg_.blocks; ++b) {
      auto fs = film_[std::size_t(b)](cvec);  // (1 x 2C)
      auto scale = nk::transpose(nk::slice_cols(fs, 0, cfg_.hidden));
      auto shift = nk::transpose(nk::slice_cols(fs, cfg_.hidden, 2 * cfg_.hidden));
      auto u = nk::conv1d(gelu(h), c1_w_[std::size_t(b)], c1_b_[std::size_t(b)]);
      // scale initialized around zero acts as (1 + scale)
      u = add(mul(u, nk::matmul(nk::add_scalar(scale, real(1)), ones_row)),
              nk::matmul(shift, ones_row));
      u = nk::conv1d(gelu(u), c2_w_[std::size_t(b)], c2_b_[std::size_t(b)]);
      h = add(h, u);
    }
    return nk::transpose(nk::conv1d(gelu(h), out_w_, out_b_));
  }

  void save(const std::string& path) const { nk::save_params(path, params_); }
  void load(const std::string& path) { nk::load_params(path, params_); }

 private:
  DenoiserConfig cfg_;
  nk::ParamSet<real> params_;
  nk::Tensor<real> in_w_, in_b_, out_w_, out_b_;
  std::vector<nk::Tensor<real>> c1_w_, c1_b_, c2_w_, c2_b_;
  std::vector<nk::Linear<real>> film_;
};

}  // namespace bidlab::ldm
