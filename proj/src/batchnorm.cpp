#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "anogan/ops.hpp"

namespace anogan::ops {

BatchNormStats BatchNormStats::fresh(std::size_t channels) {
  BatchNormStats s;
  s.running_mean = Tensor({channels}, 0.0f);
  s.running_var = Tensor({channels}, 1.0f);
  s.initialized = true;
  return s;
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormMode mode,
                 BatchNormStats& stats, Tape* tape) {
  if (x.rank() < 2) {
    throw std::invalid_argument("batchnorm: input must have a channel axis, got " +
                                shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), s = x.numel() / (n * c);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c}) {
    throw std::invalid_argument("batchnorm: gamma/beta must be [" + std::to_string(c) + "]");
  }
  if (mode == BatchNormMode::train && n < 2) {
    throw std::invalid_argument("batchnorm: train mode needs batch size >= 2");
  }
  if (mode == BatchNormMode::eval && !stats.initialized) {
    throw std::logic_error("batchnorm: eval mode before running statistics exist");
  }
  if (mode == BatchNormMode::train && !stats.initialized) {
    stats.running_mean = Tensor({c}, 0.0f);
    stats.running_var = Tensor({c}, 1.0f);
  }
  if (stats.running_mean.shape() != Shape{c} || stats.running_var.shape() != Shape{c}) {
    throw std::invalid_argument("batchnorm: running statistics do not match channel count");
  }

  const std::size_t m = n * s;
  auto xhat = std::make_shared<std::vector<float>>(x.numel());
  auto inv_std = std::make_shared<std::vector<float>>(c);
  const auto xv = x.data();
  auto& xh = *xhat;

  for (std::size_t ch = 0; ch < c; ++ch) {
    double mu, var;
    if (mode == BatchNormMode::train) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < s; ++j) acc += xv[(i * c + ch) * s + j];
      mu = acc / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < s; ++j) {
          const double d = xv[(i * c + ch) * s + j] - mu;
          sq += d * d;
        }
      var = sq / static_cast<double>(m);
      const double mom = stats.momentum;
      auto rm = stats.running_mean.data();
      auto rv = stats.running_var.data();
      rm[ch] = static_cast<float>(mom * rm[ch] + (1.0 - mom) * mu);
      rv[ch] = static_cast<float>(mom * rv[ch] + (1.0 - mom) * var);
    } else {
      mu = stats.running_mean.data()[ch];
      var = stats.running_var.data()[ch];
    }
    const double is = 1.0 / std::sqrt(var + stats.epsilon);
    (*inv_std)[ch] = static_cast<float>(is);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        const std::size_t k = (i * c + ch) * s + j;
        xh[k] = static_cast<float>((xv[k] - mu) * is);
      }
  }
  if (mode == BatchNormMode::train) stats.initialized = true;

  Tensor out(x.shape());
  auto o = out.data();
  const auto gv = gamma.data(), bv = beta.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t j = 0; j < s; ++j) {
        const std::size_t k = (i * c + ch) * s + j;
        o[k] = gv[ch] * xh[k] + bv[ch];
      }

  const bool gx = tape && tape->tracks(x);
  const bool gg = tape && tape->tracks(gamma), gb = tape && tape->tracks(beta);
  if (gx || gg || gb) {
    const bool batch_stats = mode == BatchNormMode::train;
    tape->record(
        "batchnorm", {x, gamma, beta}, out,
        [x, gamma, beta, xhat, inv_std, n, c, s, gx, gg, gb, batch_stats](const Tensor& y) mutable {
          const auto g = y.grad();
          const auto& xh = *xhat;
          const double m = static_cast<double>(n * s);
          for (std::size_t ch = 0; ch < c; ++ch) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < s; ++j) {
                const std::size_t k = (i * c + ch) * s + j;
                sum_g += g[k];
                sum_gx += static_cast<double>(g[k]) * xh[k];
              }
            if (gg) gamma.mutable_grad()[ch] += static_cast<float>(sum_gx);
            if (gb) beta.mutable_grad()[ch] += static_cast<float>(sum_g);
            if (!gx) continue;
            auto dx = x.mutable_grad();
            const double scale = static_cast<double>(gamma.data()[ch]) * (*inv_std)[ch];
            for (std::size_t i = 0; i < n; ++i)
              for (std::size_t j = 0; j < s; ++j) {
                const std::size_t k = (i * c + ch) * s + j;
                if (batch_stats) {
                  dx[k] += static_cast<float>(scale * (g[k] - sum_g / m - xh[k] * sum_gx / m));
                } else {
                  dx[k] += static_cast<float>(scale * g[k]);
                }
              }
          }
        });
  }
  return out;
}

void fold_batchnorm(const Tensor& gamma, const Tensor& beta, const BatchNormStats& stats,
                    Tensor& scale, Tensor& shift) {
  if (!stats.initialized) {
    throw std::logic_error("fold_batchnorm: running statistics do not exist yet");
  }
  const std::size_t c = gamma.numel();
  if (beta.numel() != c || stats.running_mean.numel() != c || stats.running_var.numel() != c) {
    throw std::invalid_argument("fold_batchnorm: parameter sizes disagree");
  }
  scale = Tensor({c});
  shift = Tensor({c});
  const auto g = gamma.data(), b = beta.data();
  const auto mu = stats.running_mean.data(), var = stats.running_var.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double is = 1.0 / std::sqrt(static_cast<double>(var[ch]) + stats.epsilon);
    const double sc = g[ch] * is;
    scale.data()[ch] = static_cast<float>(sc);
    shift.data()[ch] = static_cast<float>(b[ch] - mu[ch] * sc);
  }
}

Tensor channel_affine(const Tensor& x, const Tensor& scale, const Tensor& shift, Activation act,
                      float slope, Tape* tape) {
  if (x.rank() < 2 || scale.shape() != Shape{x.dim(1)} || shift.shape() != Shape{x.dim(1)}) {
    throw std::invalid_argument("channel_affine: scale/shift must be [C] for input " +
                                shape_string(x.shape()));
  }
  if (tape && (tape->tracks(scale) || tape->tracks(shift))) {
    throw std::logic_error("channel_affine: scale and shift are constants");
  }
  const std::size_t n = x.dim(0), c = x.dim(1), s = x.numel() / std::max<std::size_t>(n * c, 1);
  Tensor out(x.shape());
  const auto xv = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float a = scale.data()[ch], b = shift.data()[ch];
      const std::size_t base = (i * c + ch) * s;
      switch (act) {
        case Activation::identity:
          for (std::size_t j = 0; j < s; ++j) o[base + j] = a * xv[base + j] + b;
          break;
        case Activation::relu:
          for (std::size_t j = 0; j < s; ++j) o[base + j] = std::max(a * xv[base + j] + b, 0.0f);
          break;
        case Activation::leaky_relu:
          for (std::size_t j = 0; j < s; ++j) {
            const float u = a * xv[base + j] + b;
            o[base + j] = u > 0.0f ? u : slope * u;
          }
          break;
        case Activation::tanh:
          for (std::size_t j = 0; j < s; ++j) o[base + j] = std::tanh(a * xv[base + j] + b);
          break;
      }
    }

  if (tape && tape->tracks(x)) {
    tape->record("channel_affine", {x}, out, [x, scale, n, c, s, act, slope](const Tensor& y) {
      const auto g = y.grad();
      const auto yv = y.data();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const float a = scale.data()[ch];
          const std::size_t base = (i * c + ch) * s;
          for (std::size_t j = 0; j < s; ++j) {
            const std::size_t k = base + j;
            float d = 1.0f;
            switch (act) {
              case Activation::identity: break;
              case Activation::relu: d = yv[k] > 0.0f ? 1.0f : 0.0f; break;
              case Activation::leaky_relu: d = yv[k] > 0.0f ? 1.0f : slope; break;
              case Activation::tanh: d = 1.0f - yv[k] * yv[k]; break;
            }
            dx[k] += g[k] * d * a;
          }
        }
    });
  }
  return out;
}

}  // namespace anogan::ops
