#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "anogan/ops.hpp"

namespace anogan::testing {

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, float lo, float hi) {
  std::uniform_real_distribution<float> u(lo, hi);
  Tensor t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

Tensor random_away_from_zero(const Shape& shape, std::mt19937_64& rng, float gap) {
  std::uniform_real_distribution<float> u(gap, 1.0f);
  std::bernoulli_distribution sign(0.5);
  Tensor t(shape);
  for (auto& v : t.data()) v = sign(rng) ? u(rng) : -u(rng);
  return t;
}

std::vector<double> naive_conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride,
                                 std::size_t padding) {
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel.dim(0), k = kernel.dim(2);
  const std::size_t oh = (h + 2 * padding - k) / stride + 1;
  const std::size_t ow = (w + 2 * padding - k) / stride + 1;
  std::vector<double> out(n * cout * oh * ow, 0.0);
  const float* x = input.ptr();
  const float* kk = kernel.ptr();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(padding);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(padding);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                acc += static_cast<double>(x[((b * cin + ci) * h + iy) * w + ix]) *
                       kk[((co * cin + ci) * k + ky) * k + kx];
              }
          out[((b * cout + co) * oh + oy) * ow + ox] = acc;
        }
  return out;
}

std::vector<double> naive_conv2d_transpose(const Tensor& input, const Tensor& kernel,
                                           std::size_t stride, std::size_t padding,
                                           std::size_t output_padding) {
  const std::size_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t cout = kernel.dim(1), k = kernel.dim(2);
  const std::size_t oh = (h - 1) * stride + k + output_padding - 2 * padding;
  const std::size_t ow = (w - 1) * stride + k + output_padding - 2 * padding;
  std::vector<double> out(n * cout * oh * ow, 0.0);
  const float* x = input.ptr();
  const float* kk = kernel.ptr();
  // Scatter form: every input pixel spreads a kernel-sized stamp.
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t iy = 0; iy < h; ++iy)
        for (std::size_t ix = 0; ix < w; ++ix)
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long oy = static_cast<long>(iy * stride + ky) - static_cast<long>(padding);
                const long ox = static_cast<long>(ix * stride + kx) - static_cast<long>(padding);
                if (oy < 0 || ox < 0 || oy >= static_cast<long>(oh) || ox >= static_cast<long>(ow)) continue;
                out[((b * cout + co) * oh + oy) * ow + ox] +=
                    static_cast<double>(x[((b * cin + ci) * h + iy) * w + ix]) *
                    kk[((ci * cout + co) * k + ky) * k + kx];
              }
  return out;
}

std::vector<double> two_pass_batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                                       double epsilon) {
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t inner = x.numel() / (n * c);
  std::vector<double> out(x.numel());
  const float* p = x.ptr();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < inner; ++i) mean += p[(b * c + ch) * inner + i];
    mean /= static_cast<double>(n * inner);
    double var = 0.0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < inner; ++i) {
        const double d = p[(b * c + ch) * inner + i] - mean;
        var += d * d;
      }
    var /= static_cast<double>(n * inner);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t at = (b * c + ch) * inner + i;
        out[at] = gamma.ptr()[ch] * (p[at] - mean) / std::sqrt(var + epsilon) + beta.ptr()[ch];
      }
  }
  return out;
}

void ScriptedAdam::step(std::vector<float>& params, const std::vector<float>& grads) {
  if (m.empty()) {
    m.assign(params.size(), 0.0f);
    v.assign(params.size(), 0.0f);
  }
  ++t;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m_new = beta1 * m[i] + (1 - beta1) * g;
    const double v_new = beta2 * v[i] + (1 - beta2) * g * g;
    m[i] = static_cast<float>(m_new);
    v[i] = static_cast<float>(v_new);
    const double m_hat = m_new / (1 - std::pow(beta1, t));
    const double v_hat = v_new / (1 - std::pow(beta2, t));
    params[i] = static_cast<float>(params[i] - lr * m_hat / (std::sqrt(v_hat) + epsilon));
  }
}

double all_pairs_auc(std::span<const ScoredSample> samples) {
  double wins = 0.0;
  long long pairs = 0;
  for (const auto& p : samples) {
    if (p.label != 1) continue;
    for (const auto& q : samples) {
      if (q.label != 0) continue;
      ++pairs;
      if (p.score > q.score) wins += 1.0;
      else if (p.score == q.score) wins += 0.5;
    }
  }
  if (pairs == 0) throw std::invalid_argument("all_pairs_auc: need both classes");
  return wins / static_cast<double>(pairs);
}

BruteYouden brute_force_youden(std::span<const ScoredSample> samples) {
  long long pos = 0, neg = 0;
  for (const auto& s : samples) (s.label ? pos : neg)++;
  BruteYouden best{std::numeric_limits<double>::infinity(), 0, 0, 0.0};
  for (const auto& cand : samples) {
    long long tp = 0, fp = 0;
    for (const auto& s : samples) {
      if (s.score >= cand.score) (s.label ? tp : fp)++;
    }
    // Compare tp/pos - fp/neg exactly in integers.
    const long long lhs = tp * neg - fp * pos;
    const long long rhs = best.tp * neg - best.fp * pos;
    if (lhs > rhs || (lhs == rhs && cand.score < best.threshold)) {
      best = {cand.score, tp, fp, static_cast<double>(tp) / pos - static_cast<double>(fp) / neg};
    }
  }
  return best;
}

GradCheck check_gradients(const OutputFn& f, std::vector<Tensor> inputs,
                          const std::vector<std::size_t>& checked, double h,
                          std::uint64_t weight_seed) {
  // Tensors are shared handles; work on private copies so the caller's
  // tensors never collect gradients.
  for (auto& t : inputs) t = t.clone();
  Tape tape;
  for (auto i : checked) inputs[i].set_requires_grad(true);
  const Tensor y = f(inputs, &tape);
  std::mt19937_64 rng(weight_seed);
  const Tensor w = random_tensor(y.shape(), rng);
  tape.backward(ops::sum(ops::mul(y, w, &tape), &tape));

  auto objective = [&] {
    const Tensor out = f(inputs, nullptr);
    double acc = 0.0;
    for (std::size_t k = 0; k < out.numel(); ++k) acc += static_cast<double>(out.ptr()[k]) * w.ptr()[k];
    return acc;
  };

  GradCheck result;
  for (auto i : checked) {
    const std::vector<float> analytic(inputs[i].grad().begin(), inputs[i].grad().end());
    if (analytic.size() != inputs[i].numel()) throw std::logic_error("gradient not materialized");
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    auto values = inputs[i].data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const float saved = values[k];
      const float hi = static_cast<float>(saved + h);
      const float lo = static_cast<float>(saved - h);
      values[k] = hi;
      const double up = objective();
      values[k] = lo;
      const double down = objective();
      values[k] = saved;
      const double numeric = (up - down) / (static_cast<double>(hi) - lo);
      diff2 += (numeric - analytic[k]) * (numeric - analytic[k]);
      a2 += static_cast<double>(analytic[k]) * analytic[k];
      n2 += numeric * numeric;
    }
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
    if (rel >= result.worst_relative) {
      result.worst_relative = rel;
      result.worst_input = i;
    }
  }
  return result;
}

}  // namespace anogan::testing
