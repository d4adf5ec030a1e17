#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "anogan/ops.hpp"
#include "gemm.hpp"

namespace anogan::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()));
  }
}

// Elementwise unary op with derivative expressed through input and output.
template <typename Fwd, typename Deriv>
Tensor unary(const char* name, const Tensor& x, Tape* tape, Fwd fwd, Deriv deriv) {
  Tensor out(x.shape());
  const auto in = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = fwd(in[i]);
  if (tape && tape->tracks(x)) {
    tape->record(name, {x}, out, [x, deriv](const Tensor& y) mutable {
      const auto g = y.grad();
      const auto yv = y.data();
      const auto xv = x.data();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * deriv(xv[i], yv[i]);
    });
  }
  return out;
}

}  // namespace

Tensor add_channel_bias(const Tensor& x, const Tensor& bias, Tape* tape) {
  if (x.rank() < 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw std::invalid_argument("add_channel_bias: bias " + shape_string(bias.shape()) +
                                " does not match channels of " + shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), s = x.numel() / (n * c);
  Tensor out = x.clone();
  out.set_requires_grad(false);
  auto o = out.data();
  const auto b = bias.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t j = 0; j < s; ++j) o[(i * c + ch) * s + j] += b[ch];

  const bool gx = tape && tape->tracks(x), gb = tape && tape->tracks(bias);
  if (gx || gb) {
    tape->record("add_channel_bias", {x, bias}, out,
                 [x, bias, n, c, s, gx, gb](const Tensor& y) mutable {
                   const auto g = y.grad();
                   if (gx) {
                     auto dx = x.mutable_grad();
                     for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
                   }
                   if (gb) {
                     auto db = bias.mutable_grad();
                     for (std::size_t ch = 0; ch < c; ++ch) {
                       double acc = 0.0;
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < s; ++j) acc += g[(i * c + ch) * s + j];
                       db[ch] += static_cast<float>(acc);
                     }
                   }
                 });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias, Tape* tape) {
  if (x.rank() != 2 || weight.rank() != 2 || weight.dim(1) != x.dim(1)) {
    throw std::invalid_argument("linear: input " + shape_string(x.shape()) +
                                " incompatible with weight " + shape_string(weight.shape()));
  }
  const bool has_bias = !bias.empty();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
    throw std::invalid_argument("linear: bias " + shape_string(bias.shape()) +
                                " does not match weight " + shape_string(weight.shape()));
  }
  const std::size_t n = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  Tensor out({n, out_dim});
  detail::gemm(false, true, n, out_dim, in, 1.0f, x.ptr(), weight.ptr(), 0.0f, out.ptr());
  if (has_bias) {
    auto o = out.data();
    const auto b = bias.data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out_dim; ++j) o[i * out_dim + j] += b[j];
  }

  const bool gx = tape && tape->tracks(x), gw = tape && tape->tracks(weight);
  const bool gb = has_bias && tape && tape->tracks(bias);
  if (gx || gw || gb) {
    std::vector<Tensor> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    tape->record("linear", std::move(inputs), out,
                 [x, weight, bias, n, in, out_dim, gx, gw, gb](const Tensor& y) mutable {
                   const float* g = y.grad().data();
                   if (gx) {
                     detail::gemm(false, false, n, in, out_dim, 1.0f, g, weight.ptr(), 1.0f,
                                  x.mutable_grad().data());
                   }
                   if (gw) {
                     detail::gemm(true, false, out_dim, in, n, 1.0f, g, x.ptr(), 1.0f,
                                  weight.mutable_grad().data());
                   }
                   if (gb) {
                     auto db = bias.mutable_grad();
                     for (std::size_t j = 0; j < out_dim; ++j) {
                       double acc = 0.0;
                       for (std::size_t i = 0; i < n; ++i) acc += g[i * out_dim + j];
                       db[j] += static_cast<float>(acc);
                     }
                   }
                 });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape, Tape* tape) {
  if (shape_numel(shape) != x.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_string(x.shape()) + " as " +
                                shape_string(shape));
  }
  Tensor out(std::move(shape), std::vector<float>(x.data().begin(), x.data().end()));
  if (tape && tape->tracks(x)) {
    tape->record("reshape", {x}, out, [x](const Tensor& y) mutable {
      const auto g = y.grad();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    });
  }
  return out;
}

Tensor leaky_relu(const Tensor& x, float slope, Tape* tape) {
  return unary(
      "leaky_relu", x, tape, [slope](float v) { return v > 0.0f ? v : slope * v; },
      [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

Tensor relu(const Tensor& x, Tape* tape) {
  return unary(
      "relu", x, tape, [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor tanh(const Tensor& x, Tape* tape) {
  return unary(
      "tanh", x, tape, [](float v) { return std::tanh(v); },
      [](float, float y) { return 1.0f - y * y; });
}

Tensor sigmoid(const Tensor& x, Tape* tape) {
  return unary(
      "sigmoid", x, tape,
      [](float v) {
        if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
        const float e = std::exp(v);
        return e / (1.0f + e);
      },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor abs(const Tensor& a, Tape* tape) {
  return unary(
      "abs", a, tape, [](float v) { return std::fabs(v); },
      [](float v, float) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); });
}

Tensor scale(const Tensor& a, float factor, Tape* tape) {
  return unary(
      "scale", a, tape, [factor](float v) { return v * factor; },
      [factor](float, float) { return factor; });
}

namespace {

template <typename Fwd>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, Tape* tape, Fwd fwd,
              float da_sign, float db_sign, bool product) {
  require_same_shape(a, b, name);
  Tensor out(a.shape());
  const auto av = a.data(), bv = b.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(av[i], bv[i]);
  const bool ga = tape && tape->tracks(a), gb = tape && tape->tracks(b);
  if (ga || gb) {
    tape->record(name, {a, b}, out,
                 [a, b, ga, gb, da_sign, db_sign, product](const Tensor& y) mutable {
                   const auto g = y.grad();
                   if (ga) {
                     auto da = a.mutable_grad();
                     const auto bv = b.data();
                     for (std::size_t i = 0; i < g.size(); ++i)
                       da[i] += product ? g[i] * bv[i] : da_sign * g[i];
                   }
                   if (gb) {
                     auto db = b.mutable_grad();
                     const auto av = a.data();
                     for (std::size_t i = 0; i < g.size(); ++i)
                       db[i] += product ? g[i] * av[i] : db_sign * g[i];
                   }
                 });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
  return binary("add", a, b, tape, [](float x, float y) { return x + y; }, 1.0f, 1.0f, false);
}

Tensor sub(const Tensor& a, const Tensor& b, Tape* tape) {
  return binary("sub", a, b, tape, [](float x, float y) { return x - y; }, 1.0f, -1.0f, false);
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
  return binary("mul", a, b, tape, [](float x, float y) { return x * y; }, 0.0f, 0.0f, true);
}

Tensor sum(const Tensor& a, Tape* tape) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  Tensor out = Tensor::scalar(static_cast<float>(acc));
  if (tape && tape->tracks(a)) {
    tape->record("sum", {a}, out, [a](const Tensor& y) mutable {
      const float g = y.grad()[0];
      for (float& d : a.mutable_grad()) d += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& a, Tape* tape) {
  if (a.numel() == 0) throw std::invalid_argument("mean: empty tensor");
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  const double count = static_cast<double>(a.numel());
  Tensor out = Tensor::scalar(static_cast<float>(acc / count));
  if (tape && tape->tracks(a)) {
    tape->record("mean", {a}, out, [a, count](const Tensor& y) mutable {
      const auto g = static_cast<float>(y.grad()[0] / count);
      for (float& d : a.mutable_grad()) d += g;
    });
  }
  return out;
}

Tensor sum_per_item(const Tensor& a, Tape* tape) {
  if (a.rank() < 1 || a.dim(0) == 0) {
    throw std::invalid_argument("sum_per_item: need a leading batch axis, got " +
                                shape_string(a.shape()));
  }
  const std::size_t n = a.dim(0), s = a.numel() / n;
  Tensor out({n});
  const auto av = a.data();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < s; ++j) acc += av[i * s + j];
    out.data()[i] = static_cast<float>(acc);
  }
  if (tape && tape->tracks(a)) {
    tape->record("sum_per_item", {a}, out, [a, n, s](const Tensor& y) mutable {
      const auto g = y.grad();
      auto d = a.mutable_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < s; ++j) d[i * s + j] += g[i];
    });
  }
  return out;
}

Tensor sigmoid_cross_entropy(const Tensor& logits, float target, Tape* tape) {
  const bool column = logits.rank() == 2 && logits.dim(1) == 1;
  if (!(logits.rank() == 1 || column)) {
    throw std::invalid_argument("sigmoid_cross_entropy: logits must be [N] or [N,1], got " +
                                shape_string(logits.shape()));
  }
  const std::size_t n = logits.dim(0);
  Tensor out({n});
  const auto l = logits.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = l[i];
    out.data()[i] = static_cast<float>(std::max(v, 0.0) - v * target +
                                       std::log1p(std::exp(-std::fabs(v))));
  }
  if (tape && tape->tracks(logits)) {
    tape->record("sigmoid_cross_entropy", {logits}, out, [logits, target](const Tensor& y) mutable {
      const auto g = y.grad();
      const auto lv = logits.data();
      auto d = logits.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = lv[i];
        const double sig = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        d[i] += static_cast<float>(g[i] * (sig - target));
      }
    });
  }
  return out;
}

}  // namespace anogan::ops
