#include "reference_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace anogan::testing {

namespace {

constexpr double kBatchnormEpsilon = 1e-5;

// Single image, [C,H,W] layout, kernel [Cout,Cin,k,k].
std::vector<double> conv(const std::vector<double>& in, std::size_t cin, std::size_t h,
                         const std::vector<double>& kernel, std::size_t cout, std::size_t k,
                         std::size_t stride, std::size_t pad, std::size_t& out_h) {
  out_h = (h + 2 * pad - k) / stride + 1;
  std::vector<double> out(cout * out_h * out_h, 0.0);
  for (std::size_t co = 0; co < cout; ++co)
    for (std::size_t oy = 0; oy < out_h; ++oy)
      for (std::size_t ox = 0; ox < out_h; ++ox) {
        double acc = 0.0;
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(h)) continue;
              acc += in[(ci * h + iy) * h + ix] * kernel[((co * cin + ci) * k + ky) * k + kx];
            }
        out[(co * out_h + oy) * out_h + ox] = acc;
      }
  return out;
}

// Kernel [Cin,Cout,k,k]; output side (h-1)*stride - 2*pad + k + output_pad.
std::vector<double> conv_transpose(const std::vector<double>& in, std::size_t cin, std::size_t h,
                                   const std::vector<double>& kernel, std::size_t cout,
                                   std::size_t k, std::size_t stride, std::size_t pad,
                                   std::size_t output_pad, std::size_t& out_h) {
  out_h = (h - 1) * stride + k + output_pad - 2 * pad;
  std::vector<double> out(cout * out_h * out_h, 0.0);
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t iy = 0; iy < h; ++iy)
      for (std::size_t ix = 0; ix < h; ++ix) {
        const double v = in[(ci * h + iy) * h + ix];
        for (std::size_t co = 0; co < cout; ++co)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long oy = static_cast<long>(iy * stride + ky) - static_cast<long>(pad);
              const long ox = static_cast<long>(ix * stride + kx) - static_cast<long>(pad);
              if (oy < 0 || ox < 0 || oy >= static_cast<long>(out_h) || ox >= static_cast<long>(out_h)) continue;
              out[(co * out_h + oy) * out_h + ox] += v * kernel[((ci * cout + co) * k + ky) * k + kx];
            }
      }
  return out;
}

void batchnorm_eval(std::vector<double>& x, std::size_t channels, const std::vector<double>& gamma,
                    const std::vector<double>& beta, const std::vector<double>& mean,
                    const std::vector<double>& var) {
  const std::size_t inner = x.size() / channels;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < inner; ++i) {
      double& v = x[c * inner + i];
      v = gamma[c] * (v - mean[c]) / std::sqrt(var[c] + kBatchnormEpsilon) + beta[c];
    }
}

}  // namespace

double ReferenceLosses::total(double lambda, DiscriminationLoss variant) const {
  const double d = variant == DiscriminationLoss::feature_matching ? feature_matching : reference;
  return (1.0 - lambda) * residual + lambda * d;
}

ReferenceModel::ReferenceModel(const GanModel& model)
    : config_(model.config()), feature_layer_(model.feature_layer()) {
  for (const auto& t : model.state()) {
    params_.emplace_back(t.name, std::vector<double>(t.tensor.data().begin(), t.tensor.data().end()));
  }
}

const std::vector<double>& ReferenceModel::param(const std::string& name) const {
  for (const auto& [n, v] : params_) {
    if (n == name) return v;
  }
  throw std::invalid_argument("reference model: no tensor named " + name);
}

std::vector<double> ReferenceModel::generate(const std::vector<double>& z) const {
  const auto& ch = config_.channels;
  const auto k = static_cast<std::size_t>(config_.kernel_size);
  const std::size_t pad = (k - 1) / 2;
  const auto dim = static_cast<std::size_t>(config_.latent_dim);

  const auto& w = param("generator.projection");
  std::vector<double> h(static_cast<std::size_t>(ch[0]) * 16, 0.0);
  for (std::size_t o = 0; o < h.size(); ++o)
    for (std::size_t i = 0; i < dim; ++i) h[o] += w[o * dim + i] * z[i];
  batchnorm_eval(h, ch[0], param("generator.projection_bn.gamma"),
                 param("generator.projection_bn.beta"),
                 param("generator.projection_bn.running_mean"),
                 param("generator.projection_bn.running_var"));
  for (double& v : h) v = std::max(v, 0.0);

  std::size_t side = 4;
  for (std::size_t i = 0; i < ch.size(); ++i) {
    const std::string id = "generator.up" + std::to_string(i);
    const std::size_t cin = ch[i];
    const std::size_t cout = i + 1 < ch.size() ? ch[i + 1] : 1;
    std::size_t next = 0;
    h = conv_transpose(h, cin, side, param(id + ".kernel"), cout, k, 2, pad, 1, next);
    side = next;
    if (i + 1 < ch.size()) {
      batchnorm_eval(h, cout, param(id + ".bn.gamma"), param(id + ".bn.beta"),
                     param(id + ".bn.running_mean"), param(id + ".bn.running_var"));
      for (double& v : h) v = std::max(v, 0.0);
    } else {
      const double bias = param("generator.output_bias")[0];
      for (double& v : h) v = std::tanh(v + bias);
    }
  }
  return h;
}

ReferenceModel::Features ReferenceModel::discriminate(const std::vector<double>& image) const {
  std::vector<int> widths(config_.channels.rbegin(), config_.channels.rend());
  const auto k = static_cast<std::size_t>(config_.kernel_size);
  const std::size_t pad = (k - 1) / 2;
  const double slope = config_.leaky_slope;
  Features out;
  std::vector<double> h = image;
  std::size_t side = static_cast<std::size_t>(config_.image_size);
  std::size_t cin = 1;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string id = "discriminator.down" + std::to_string(i);
    const auto cout = static_cast<std::size_t>(widths[i]);
    std::size_t next = 0;
    h = conv(h, cin, side, param(id + ".kernel"), cout, k, 2, pad, next);
    side = next;
    if (i == 0) {
      const auto& b = param(id + ".bias");
      const std::size_t inner = side * side;
      for (std::size_t c = 0; c < cout; ++c)
        for (std::size_t p = 0; p < inner; ++p) h[c * inner + p] += b[c];
    } else {
      batchnorm_eval(h, cout, param(id + ".bn.gamma"), param(id + ".bn.beta"),
                     param(id + ".bn.running_mean"), param(id + ".bn.running_var"));
    }
    for (double& v : h) v = v > 0.0 ? v : slope * v;
    if (i == feature_layer_) out.features = h;
    cin = cout;
  }
  const auto& hw = param("discriminator.head.weight");
  out.logit = param("discriminator.head.bias")[0];
  for (std::size_t i = 0; i < h.size(); ++i) out.logit += hw[i] * h[i];
  return out;
}

ReferenceLosses ReferenceModel::losses(const std::vector<double>& x,
                                       const std::vector<double>& z) const {
  const auto g = generate(z);
  ReferenceLosses out;
  for (std::size_t i = 0; i < g.size(); ++i) out.residual += std::fabs(x[i] - g[i]);
  const auto fx = discriminate(x);
  const auto fg = discriminate(g);
  for (std::size_t i = 0; i < fx.features.size(); ++i) {
    out.feature_matching += std::fabs(fx.features[i] - fg.features[i]);
  }
  const double l = fg.logit;
  out.reference = std::max(l, 0.0) - l + std::log1p(std::exp(-std::fabs(l)));
  return out;
}

std::vector<ReferenceGradCheck> mapping_gradient_vs_reference(
    const GanModel& model, const Tensor& x, const Tensor& z,
    const std::vector<std::pair<DiscriminationLoss, double>>& cases, double h) {
  const ReferenceModel ref(model);
  const std::vector<double> xd(x.data().begin(), x.data().end());
  std::vector<double> zd(z.data().begin(), z.data().end());

  // Component losses at z and at z +- h e_k.
  const ReferenceLosses mid = ref.losses(xd, zd);
  std::vector<ReferenceLosses> up(zd.size()), down(zd.size());
  for (std::size_t k = 0; k < zd.size(); ++k) {
    const double saved = zd[k];
    zd[k] = saved + h;
    up[k] = ref.losses(xd, zd);
    zd[k] = saved - h;
    down[k] = ref.losses(xd, zd);
    zd[k] = saved;
  }

  std::vector<ReferenceGradCheck> out;
  for (const auto& [variant, lambda] : cases) {
    const auto analytic = mapping_loss_gradient(model, x, z, lambda, variant);
    ReferenceGradCheck c;
    c.total = zd.size();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    const double f0 = mid.total(lambda, variant);
    for (std::size_t k = 0; k < zd.size(); ++k) {
      const double fu = up[k].total(lambda, variant);
      const double fd = down[k].total(lambda, variant);
      const double forward = (fu - f0) / h;
      const double backward = (f0 - fd) / h;
      // Away from kinks the one-sided quotients agree to O(h).
      if (std::fabs(forward - backward) > 1e-3 * std::max({std::fabs(forward), std::fabs(backward), 1e-9})) {
        ++c.excluded;
        continue;
      }
      const double numeric = (fu - fd) / (2.0 * h);
      diff2 += (numeric - analytic[k]) * (numeric - analytic[k]);
      a2 += static_cast<double>(analytic[k]) * analytic[k];
      n2 += numeric * numeric;
    }
    c.relative_error = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-300});
    out.push_back(c);
  }
  return out;
}

}  // namespace anogan::testing
