#include "anogan/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "anogan/adam.hpp"
#include "anogan/config_text.hpp"

namespace anogan {

namespace {

const std::vector<std::string> kMappingKeys{"iterations", "lambda",       "step_rule",
                                            "step_size",  "loss_variant", "clip_to_prior",
                                            "restarts",   "seed"};

std::vector<Tensor> all_parameters(const GanModel& model) {
  std::vector<Tensor> out;
  for (const auto& p : model.generator_parameters()) out.push_back(p.tensor);
  for (const auto& p : model.discriminator_parameters()) out.push_back(p.tensor);
  return out;
}

Tensor as_batch(const Tensor& x, std::size_t size, const char* op) {
  if (x.rank() == 4 && x.dim(1) == 1 && x.dim(2) == size && x.dim(3) == size) return x;
  if (x.numel() == size * size && (x.rank() == 2 || x.rank() == 3 || x.rank() == 4)) {
    return Tensor({1, 1, size, size}, std::vector<float>(x.data().begin(), x.data().end()));
  }
  throw std::invalid_argument(std::string(op) + ": expected images of " + std::to_string(size) +
                              "x" + std::to_string(size) + ", got " + shape_string(x.shape()));
}

// The differentiable mapping objective for a batch of queries.
struct LossGraph {
  Tensor generated;
  Tensor residual;        // [N]
  Tensor discrimination;  // [N]
  Tensor root;            // scalar sum of weighted per-query totals
};

LossGraph build_loss(const GanModel& model, const Tensor& x, const Tensor& x_features,
                     const Tensor& z, double lambda, DiscriminationLoss variant, Tape* tape) {
  LossGraph out;
  out.generated = model.generator().infer(z, tape);
  out.residual = ops::sum_per_item(ops::abs(ops::sub(out.generated, x, tape), tape), tape);
  const auto d = model.discriminator().infer(out.generated, tape, model.feature_layer());
  if (variant == DiscriminationLoss::feature_matching) {
    out.discrimination =
        ops::sum_per_item(ops::abs(ops::sub(d.features, x_features, tape), tape), tape);
  } else {
    out.discrimination = ops::sigmoid_cross_entropy(d.logits, 1.0f, tape);
  }
  const Tensor total = ops::add(ops::scale(out.residual, static_cast<float>(1.0 - lambda), tape),
                                ops::scale(out.discrimination, static_cast<float>(lambda), tape),
                                tape);
  out.root = ops::sum(total, tape);
  return out;
}

Tensor query_features(const GanModel& model, const Tensor& x, DiscriminationLoss variant) {
  if (variant != DiscriminationLoss::feature_matching) return Tensor();
  return discriminate(model, x).features;
}

void check_queries(const Tensor& x) {
  for (float v : x.data()) {
    if (!(v >= -1.0f && v <= 1.0f)) {
      throw std::invalid_argument("invert: query values must lie in [-1,1]");
    }
  }
}

Tensor starting_points(const GanModel& model, std::size_t n, std::uint64_t seed,
                       std::uint64_t first_index, int restart) {
  const auto dim = static_cast<std::size_t>(model.config().latent_dim);
  Tensor z({n, dim});
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  auto zv = z.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::seed_seq seq{seed, first_index + i, static_cast<std::uint64_t>(restart)};
    std::mt19937_64 rng(seq);
    for (std::size_t j = 0; j < dim; ++j) zv[i * dim + j] = dist(rng);
  }
  return z;
}

}  // namespace

std::string to_string(DiscriminationLoss v) {
  return v == DiscriminationLoss::feature_matching ? "feature_matching" : "reference";
}

DiscriminationLoss parse_discrimination_loss(const std::string& s) {
  if (s == "feature_matching") return DiscriminationLoss::feature_matching;
  if (s == "reference") return DiscriminationLoss::reference;
  throw std::invalid_argument("unknown discrimination loss '" + s + "'");
}

std::string to_string(StepRule v) { return v == StepRule::adam ? "adam" : "gradient_descent"; }

StepRule parse_step_rule(const std::string& s) {
  if (s == "adam") return StepRule::adam;
  if (s == "gradient_descent") return StepRule::gradient_descent;
  throw std::invalid_argument("unknown step rule '" + s + "'");
}

void MappingConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("MappingConfig: iterations must be >= 1");
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("MappingConfig: lambda must lie in [0,1]");
  }
  if (!(step_size > 0.0)) throw std::invalid_argument("MappingConfig: step_size must be positive");
  if (restarts < 1) throw std::invalid_argument("MappingConfig: restarts must be >= 1");
}

std::string MappingConfig::to_text() const {
  text::KeyValues kv;
  kv.set("iterations", std::to_string(iterations));
  kv.set("lambda", text::format_double(lambda));
  kv.set("step_rule", to_string(step_rule));
  kv.set("step_size", text::format_double(step_size));
  kv.set("loss_variant", to_string(loss_variant));
  kv.set("clip_to_prior", clip_to_prior ? "true" : "false");
  kv.set("restarts", std::to_string(restarts));
  kv.set("seed", std::to_string(seed));
  return kv.to_text();
}

MappingConfig MappingConfig::from_text(const std::string& body, const MappingConfig& base) {
  const auto kv = text::KeyValues::parse(body);
  kv.require_known(kMappingKeys, "MappingConfig");
  MappingConfig c = base;
  if (kv.has("iterations")) c.iterations = kv.get_int("iterations");
  if (kv.has("lambda")) c.lambda = kv.get_double("lambda");
  if (kv.has("step_rule")) c.step_rule = parse_step_rule(kv.get("step_rule"));
  if (kv.has("step_size")) c.step_size = kv.get_double("step_size");
  if (kv.has("loss_variant")) c.loss_variant = parse_discrimination_loss(kv.get("loss_variant"));
  if (kv.has("clip_to_prior")) c.clip_to_prior = kv.get_bool("clip_to_prior");
  if (kv.has("restarts")) c.restarts = kv.get_int("restarts");
  if (kv.has("seed")) c.seed = kv.get_u64("seed");
  return c;
}

double residual_loss(const Tensor& x, const Tensor& g) {
  if (x.shape() != g.shape()) {
    throw std::invalid_argument("residual_loss: shape mismatch " + shape_string(x.shape()) +
                                " vs " + shape_string(g.shape()));
  }
  double acc = 0.0;
  const auto a = x.data(), b = g.data();
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::fabs(static_cast<double>(a[i]) - b[i]);
  return acc;
}

std::vector<double> discrimination_loss_fm(const GanModel& model, const Tensor& x,
                                           const Tensor& g) {
  if (x.shape() != g.shape()) {
    throw std::invalid_argument("discrimination_loss_fm: shape mismatch " +
                                shape_string(x.shape()) + " vs " + shape_string(g.shape()));
  }
  const auto size = static_cast<std::size_t>(model.config().image_size);
  const Tensor fx = discriminate(model, as_batch(x, size, "discrimination_loss_fm")).features;
  const Tensor fg = discriminate(model, as_batch(g, size, "discrimination_loss_fm")).features;
  const std::size_t n = fx.dim(0), f = fx.dim(1);
  std::vector<double> out(n, 0.0);
  const auto a = fx.data(), b = fg.data();
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < f; ++j) acc += std::fabs(static_cast<double>(a[i * f + j]) - b[i * f + j]);
    out[i] = acc;
  }
  return out;
}

double reference_loss_from_logit(double logit) {
  return std::max(logit, 0.0) - logit + std::log1p(std::exp(-std::fabs(logit)));
}

std::vector<double> discrimination_loss_ref(const GanModel& model, const Tensor& g) {
  const auto size = static_cast<std::size_t>(model.config().image_size);
  const Tensor logits = discriminate(model, as_batch(g, size, "discrimination_loss_ref")).logits;
  std::vector<double> out;
  for (float l : logits.data()) out.push_back(reference_loss_from_logit(l));
  return out;
}

double combine_losses(double residual, double discrimination, double lambda) {
  return (1.0 - lambda) * residual + lambda * discrimination;
}

std::vector<double> mapping_loss(const GanModel& model, const Tensor& x, const Tensor& z,
                                 double lambda, DiscriminationLoss variant) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("mapping_loss: lambda must lie in [0,1]");
  }
  const auto size = static_cast<std::size_t>(model.config().image_size);
  const Tensor xb = as_batch(x, size, "mapping_loss");
  const LossGraph graph = build_loss(model, xb, query_features(model, xb, variant), z, lambda,
                                     variant, nullptr);
  std::vector<double> out;
  for (std::size_t i = 0; i < graph.residual.numel(); ++i) {
    out.push_back(combine_losses(graph.residual.data()[i], graph.discrimination.data()[i], lambda));
  }
  return out;
}

std::vector<float> mapping_loss_gradient(const GanModel& model, const Tensor& x, const Tensor& z,
                                         double lambda, DiscriminationLoss variant) {
  const auto size = static_cast<std::size_t>(model.config().image_size);
  const Tensor xb = as_batch(x, size, "mapping_loss_gradient");
  Tensor zt = z.clone();
  zt.set_requires_grad(true);
  Tape tape;
  tape.freeze(all_parameters(model));
  const LossGraph graph =
      build_loss(model, xb, query_features(model, xb, variant), zt, lambda, variant, &tape);
  tape.backward(graph.root);
  return std::vector<float>(zt.grad().begin(), zt.grad().end());
}

std::vector<MappingResult> invert_batch(const GanModel& model, const Tensor& queries,
                                        const MappingConfig& config, std::uint64_t first_index) {
  config.validate();
  const auto size = static_cast<std::size_t>(model.config().image_size);
  const Tensor x = as_batch(queries, size, "invert");
  check_queries(x);
  const std::size_t n = x.dim(0);
  const auto dim = static_cast<std::size_t>(model.config().latent_dim);
  const auto gamma = static_cast<std::size_t>(config.iterations);
  const Tensor x_features = query_features(model, x, config.loss_variant);
  const std::vector<Tensor> frozen = all_parameters(model);

  std::vector<MappingResult> best(n);
  for (int restart = 0; restart < config.restarts; ++restart) {
    Tensor z = starting_points(model, n, config.seed, first_index, restart);
    z.set_requires_grad(true);
    std::vector<Tensor> z_param{z};
    AdamState adam(z_param, AdamOptions{config.step_size, 0.9, 0.999, 1e-8});
    std::vector<std::vector<double>> trajectory(n);
    for (auto& t : trajectory) t.reserve(gamma);

    for (std::size_t step = 1; step <= gamma; ++step) {
      Tape tape;
      tape.freeze(frozen);
      const LossGraph graph =
          build_loss(model, x, x_features, z, config.lambda, config.loss_variant, &tape);
      bool finite = true;
      for (std::size_t i = 0; i < n; ++i) {
        const double total = combine_losses(graph.residual.data()[i],
                                            graph.discrimination.data()[i], config.lambda);
        finite = finite && std::isfinite(total);
        trajectory[i].push_back(total);
      }
      if (!finite) {
        throw MappingDiverged("invert: non-finite mapping loss at iteration " +
                                  std::to_string(step),
                              std::move(trajectory));
      }

      if (step == gamma) {
        // z_Gamma: record the final state for every query this restart improves.
        for (std::size_t i = 0; i < n; ++i) {
          if (restart > 0 && best[i].loss_trajectory.back() <= trajectory[i].back()) continue;
          MappingResult r;
          const auto zv = z.data();
          r.z_final.assign(zv.begin() + static_cast<std::ptrdiff_t>(i * dim),
                           zv.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
          const std::size_t px = size * size;
          const auto gv = graph.generated.data();
          const auto xv = x.data();
          std::vector<float> gen(gv.begin() + static_cast<std::ptrdiff_t>(i * px),
                                 gv.begin() + static_cast<std::ptrdiff_t>((i + 1) * px));
          std::vector<float> res(px);
          for (std::size_t k = 0; k < px; ++k) res[k] = std::fabs(xv[i * px + k] - gen[k]);
          r.generated = Tensor({1, 1, size, size}, std::move(gen));
          r.residual_image = Tensor({1, 1, size, size}, std::move(res));
          r.residual_loss_final = graph.residual.data()[i];
          r.discrimination_loss_final = graph.discrimination.data()[i];
          r.loss_trajectory = std::move(trajectory[i]);
          r.variant = config.loss_variant;
          r.lambda = config.lambda;
          best[i] = std::move(r);
        }
        break;
      }

      z.zero_grad();
      tape.backward(graph.root);
      if (config.step_rule == StepRule::adam) {
        adam.step(z_param);
      } else {
        auto zv = z.data();
        const auto g = z.grad();
        const auto lr = static_cast<float>(config.step_size);
        for (std::size_t k = 0; k < zv.size(); ++k) zv[k] -= lr * g[k];
      }
      if (config.clip_to_prior) {
        for (float& v : z.data()) v = std::clamp(v, -1.0f, 1.0f);
      }
    }
  }
  return best;
}

MappingResult invert(const GanModel& model, const Tensor& x, const MappingConfig& config,
                     std::uint64_t query_index) {
  const auto size = static_cast<std::size_t>(model.config().image_size);
  const Tensor xb = as_batch(x, size, "invert");
  if (xb.dim(0) != 1) {
    throw std::invalid_argument("invert: expected a single query, use invert_batch for " +
                                shape_string(x.shape()));
  }
  return std::move(invert_batch(model, xb, config, query_index).front());
}

}  // namespace anogan
