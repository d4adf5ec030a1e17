#include <algorithm>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "anogan/config_text.hpp"
#include "anogan/gan.hpp"

namespace anogan {

namespace {

const std::vector<std::string> kGanKeys{
    "latent_dim", "image_size", "channels",   "kernel_size", "epochs",
    "batch_size", "learning_rate", "beta1",   "beta2",       "leaky_slope",
    "init_stddev", "seed",       "latent_prior"};

constexpr const char* kLatentPrior = "uniform[-1,1]";

Tensor normal_tensor(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<float> dist(0.0f, static_cast<float>(stddev));
  for (float& v : t.data()) v = dist(rng);
  t.set_requires_grad(true);
  return t;
}

Tensor zeros_param(Shape shape) {
  Tensor t(std::move(shape), 0.0f);
  t.set_requires_grad(true);
  return t;
}

std::size_t pad_for(int kernel) { return static_cast<std::size_t>((kernel - 1) / 2); }

// Eval-mode batchnorm whose parameters are not being differentiated.
bool folds(Mode mode, const Tape* tape, const Tensor& gamma, const Tensor& beta) {
  return mode == Mode::eval && !(tape && (tape->tracks(gamma) || tape->tracks(beta)));
}

}  // namespace

GanConfig GanConfig::paper() { return GanConfig{}; }

GanConfig GanConfig::desk() {
  GanConfig c;
  c.image_size = 32;
  c.channels = {128, 64, 32};
  c.epochs = 10;
  return c;
}

void GanConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("GanConfig: " + msg); };
  if (latent_dim < 1) fail("latent_dim must be positive");
  if (image_size < 16 || (image_size & (image_size - 1)) != 0) {
    fail("image_size must be a power of two >= 16, got " + std::to_string(image_size));
  }
  if (channels.empty()) fail("channels must not be empty");
  for (int c : channels) {
    if (c < 1) fail("channel counts must be positive");
  }
  if ((4 << stages()) != image_size) {
    fail("image_size " + std::to_string(image_size) + " cannot be reached from 4x4 with " +
         std::to_string(stages()) + " stride-2 stages");
  }
  if (kernel_size < 3 || kernel_size % 2 == 0) fail("kernel_size must be odd and >= 3");
  if (epochs < 0) fail("epochs must be non-negative");
  if (batch_size < 2) fail("batch_size must be at least 2");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    fail("Adam betas must lie in [0,1)");
  }
  if (!(init_stddev > 0.0)) fail("init_stddev must be positive");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) fail("leaky_slope must lie in [0,1)");
}

std::string GanConfig::to_text() const {
  text::KeyValues kv;
  kv.set("latent_dim", std::to_string(latent_dim));
  kv.set("image_size", std::to_string(image_size));
  kv.set("channels", text::format_int_list(channels));
  kv.set("kernel_size", std::to_string(kernel_size));
  kv.set("epochs", std::to_string(epochs));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("learning_rate", text::format_double(learning_rate));
  kv.set("beta1", text::format_double(beta1));
  kv.set("beta2", text::format_double(beta2));
  kv.set("leaky_slope", text::format_double(leaky_slope));
  kv.set("init_stddev", text::format_double(init_stddev));
  kv.set("seed", std::to_string(seed));
  kv.set("latent_prior", kLatentPrior);
  return kv.to_text();
}

GanConfig GanConfig::from_text(const std::string& body, const GanConfig& base) {
  const auto kv = text::KeyValues::parse(body);
  kv.require_known(kGanKeys, "GanConfig");
  GanConfig c = base;
  if (kv.has("latent_dim")) c.latent_dim = kv.get_int("latent_dim");
  if (kv.has("image_size")) c.image_size = kv.get_int("image_size");
  if (kv.has("channels")) c.channels = kv.get_int_list("channels");
  if (kv.has("kernel_size")) c.kernel_size = kv.get_int("kernel_size");
  if (kv.has("epochs")) c.epochs = kv.get_int("epochs");
  if (kv.has("batch_size")) c.batch_size = kv.get_int("batch_size");
  if (kv.has("learning_rate")) c.learning_rate = kv.get_double("learning_rate");
  if (kv.has("beta1")) c.beta1 = kv.get_double("beta1");
  if (kv.has("beta2")) c.beta2 = kv.get_double("beta2");
  if (kv.has("leaky_slope")) c.leaky_slope = kv.get_double("leaky_slope");
  if (kv.has("init_stddev")) c.init_stddev = kv.get_double("init_stddev");
  if (kv.has("seed")) c.seed = kv.get_u64("seed");
  if (kv.has("latent_prior") && kv.get("latent_prior") != kLatentPrior) {
    throw std::invalid_argument("GanConfig: only the " + std::string(kLatentPrior) +
                                " latent prior is supported");
  }
  return c;
}

BatchNormLayer BatchNormLayer::create(std::size_t channels) {
  BatchNormLayer l;
  l.gamma = Tensor({channels}, 1.0f);
  l.gamma.set_requires_grad(true);
  l.beta = zeros_param({channels});
  l.stats = ops::BatchNormStats::fresh(channels);
  return l;
}

// ---------------------------------------------------------------- generator

Generator::Generator(const GanConfig& config, std::mt19937_64& rng) : config_(config) {
  const auto k = static_cast<std::size_t>(config.kernel_size);
  const auto c0 = static_cast<std::size_t>(config.channels.front());
  projection_ = normal_tensor({c0 * 16, static_cast<std::size_t>(config.latent_dim)},
                              config.init_stddev, rng);
  projection_bn_ = BatchNormLayer::create(c0);
  for (int i = 0; i < config.stages(); ++i) {
    const auto cin = static_cast<std::size_t>(config.channels[i]);
    const bool last = i + 1 == config.stages();
    const auto cout = last ? std::size_t{1} : static_cast<std::size_t>(config.channels[i + 1]);
    kernels_.push_back(normal_tensor({cin, cout, k, k}, config.init_stddev, rng));
    if (!last) bns_.push_back(BatchNormLayer::create(cout));
  }
  output_bias_ = zeros_param({1});
}

template <typename Self>
Tensor Generator::run(Self& self, const Tensor& z, Mode mode, Tape* tape) {
  const auto& cfg = self.config_;
  if (z.rank() != 2 || z.dim(1) != static_cast<std::size_t>(cfg.latent_dim)) {
    throw std::invalid_argument("Generator: expected latent batch [N," +
                                std::to_string(cfg.latent_dim) + "], got " +
                                shape_string(z.shape()));
  }
  const auto bn_mode = mode == Mode::train ? ops::BatchNormMode::train : ops::BatchNormMode::eval;
  // Batchnorm followed by an activation. In eval mode with constant
  // parameters this collapses to one fused per-channel affine pass.
  auto bn_act = [&](auto& layer, const Tensor& x, ops::Activation act) {
    if (folds(mode, tape, layer.gamma, layer.beta)) {
      Tensor scale, shift;
      ops::fold_batchnorm(layer.gamma, layer.beta, layer.stats, scale, shift);
      return ops::channel_affine(x, scale, shift, act, 0.0f, tape);
    }
    // Eval never writes the statistics, so a const layer can hand out a copy.
    ops::BatchNormStats stats = layer.stats;
    Tensor y = ops::batchnorm(x, layer.gamma, layer.beta, bn_mode, stats, tape);
    if constexpr (!std::is_const_v<Self>) layer.stats = stats;
    return act == ops::Activation::relu ? ops::relu(y, tape) : y;
  };

  const std::size_t n = z.dim(0);
  const auto c0 = static_cast<std::size_t>(cfg.channels.front());
  Tensor h = ops::linear(z, self.projection_, Tensor(), tape);
  h = ops::reshape(h, {n, c0, 4, 4}, tape);
  h = bn_act(self.projection_bn_, h, ops::Activation::relu);
  const ops::ConvTransposeParams up{2, pad_for(cfg.kernel_size), 1};
  for (std::size_t i = 0; i < self.kernels_.size(); ++i) {
    h = ops::conv2d_transpose(h, self.kernels_[i], up, tape);
    if (i + 1 < self.kernels_.size()) {
      h = bn_act(self.bns_[i], h, ops::Activation::relu);
    } else if (!(tape && tape->tracks(self.output_bias_))) {
      h = ops::channel_affine(h, Tensor({1}, 1.0f), self.output_bias_, ops::Activation::tanh, 0.0f,
                              tape);
    } else {
      h = ops::tanh(ops::add_channel_bias(h, self.output_bias_, tape), tape);
    }
  }
  return h;
}

Tensor Generator::forward(const Tensor& z, Mode mode, Tape* tape) {
  return run(*this, z, mode, tape);
}

Tensor Generator::infer(const Tensor& z, Tape* tape) const {
  return run(*this, z, Mode::eval, tape);
}

std::vector<NamedTensor> Generator::parameters() const {
  std::vector<NamedTensor> out{{"generator.projection", projection_},
                               {"generator.projection_bn.gamma", projection_bn_.gamma},
                               {"generator.projection_bn.beta", projection_bn_.beta}};
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    const std::string id = std::to_string(i);
    out.push_back({"generator.up" + id + ".kernel", kernels_[i]});
    if (i < bns_.size()) {
      out.push_back({"generator.up" + id + ".bn.gamma", bns_[i].gamma});
      out.push_back({"generator.up" + id + ".bn.beta", bns_[i].beta});
    }
  }
  out.push_back({"generator.output_bias", output_bias_});
  return out;
}

std::vector<NamedTensor> Generator::buffers() const {
  std::vector<NamedTensor> out{
      {"generator.projection_bn.running_mean", projection_bn_.stats.running_mean},
      {"generator.projection_bn.running_var", projection_bn_.stats.running_var}};
  for (std::size_t i = 0; i < bns_.size(); ++i) {
    const std::string id = std::to_string(i);
    out.push_back({"generator.up" + id + ".bn.running_mean", bns_[i].stats.running_mean});
    out.push_back({"generator.up" + id + ".bn.running_var", bns_[i].stats.running_var});
  }
  return out;
}

// ------------------------------------------------------------ discriminator

Discriminator::Discriminator(const GanConfig& config, std::mt19937_64& rng) : config_(config) {
  const auto k = static_cast<std::size_t>(config.kernel_size);
  std::vector<int> widths(config.channels.rbegin(), config.channels.rend());
  std::size_t cin = 1;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const auto cout = static_cast<std::size_t>(widths[i]);
    kernels_.push_back(normal_tensor({cout, cin, k, k}, config.init_stddev, rng));
    if (i == 0) {
      first_bias_ = zeros_param({cout});
    } else {
      bns_.push_back(BatchNormLayer::create(cout));
    }
    cin = cout;
  }
  head_weight_ = normal_tensor({1, cin * 16}, config.init_stddev, rng);
  head_bias_ = zeros_param({1});
}

std::size_t Discriminator::feature_dim(std::size_t feature_layer) const {
  const std::size_t layer = std::min(feature_layer, kernels_.size() - 1);
  const std::size_t side = static_cast<std::size_t>(config_.image_size) >> (layer + 1);
  return kernels_[layer].dim(0) * side * side;
}

template <typename Self>
Discriminator::Output Discriminator::run(Self& self, const Tensor& images, Mode mode, Tape* tape,
                                         std::size_t feature_layer) {
  const auto s = static_cast<std::size_t>(self.config_.image_size);
  if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != s || images.dim(3) != s) {
    throw std::invalid_argument("Discriminator: expected images [N,1," + std::to_string(s) + "," +
                                std::to_string(s) + "], got " + shape_string(images.shape()));
  }
  const auto bn_mode = mode == Mode::train ? ops::BatchNormMode::train : ops::BatchNormMode::eval;
  const std::size_t last = self.kernels_.size() - 1;
  const std::size_t feature_at = std::min(feature_layer, last);
  const ops::Conv2dParams down{2, pad_for(self.config_.kernel_size)};
  const std::size_t n = images.dim(0);
  const auto slope = static_cast<float>(self.config_.leaky_slope);

  Output out;
  Tensor h = images;
  for (std::size_t i = 0; i <= last; ++i) {
    h = ops::conv2d(h, self.kernels_[i], down, tape);
    if (i == 0) {
      if (!(tape && tape->tracks(self.first_bias_))) {
        h = ops::channel_affine(h, Tensor({self.first_bias_.numel()}, 1.0f), self.first_bias_,
                                ops::Activation::leaky_relu, slope, tape);
      } else {
        h = ops::leaky_relu(ops::add_channel_bias(h, self.first_bias_, tape), slope, tape);
      }
    } else {
      auto& layer = self.bns_[i - 1];
      if (folds(mode, tape, layer.gamma, layer.beta)) {
        Tensor scale, shift;
        ops::fold_batchnorm(layer.gamma, layer.beta, layer.stats, scale, shift);
        h = ops::channel_affine(h, scale, shift, ops::Activation::leaky_relu, slope, tape);
      } else {
        ops::BatchNormStats stats = layer.stats;
        h = ops::batchnorm(h, layer.gamma, layer.beta, bn_mode, stats, tape);
        if constexpr (!std::is_const_v<Self>) layer.stats = stats;
        h = ops::leaky_relu(h, slope, tape);
      }
    }
    if (i == feature_at) out.features = ops::reshape(h, {n, h.numel() / n}, tape);
  }
  const Tensor flat = feature_at == last ? out.features : ops::reshape(h, {n, h.numel() / n}, tape);
  out.logits = ops::reshape(ops::linear(flat, self.head_weight_, self.head_bias_, tape), {n}, tape);
  return out;
}

Discriminator::Output Discriminator::forward(const Tensor& images, Mode mode, Tape* tape,
                                             std::size_t feature_layer) {
  return run(*this, images, mode, tape, feature_layer);
}

Discriminator::Output Discriminator::infer(const Tensor& images, Tape* tape,
                                           std::size_t feature_layer) const {
  return run(*this, images, Mode::eval, tape, feature_layer);
}

std::vector<NamedTensor> Discriminator::parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < kernels_.size(); ++i) {
    const std::string id = std::to_string(i);
    out.push_back({"discriminator.down" + id + ".kernel", kernels_[i]});
    if (i == 0) {
      out.push_back({"discriminator.down0.bias", first_bias_});
    } else {
      out.push_back({"discriminator.down" + id + ".bn.gamma", bns_[i - 1].gamma});
      out.push_back({"discriminator.down" + id + ".bn.beta", bns_[i - 1].beta});
    }
  }
  out.push_back({"discriminator.head.weight", head_weight_});
  out.push_back({"discriminator.head.bias", head_bias_});
  return out;
}

std::vector<NamedTensor> Discriminator::buffers() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < bns_.size(); ++i) {
    const std::string id = std::to_string(i + 1);
    out.push_back({"discriminator.down" + id + ".bn.running_mean", bns_[i].stats.running_mean});
    out.push_back({"discriminator.down" + id + ".bn.running_var", bns_[i].stats.running_var});
  }
  return out;
}

// -------------------------------------------------------------------- model

GanModel::GanModel(GanConfig config, Generator generator, Discriminator discriminator)
    : config_(std::move(config)),
      generator_(std::move(generator)),
      discriminator_(std::move(discriminator)),
      feature_layer_(discriminator_.conv_layers() - 1) {}

void GanModel::set_feature_layer(std::size_t layer) {
  if (layer >= discriminator_.conv_layers()) {
    throw std::invalid_argument("GanModel: feature layer " + std::to_string(layer) +
                                " out of range (discriminator has " +
                                std::to_string(discriminator_.conv_layers()) + " conv layers)");
  }
  feature_layer_ = layer;
}

std::vector<NamedTensor> GanModel::state() const {
  std::vector<NamedTensor> out = generator_.parameters();
  for (auto& t : discriminator_.parameters()) out.push_back(std::move(t));
  for (auto& t : generator_.buffers()) out.push_back(std::move(t));
  for (auto& t : discriminator_.buffers()) out.push_back(std::move(t));
  return out;
}

GanModel GanModel::clone() const {
  GanModel copy = build_model(config_);
  copy.feature_layer_ = feature_layer_;
  auto dst = copy.state();
  const auto src = state();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto d = dst[i].tensor.data();
    const auto s = src[i].tensor.data();
    std::copy(s.begin(), s.end(), d.begin());
  }
  return copy;
}

GanModel build_model(const GanConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  Generator g(config, rng);
  Discriminator d(config, rng);
  return GanModel(config, std::move(g), std::move(d));
}

Tensor sample_latent(const GanModel& model, std::size_t n, std::mt19937_64& rng) {
  if (n == 0) throw std::invalid_argument("sample_latent: n must be at least 1");
  const auto dim = static_cast<std::size_t>(model.config().latent_dim);
  Tensor z({n, dim});
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (float& v : z.data()) v = dist(rng);
  return z;
}

Tensor generate(const GanModel& model, const Tensor& z) { return model.generator().infer(z); }

Discriminator::Output discriminate(const GanModel& model, const Tensor& images) {
  return model.discriminator().infer(images, nullptr, model.feature_layer());
}

}  // namespace anogan
