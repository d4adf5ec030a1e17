#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "anogan/ops.hpp"
#include "anogan/tensor.hpp"

namespace anogan {

// Architecture and training hyperparameters. The defaults are the full-size
// 64x64 profile; desk() is the reduced profile used for CI-scale runs.
struct GanConfig {
  int latent_dim = 100;
  int image_size = 64;
  // Generator channels after projection, widest first. The discriminator
  // walks the same list in reverse.
  std::vector<int> channels{512, 256, 128, 64};
  int kernel_size = 5;
  int epochs = 20;
  int batch_size = 64;
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double leaky_slope = 0.2;
  double init_stddev = 0.02;
  std::uint64_t seed = 0;

  static GanConfig paper();
  static GanConfig desk();

  int stages() const { return static_cast<int>(channels.size()); }
  // Throws std::invalid_argument when the strided stack cannot close.
  void validate() const;

  // Canonical key=value encoding, one key per line in a fixed order. Parsing
  // starts from `base` and rejects unknown keys.
  std::string to_text() const;
  static GanConfig from_text(const std::string& text, const GanConfig& base);
  static GanConfig from_text(const std::string& text) { return from_text(text, GanConfig{}); }
};

enum class Mode { train, eval };

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct BatchNormLayer {
  Tensor gamma;
  Tensor beta;
  ops::BatchNormStats stats;

  static BatchNormLayer create(std::size_t channels);
};

class Generator {
 public:
  Generator() = default;
  Generator(const GanConfig& config, std::mt19937_64& rng);

  // z [N,latent_dim] -> images [N,1,s,s] in [-1,1]. Train mode updates the
  // batchnorm running statistics.
  Tensor forward(const Tensor& z, Mode mode, Tape* tape = nullptr);
  // Eval mode; never mutates the layer.
  Tensor infer(const Tensor& z, Tape* tape = nullptr) const;

  std::vector<NamedTensor> parameters() const;
  // Batchnorm running statistics.
  std::vector<NamedTensor> buffers() const;

 private:
  template <typename Self>
  static Tensor run(Self& self, const Tensor& z, Mode mode, Tape* tape);

  GanConfig config_;
  Tensor projection_;  // [c0*4*4, latent_dim]
  BatchNormLayer projection_bn_;
  std::vector<Tensor> kernels_;  // [Cin,Cout,k,k]
  std::vector<BatchNormLayer> bns_;
  Tensor output_bias_;  // [1]
};

class Discriminator {
 public:
  struct Output {
    Tensor logits;    // [N]
    Tensor features;  // [N, feature_dim] activation of the feature layer
  };

  Discriminator() = default;
  Discriminator(const GanConfig& config, std::mt19937_64& rng);

  // feature_layer indexes the conv layers; out of range means the last one.
  Output forward(const Tensor& images, Mode mode, Tape* tape = nullptr,
                 std::size_t feature_layer = static_cast<std::size_t>(-1));
  Output infer(const Tensor& images, Tape* tape = nullptr,
               std::size_t feature_layer = static_cast<std::size_t>(-1)) const;

  std::size_t conv_layers() const { return kernels_.size(); }
  std::size_t feature_dim(std::size_t feature_layer) const;

  std::vector<NamedTensor> parameters() const;
  std::vector<NamedTensor> buffers() const;

 private:
  template <typename Self>
  static Output run(Self& self, const Tensor& images, Mode mode, Tape* tape,
                    std::size_t feature_layer);

  GanConfig config_;
  std::vector<Tensor> kernels_;  // [Cout,Cin,k,k]
  Tensor first_bias_;            // first conv has no batchnorm
  std::vector<BatchNormLayer> bns_;  // for conv layers 1..L-1
  Tensor head_weight_;           // [1, c*4*4]
  Tensor head_bias_;             // [1]
};

// Generator and discriminator plus the configuration that built them.
// Move-only; use clone() for an independent deep copy.
class GanModel {
 public:
  GanModel(GanConfig config, Generator generator, Discriminator discriminator);
  GanModel(GanModel&&) = default;
  GanModel& operator=(GanModel&&) = default;
  GanModel(const GanModel&) = delete;
  GanModel& operator=(const GanModel&) = delete;

  GanModel clone() const;

  const GanConfig& config() const { return config_; }
  Generator& generator() { return generator_; }
  const Generator& generator() const { return generator_; }
  Discriminator& discriminator() { return discriminator_; }
  const Discriminator& discriminator() const { return discriminator_; }

  // Index of the discriminator conv layer used as feature extractor; the last
  // conv layer unless changed.
  std::size_t feature_layer() const { return feature_layer_; }
  void set_feature_layer(std::size_t layer);

  std::vector<NamedTensor> generator_parameters() const { return generator_.parameters(); }
  std::vector<NamedTensor> discriminator_parameters() const {
    return discriminator_.parameters();
  }
  // Every parameter followed by every running-statistics buffer, in a
  // stable order (generator first).
  std::vector<NamedTensor> state() const;

 private:
  GanConfig config_;
  Generator generator_;
  Discriminator discriminator_;
  std::size_t feature_layer_ = 0;
};

GanModel build_model(const GanConfig& config);

// Uniform on [-1,1]^latent_dim.
Tensor sample_latent(const GanModel& model, std::size_t n, std::mt19937_64& rng);

// Eval-mode generation and discrimination without gradient tracking. Safe to
// call concurrently on a model that is not being trained.
Tensor generate(const GanModel& model, const Tensor& z);
Discriminator::Output discriminate(const GanModel& model, const Tensor& images);

struct TrainingLogEntry {
  std::int64_t step = 0;
  int epoch = 0;
  double discriminator_loss = 0.0;
  double generator_loss = 0.0;
};

struct TrainingLog {
  std::vector<TrainingLogEntry> entries;
  // Index into `entries` where each epoch starts.
  std::vector<std::size_t> epoch_starts;
};

// Raised when a loss turns NaN/Inf. The model has already been restored to
// the parameters from the last finite step when this propagates.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::int64_t step)
      : std::runtime_error(what), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

using TrainingCallback = std::function<void(const TrainingLogEntry&)>;

// Discriminator loss: mean sigmoid cross-entropy of real logits against 1
// plus that of generated logits against 0.
Tensor discriminator_loss(const Tensor& real_logits, const Tensor& fake_logits,
                          Tape* tape = nullptr);
// Non-saturating generator loss: mean sigmoid cross-entropy of generated
// logits against 1, i.e. -mean log sigmoid(D(G(z))).
Tensor generator_loss(const Tensor& fake_logits, Tape* tape = nullptr);

// Alternating adversarial training, one discriminator step per generator
// step. `corpus` is [n,1,s,s] with values in [-1,1]. Deterministic given
// config.seed. `on_step` may be empty.
TrainingLog train(GanModel& model, const Tensor& corpus, const TrainingCallback& on_step = {});

// Checkpoint file: magic, format version, canonical config text, named
// little-endian float32 blobs with shape manifest, trailing checksum.
std::string serialize_checkpoint(const GanModel& model);
GanModel parse_checkpoint(const std::string& bytes);
void save_checkpoint(const GanModel& model, const std::string& path);
GanModel load_checkpoint(const std::string& path);

}  // namespace anogan
