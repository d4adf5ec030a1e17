#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "anogan/adam.hpp"
#include "anogan/gan.hpp"

namespace anogan {

namespace {

std::vector<Tensor> handles(const std::vector<NamedTensor>& named) {
  std::vector<Tensor> out;
  out.reserve(named.size());
  for (const auto& n : named) out.push_back(n.tensor);
  return out;
}

void zero_grads(std::vector<Tensor>& ts) {
  for (auto& t : ts) t.zero_grad();
}

bool all_finite(const std::vector<NamedTensor>& state) {
  for (const auto& s : state) {
    for (float v : s.tensor.data()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

struct Snapshot {
  std::vector<std::vector<float>> values;

  void capture(const std::vector<NamedTensor>& state) {
    values.resize(state.size());
    for (std::size_t i = 0; i < state.size(); ++i) {
      values[i].assign(state[i].tensor.data().begin(), state[i].tensor.data().end());
    }
  }

  void restore(std::vector<NamedTensor>& state) const {
    for (std::size_t i = 0; i < state.size(); ++i) {
      std::copy(values[i].begin(), values[i].end(), state[i].tensor.data().begin());
    }
  }
};

Tensor gather(const Tensor& corpus, const std::vector<std::size_t>& order, std::size_t begin,
              std::size_t count) {
  const std::size_t per = corpus.numel() / corpus.dim(0);
  Shape shape = corpus.shape();
  shape[0] = count;
  Tensor batch(shape);
  const auto src = corpus.data();
  auto dst = batch.data();
  for (std::size_t i = 0; i < count; ++i) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(order[begin + i] * per), per,
                dst.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  return batch;
}

}  // namespace

Tensor discriminator_loss(const Tensor& real_logits, const Tensor& fake_logits, Tape* tape) {
  const Tensor real = ops::mean(ops::sigmoid_cross_entropy(real_logits, 1.0f, tape), tape);
  const Tensor fake = ops::mean(ops::sigmoid_cross_entropy(fake_logits, 0.0f, tape), tape);
  return ops::add(real, fake, tape);
}

Tensor generator_loss(const Tensor& fake_logits, Tape* tape) {
  return ops::mean(ops::sigmoid_cross_entropy(fake_logits, 1.0f, tape), tape);
}

TrainingLog train(GanModel& model, const Tensor& corpus, const TrainingCallback& on_step) {
  const GanConfig& cfg = model.config();
  const auto s = static_cast<std::size_t>(cfg.image_size);
  if (corpus.rank() != 4 || corpus.dim(1) != 1 || corpus.dim(2) != s || corpus.dim(3) != s) {
    throw std::invalid_argument("train: corpus must be [n,1," + std::to_string(s) + "," +
                                std::to_string(s) + "], got " + shape_string(corpus.shape()));
  }
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  if (batch < 2) throw std::invalid_argument("train: batch_size must be at least 2");
  if (corpus.dim(0) < batch) {
    throw std::invalid_argument("train: corpus of " + std::to_string(corpus.dim(0)) +
                                " patches is smaller than one batch");
  }
  for (float v : corpus.data()) {
    if (!(v >= -1.0f && v <= 1.0f)) {
      throw std::invalid_argument("train: corpus values must lie in [-1,1]");
    }
  }

  std::vector<Tensor> g_params = handles(model.generator_parameters());
  std::vector<Tensor> d_params = handles(model.discriminator_parameters());
  const AdamOptions adam{cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8};
  AdamState g_opt(g_params, adam);
  AdamState d_opt(d_params, adam);

  std::seed_seq seq{cfg.seed, std::uint64_t{0x747261696eULL}};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(corpus.dim(0));
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto state = model.state();
  Snapshot last_good;
  last_good.capture(state);

  TrainingLog log;
  std::int64_t step = 0;
  const std::size_t steps_per_epoch = corpus.dim(0) / batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    log.epoch_starts.push_back(log.entries.size());
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const Tensor real = gather(corpus, order, b * batch, batch);
      const Tensor z = sample_latent(model, batch, rng);

      // One generator pass serves both updates; its tape is extended by the
      // discriminator pass of the generator step below.
      Tape g_tape;
      g_tape.freeze(d_params);
      const Tensor fake = model.generator().forward(z, Mode::train, &g_tape);

      // Discriminator step on real and detached generated batches.
      Tape d_tape;
      Tensor fake_detached = fake.clone();
      fake_detached.set_requires_grad(false);
      const auto real_out = model.discriminator().forward(real, Mode::train, &d_tape);
      const auto fake_out = model.discriminator().forward(fake_detached, Mode::train, &d_tape);
      const Tensor d_loss = discriminator_loss(real_out.logits, fake_out.logits, &d_tape);
      zero_grads(d_params);
      d_tape.backward(d_loss);

      // Generator step against the updated discriminator.
      const double d_value = d_loss.item();
      if (std::isfinite(d_value)) d_opt.step(d_params);
      const auto gen_out = model.discriminator().forward(fake, Mode::train, &g_tape);
      const Tensor g_loss = generator_loss(gen_out.logits, &g_tape);
      const double g_value = g_loss.item();
      zero_grads(g_params);
      if (std::isfinite(d_value) && std::isfinite(g_value)) {
        g_tape.backward(g_loss);
        g_opt.step(g_params);
      }

      if (!std::isfinite(d_value) || !std::isfinite(g_value) || !all_finite(state)) {
        last_good.restore(state);
        throw TrainingDiverged("train: non-finite loss at step " + std::to_string(step) +
                                   " (discriminator " + std::to_string(d_value) + ", generator " +
                                   std::to_string(g_value) + "); parameters restored to step " +
                                   std::to_string(step - 1),
                               step);
      }
      last_good.capture(state);

      TrainingLogEntry entry{step, epoch, d_value, g_value};
      log.entries.push_back(entry);
      if (on_step) on_step(entry);
      ++step;
    }
  }
  return log;
}

}  // namespace anogan
