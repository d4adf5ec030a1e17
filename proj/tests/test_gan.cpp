#include <cmath>
#include <random>

#include "doctest.h"

#include "anogan/gan.hpp"
#include "anogan/ops.hpp"
#include "temp_dir.hpp"
#include "tiny_model.hpp"

using namespace anogan;

TEST_CASE("generator and discriminator shapes") {
  const GanModel model = build_model(tiny_config());
  std::mt19937_64 rng(1);
  const Tensor z = sample_latent(model, 5, rng);
  CHECK(z.shape() == Shape{5, 6});
  for (float v : z.data()) CHECK((v >= -1.0f && v <= 1.0f));
  const Tensor g = generate(model, z);
  CHECK(g.shape() == Shape{5, 1, 16, 16});
  for (float v : g.data()) CHECK((v > -1.0f && v < 1.0f));
  const auto d = discriminate(model, g);
  CHECK(d.logits.shape() == Shape{5});
  CHECK(d.features.dim(1) == model.discriminator().feature_dim(model.feature_layer()));
  CHECK_THROWS_AS(generate(model, Tensor({2, 7})), std::invalid_argument);
  CHECK_THROWS_AS(discriminate(model, Tensor({2, 1, 8, 8})), std::invalid_argument);
}

TEST_CASE("desk and full-size profiles build the expected sizes") {
  auto desk = GanConfig::desk();
  CHECK_NOTHROW(desk.validate());
  CHECK(desk.image_size == 32);
  CHECK(desk.epochs == 10);
  CHECK_NOTHROW(GanConfig::paper().validate());
  CHECK(GanConfig::paper().image_size == 64);
}

TEST_CASE("config validation") {
  auto c = tiny_config();
  c.image_size = 24;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.image_size = 32;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.leaky_slope = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.kernel_size = 4;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  CHECK(GanConfig::from_text(c.to_text()).to_text() == c.to_text());
  CHECK_THROWS(GanConfig::from_text("gan_size=3\n"));
}

TEST_CASE("GAN losses at known logits") {
  const Tensor zero({2}, 0.0f);
  CHECK(discriminator_loss(zero, zero).item() == doctest::Approx(2.0 * std::log(2.0)));
  CHECK(generator_loss(zero).item() == doctest::Approx(std::log(2.0)));
  const Tensor confident({2}, 20.0f);
  CHECK(generator_loss(confident).item() == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("training is deterministic and logs finite losses") {
  std::mt19937_64 rng(4);
  Tensor corpus({32, 1, 16, 16});
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto& v : corpus.data()) v = u(rng);

  GanModel a = build_model(tiny_config());
  GanModel b = build_model(tiny_config());
  std::size_t callbacks = 0;
  const auto log = train(a, corpus, [&](const TrainingLogEntry&) { ++callbacks; });
  train(b, corpus);
  CHECK(serialize_checkpoint(a) == serialize_checkpoint(b));
  CHECK(log.entries.size() == 4);
  CHECK(callbacks == 4);
  CHECK(log.epoch_starts == std::vector<std::size_t>{0});
  for (const auto& e : log.entries) {
    CHECK(std::isfinite(e.discriminator_loss));
    CHECK(std::isfinite(e.generator_loss));
  }
  CHECK(serialize_checkpoint(a) != serialize_checkpoint(build_model(tiny_config())));

  auto other = tiny_config();
  other.seed = 4;
  GanModel c = build_model(other);
  train(c, corpus);
  CHECK(serialize_checkpoint(c) != serialize_checkpoint(a));

  CHECK_THROWS_AS(train(a, Tensor({4, 1, 16, 16})), std::invalid_argument);
}

TEST_CASE("checkpoints round-trip and detect corruption") {
  GanModel model = build_model(tiny_config());
  std::mt19937_64 rng(5);
  Tensor corpus({16, 1, 16, 16});
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto& v : corpus.data()) v = u(rng);
  train(model, corpus);

  const std::string bytes = serialize_checkpoint(model);
  const GanModel back = parse_checkpoint(bytes);
  CHECK(serialize_checkpoint(back) == bytes);
  CHECK(back.config().to_text() == model.config().to_text());
  const Tensor z = sample_latent(model, 3, rng);
  const Tensor ga = generate(model, z), gb = generate(back, z);
  CHECK(std::vector<float>(ga.data().begin(), ga.data().end()) ==
        std::vector<float>(gb.data().begin(), gb.data().end()));

  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  CHECK_THROWS(parse_checkpoint(flipped));
  CHECK_THROWS(parse_checkpoint(bytes.substr(0, bytes.size() - 9)));
  CHECK_THROWS(parse_checkpoint("not a checkpoint"));

  TempDir dir("ckpt");
  save_checkpoint(model, dir.str("m.ckpt"));
  CHECK(serialize_checkpoint(load_checkpoint(dir.str("m.ckpt"))) == bytes);
  CHECK_FALSE(std::filesystem::exists(dir.str("m.ckpt.partial")));
  CHECK_THROWS(load_checkpoint(dir.str("absent.ckpt")));
}

TEST_CASE("clone is independent and eval inference leaves the model untouched") {
  GanModel model = build_model(tiny_config());
  GanModel copy = model.clone();
  copy.generator().parameters().front().tensor.data()[0] += 1.0f;
  CHECK(serialize_checkpoint(copy) != serialize_checkpoint(model));

  const std::string before = serialize_checkpoint(model);
  std::mt19937_64 rng(6);
  const Tensor z = sample_latent(model, 4, rng);
  model.generator().infer(z);
  model.discriminator().infer(generate(model, z));
  CHECK(serialize_checkpoint(model) == before);
  model.generator().forward(z, Mode::train);
  CHECK(serialize_checkpoint(model) != before);  // running statistics moved
}
