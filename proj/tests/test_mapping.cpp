#include <cmath>
#include <random>

#include "doctest.h"

#include "anogan/mapping.hpp"
#include "anogan/ops.hpp"
#include "oracles.hpp"
#include "reference_model.hpp"
#include "tiny_model.hpp"

using namespace anogan;

namespace {

std::vector<std::vector<float>> snapshot(const GanModel& model) {
  std::vector<std::vector<float>> out;
  for (const auto& t : model.state()) out.emplace_back(t.tensor.data().begin(), t.tensor.data().end());
  return out;
}

}  // namespace

TEST_CASE("residual loss is zero for identical images and sums absolute differences") {
  const Tensor x = tiny_queries(1, 1);
  CHECK(residual_loss(x, x) == 0.0);
  Tensor g = x.clone();
  g.data()[0] += 0.25f;
  g.data()[5] -= 0.5f;
  CHECK(residual_loss(x, g) == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("combined loss endpoints reduce to one component") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  for (int i = 0; i < 50; ++i) {
    const double r = u(rng), d = u(rng);
    CHECK(combine_losses(r, d, 0.0) == r);
    CHECK(combine_losses(r, d, 1.0) == d);
  }
}

TEST_CASE("mapping loss at lambda endpoints matches the component losses") {
  const GanModel model = build_model(tiny_config());
  const Tensor x = tiny_queries(2, 2);
  Tensor z({2, 6});
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto& v : z.data()) v = u(rng);
  const Tensor g = generate(model, z);

  const auto fm = discrimination_loss_fm(model, x, g);
  const auto at0 = mapping_loss(model, x, z, 0.0, DiscriminationLoss::feature_matching);
  const auto at1 = mapping_loss(model, x, z, 1.0, DiscriminationLoss::feature_matching);
  for (std::size_t i = 0; i < 2; ++i) {
    const Tensor xi({1, 1, 16, 16}, std::vector<float>(x.data().begin() + i * 256, x.data().begin() + (i + 1) * 256));
    const Tensor gi({1, 1, 16, 16}, std::vector<float>(g.data().begin() + i * 256, g.data().begin() + (i + 1) * 256));
    CHECK(at0[i] == doctest::Approx(residual_loss(xi, gi)).epsilon(1e-6));
    CHECK(at1[i] == doctest::Approx(fm[i]).epsilon(1e-6));
  }
  const auto ref = discrimination_loss_ref(model, g);
  const auto ref1 = mapping_loss(model, x, z, 1.0, DiscriminationLoss::reference);
  for (std::size_t i = 0; i < 2; ++i) CHECK(ref1[i] == doctest::Approx(ref[i]).epsilon(1e-6));
}

TEST_CASE("feature matching loss vanishes when query and reconstruction coincide") {
  const GanModel model = build_model(tiny_config());
  const Tensor x = tiny_queries(3, 4);
  for (double v : discrimination_loss_fm(model, x, x)) CHECK(v == 0.0);
}

TEST_CASE("reference loss is the sigmoid cross-entropy against real") {
  CHECK(reference_loss_from_logit(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(reference_loss_from_logit(30.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(reference_loss_from_logit(-30.0) == doctest::Approx(30.0).epsilon(1e-9));
}

TEST_CASE("mapping gradient matches finite differences of a double-precision forward") {
  // A wider init than the default so the losses respond visibly to z.
  auto cfg = tiny_config();
  cfg.init_stddev = 0.2;
  const GanModel model = build_model(cfg);
  const Tensor x = tiny_queries(1, 6);
  std::mt19937_64 rng(13);
  const Tensor z = testing::random_tensor({1, 6}, rng, -0.9f, 0.9f);

  const testing::ReferenceModel ref(model);
  const auto parts = ref.losses(std::vector<double>(x.data().begin(), x.data().end()),
                                std::vector<double>(z.data().begin(), z.data().end()));
  const std::vector<std::pair<DiscriminationLoss, double>> cases{
      {DiscriminationLoss::feature_matching, 0.0}, {DiscriminationLoss::feature_matching, 0.1},
      {DiscriminationLoss::feature_matching, 1.0}, {DiscriminationLoss::reference, 0.1},
      {DiscriminationLoss::reference, 1.0}};
  for (const auto& [variant, lambda] : cases) {
    const double lib = mapping_loss(model, x, z, lambda, variant)[0];
    CHECK(lib == doctest::Approx(parts.total(lambda, variant)).epsilon(1e-5));
  }
  const auto checks = testing::mapping_gradient_vs_reference(model, x, z, cases, 1e-6);
  for (std::size_t i = 0; i < checks.size(); ++i) {
    INFO("case " << i << " error " << checks[i].relative_error << " excluded " << checks[i].excluded);
    CHECK(checks[i].relative_error < 1e-3);
    CHECK(checks[i].excluded * 4 <= checks[i].total);
  }
}

TEST_CASE("a single iteration records exactly one loss") {
  const GanModel model = build_model(tiny_config());
  MappingConfig mc;
  mc.iterations = 1;
  const auto r = invert(model, tiny_queries(1, 7), mc);
  CHECK(r.loss_trajectory.size() == 1);
  CHECK(r.loss_trajectory.back() ==
        doctest::Approx(combine_losses(r.residual_loss_final, r.discrimination_loss_final, 0.1)));
}

TEST_CASE("inversion is deterministic, leaves the model untouched and decreases the loss") {
  const GanModel model = build_model(tiny_config());
  const auto before = snapshot(model);
  MappingConfig mc;
  mc.iterations = 40;
  mc.seed = 21;
  const Tensor x = tiny_queries(4, 8);
  const auto a = invert_batch(model, x, mc);
  const auto b = invert_batch(model, x, mc);
  CHECK(snapshot(model) == before);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].z_final == b[i].z_final);
    CHECK(a[i].loss_trajectory == b[i].loss_trajectory);
    CHECK(a[i].loss_trajectory.size() == 40);
    CHECK(a[i].loss_trajectory.back() <= a[i].loss_trajectory.front());
    for (float v : a[i].z_final) CHECK(std::fabs(v) <= 1.0f);
  }
}

TEST_CASE("a query's result does not depend on its batch neighbours") {
  const GanModel model = build_model(tiny_config());
  MappingConfig mc;
  mc.iterations = 10;
  const Tensor x = tiny_queries(3, 10);
  const auto batch = invert_batch(model, x, mc);
  const Tensor last({1, 1, 16, 16}, std::vector<float>(x.data().begin() + 512, x.data().end()));
  const auto alone = invert(model, last, mc, 2);
  for (std::size_t k = 0; k < alone.z_final.size(); ++k) {
    CHECK(alone.z_final[k] == doctest::Approx(batch[2].z_final[k]).epsilon(1e-4));
  }
}

TEST_CASE("restarts keep the best final loss") {
  const GanModel model = build_model(tiny_config());
  MappingConfig one;
  one.iterations = 5;
  MappingConfig three = one;
  three.restarts = 3;
  const Tensor x = tiny_queries(2, 11);
  const auto a = invert_batch(model, x, one);
  const auto b = invert_batch(model, x, three);
  for (std::size_t i = 0; i < 2; ++i) CHECK(b[i].loss_trajectory.back() <= a[i].loss_trajectory.back());
}

TEST_CASE("mapping rejects bad input") {
  const GanModel model = build_model(tiny_config());
  MappingConfig mc;
  Tensor x = tiny_queries(1, 12);
  x.data()[3] = 1.5f;
  CHECK_THROWS_AS(invert(model, x, mc), std::invalid_argument);
  CHECK_THROWS_AS(invert(model, Tensor({1, 1, 8, 8}), mc), std::invalid_argument);
  mc.iterations = 0;
  CHECK_THROWS_AS(invert(model, tiny_queries(1, 1), mc), std::invalid_argument);
  mc.iterations = 5;
  mc.lambda = 1.5;
  CHECK_THROWS_AS(mc.validate(), std::invalid_argument);
}

TEST_CASE("mapping config text round-trips") {
  MappingConfig mc;
  mc.iterations = 123;
  mc.lambda = 0.3;
  mc.step_rule = StepRule::gradient_descent;
  mc.loss_variant = DiscriminationLoss::reference;
  mc.clip_to_prior = false;
  mc.seed = 99;
  const auto back = MappingConfig::from_text(mc.to_text());
  CHECK(back.to_text() == mc.to_text());
  CHECK_THROWS(MappingConfig::from_text("bogus=1\n"));
}
