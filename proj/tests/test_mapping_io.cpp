#include <filesystem>

#include "doctest.h"

#include "anogan/file_io.hpp"
#include "anogan/mapping_io.hpp"
#include "temp_dir.hpp"
#include "tiny_model.hpp"

using namespace anogan;

TEST_CASE("mapping runs round-trip through disk") {
  const GanModel model = build_model(tiny_config());
  MappingConfig mc;
  mc.iterations = 7;
  mc.loss_variant = DiscriminationLoss::reference;
  auto results = invert_batch(model, tiny_queries(3, 2), mc);

  MappingRun run;
  run.variant = mc.loss_variant;
  run.lambda = mc.lambda;
  run.iterations = mc.iterations;
  run.image_size = 16;
  for (std::size_t i = 0; i < results.size(); ++i) {
    run.records.push_back({"q" + std::to_string(i), i == 1 ? std::optional<int>(1) : std::nullopt, results[i]});
  }
  TempDir dir("mapping");
  write_mapping_run(run, dir.str("run"));
  const MappingRun back = read_mapping_run(dir.str("run"));
  CHECK(back.variant == run.variant);
  CHECK(back.lambda == run.lambda);
  REQUIRE(back.records.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& a = run.records[i].result;
    const auto& b = back.records[i].result;
    CHECK(back.records[i].query_id == run.records[i].query_id);
    CHECK(back.records[i].label == run.records[i].label);
    CHECK(b.z_final == a.z_final);
    CHECK(b.loss_trajectory == a.loss_trajectory);
    CHECK(b.residual_loss_final == a.residual_loss_final);
    CHECK(b.discrimination_loss_final == a.discrimination_loss_final);
    CHECK(std::vector<float>(b.residual_image.data().begin(), b.residual_image.data().end()) ==
          std::vector<float>(a.residual_image.data().begin(), a.residual_image.data().end()));
    CHECK(std::vector<float>(b.generated.data().begin(), b.generated.data().end()) ==
          std::vector<float>(a.generated.data().begin(), a.generated.data().end()));
  }

  std::filesystem::resize_file(dir.str("run/residual.f32"), 16 * 16 * 4);
  CHECK_THROWS(read_mapping_run(dir.str("run")));
  io::write_file_atomic(dir.str("run/mapping.json"), "{");
  CHECK_THROWS(read_mapping_run(dir.str("run")));
}
