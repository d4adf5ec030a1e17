#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"

#include "anogan/data.hpp"
#include "anogan/file_io.hpp"
#include "temp_dir.hpp"

using namespace anogan;

namespace {

SyntheticCorpusConfig small_corpus() {
  auto c = SyntheticCorpusConfig::desk();
  c.image_size = 16;
  c.n_train_patches = 40;
  c.n_test_normal = 10;
  c.n_test_anomalous = 10;
  c.lesion_size_min = 3;
  c.lesion_size_max = 6;
  c.seed = 17;
  return c;
}

}  // namespace

TEST_CASE("normalize maps the value range onto [-1,1]") {
  const std::vector<float> raw{2.0f, 4.0f, 3.0f, 6.0f};
  const auto n = normalize(raw);
  CHECK(n[0] == -1.0f);
  CHECK(n[3] == 1.0f);
  CHECK(n[1] == doctest::Approx(0.0));
  CHECK(n[2] == doctest::Approx(-0.5));
  CHECK_THROWS(normalize(std::vector<float>{1.0f, 1.0f}));
  CHECK_THROWS(normalize(std::vector<float>{}));
}

TEST_CASE("patches are copied from their corners") {
  const std::size_t h = 6, w = 9;
  std::vector<float> image(h * w);
  for (std::size_t i = 0; i < image.size(); ++i) image[i] = static_cast<float>(i);
  std::mt19937_64 rng(1);
  std::vector<PatchCorner> corners;
  const auto patches = extract_patches(image, h, w, 20, 3, rng, &corners);
  REQUIRE(patches.size() == 20);
  REQUIRE(corners.size() == 20);
  for (std::size_t p = 0; p < 20; ++p) {
    CHECK(corners[p].row + 3 <= h);
    CHECK(corners[p].col + 3 <= w);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(patches[p][r * 3 + c] == image[(corners[p].row + r) * w + corners[p].col + c]);
  }
  CHECK_THROWS_AS(extract_patches(image, h, w, 1, 7, rng), std::invalid_argument);
}

TEST_CASE("patch corners are uniform (chi-square)") {
  const std::size_t h = 10, w = 12, size = 4;
  const std::vector<float> image(h * w, 0.0f);
  const std::size_t rows = h - size + 1, cols = w - size + 1, cells = rows * cols;  // 63
  const std::size_t per_cell = 200;
  std::mt19937_64 rng(2);
  std::vector<PatchCorner> corners;
  extract_patches(image, h, w, cells * per_cell, size, rng, &corners);
  std::vector<double> counts(cells, 0.0);
  for (const auto& c : corners) counts[c.row * cols + c.col] += 1.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - per_cell) * (c - per_cell) / per_cell;
  // 62 degrees of freedom; 100.9 is the 0.999 quantile.
  CHECK(chi2 < 100.9);
}

TEST_CASE("label is 1 iff the mask has a pixel set") {
  CHECK(label_from_mask(std::vector<std::uint8_t>{0, 0, 0}) == 0);
  CHECK(label_from_mask(std::vector<std::uint8_t>{0, 1, 0}) == 1);
  CHECK(label_from_mask(std::vector<std::uint8_t>{}) == 0);
}

TEST_CASE("lesion pixel count agrees with the footprint and the injected mask") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> dim(1, 9), pos(0, 6);
  for (int trial = 0; trial < 50; ++trial) {
    LesionSpec l{trial % 2 ? LesionShape::ellipse : LesionShape::square, pos(rng), pos(rng),
                 dim(rng), dim(rng), 0.5};
    std::size_t covered = 0;
    for (int r = 0; r < 20; ++r)
      for (int c = 0; c < 20; ++c) covered += lesion_covers(l, r, c) ? 1 : 0;
    CHECK(lesion_pixel_count(l) == covered);
    std::vector<float> patch(20 * 20, 0.9f);
    const auto mask = inject_lesion(patch, 20, l);
    CHECK(static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)) == covered);
    for (float v : patch) CHECK((v >= -1.0f && v <= 1.0f));
  }
  LesionSpec square{LesionShape::square, 1, 1, 3, 4, 0.2};
  CHECK(lesion_pixel_count(square) == 12);
}

TEST_CASE("synthetic corpus layout, labels and determinism") {
  const auto cfg = small_corpus();
  const Dataset a = generate_corpus(cfg);
  const Dataset b = generate_corpus(cfg);
  CHECK(a.patches == b.patches);
  CHECK(a.masks == b.masks);
  CHECK(a.manifest.to_json() == b.manifest.to_json());
  CHECK(a.indices(Split::train).size() == 40);
  CHECK(a.indices(Split::test).size() == 20);
  CHECK(a.manifest.test_anomalous_ratio == 0.5);
  for (float v : a.patches) CHECK((v >= -1.0f && v <= 1.0f));
  for (std::size_t i : a.indices(Split::test)) {
    const auto& rec = a.manifest.records[i];
    CHECK(label_from_mask(a.mask(i)) == rec.label);
    CHECK(rec.lesion.has_value() == (rec.label == 1));
  }
  for (std::size_t i : a.indices(Split::train)) CHECK(a.manifest.records[i].label == 0);
  CHECK_NOTHROW(a.check_consistency());

  auto other = cfg;
  other.seed = 18;
  CHECK(generate_corpus(other).patches != a.patches);
  const Tensor imgs = a.images(a.indices(Split::test));
  CHECK(imgs.shape() == Shape{20, 1, 16, 16});
}

TEST_CASE("corpus config text round-trips and validates") {
  auto cfg = small_corpus();
  CHECK(SyntheticCorpusConfig::from_text(cfg.to_text()).to_text() == cfg.to_text());
  CHECK_THROWS(SyntheticCorpusConfig::from_text("nope=1\n"));
  cfg.lesion_size_max = 100;
  CHECK_THROWS(cfg.validate());
  cfg = small_corpus();
  cfg.n_test_anomalous = -1;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("dataset store round-trips and rejects damage") {
  TempDir dir("dataset");
  const Dataset a = generate_corpus(small_corpus());
  write_dataset(a, dir.str("ds"));
  const Dataset b = read_dataset(dir.str("ds"));
  CHECK(b.patches == a.patches);
  CHECK(b.masks == a.masks);
  CHECK(b.manifest.to_json() == a.manifest.to_json());

  {
    std::string manifest = io::read_file(dir.str("ds/manifest.json"));
    const auto at = manifest.find("\"config_hash\"");
    REQUIRE(at != std::string::npos);
    manifest[manifest.find('"', at + 15) + 1] ^= 1;
    io::write_file_atomic(dir.str("ds/manifest.json"), manifest);
    CHECK_THROWS(read_dataset(dir.str("ds")));
  }
  write_dataset(a, dir.str("ds"));
  std::filesystem::resize_file(dir.str("ds/patches.f32"), 100);
  CHECK_THROWS(read_dataset(dir.str("ds")));
  CHECK_THROWS(read_dataset(dir.str("missing")));
}

TEST_CASE("importing a directory of raw patches") {
  TempDir dir("import");
  std::vector<float> patches(3 * 16, 0.25f);
  patches[16] = -1.0f;
  io::write_file_atomic(dir.str("patches.f32"),
                        std::string_view(reinterpret_cast<const char*>(patches.data()), patches.size() * 4));
  io::write_file_atomic(dir.str("labels.csv"), "id,label,split\na,0,train\nb,1,test\nc,0,test\n");
  const Dataset ds = import_patch_directory(dir.str());
  CHECK(ds.manifest.image_size == 4);
  CHECK(ds.indices(Split::train).size() == 1);
  CHECK(ds.manifest.records[1].label == 1);
  CHECK(ds.patch(1)[0] == -1.0f);

  io::write_file_atomic(dir.str("labels.csv"), "id,label\na,0\nb,1\n");
  CHECK_THROWS(import_patch_directory(dir.str()));
  io::write_file_atomic(dir.str("labels.csv"), "name,label\na,0\nb,1\nc,1\n");
  CHECK_THROWS(import_patch_directory(dir.str()));
}
