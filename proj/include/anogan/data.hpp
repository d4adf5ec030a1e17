#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "anogan/tensor.hpp"

namespace anogan {

// Synthetic stand-in for flattened retina scans: horizontal intensity bands
// displaced by per-column sinusoids plus smoothed noise. Patches are cut
// from wide scans; anomalous test patches get one injected lesion.
struct SyntheticCorpusConfig {
  int image_size = 32;
  int n_train_patches = 10000;
  int n_test_normal = 512;
  int n_test_anomalous = 512;

  // Scan geometry relative to the patch size.
  double scan_height_factor = 1.5;
  int scan_width_factor = 8;
  int patches_per_scan = 16;

  int bands_min = 4;
  int bands_max = 7;
  double band_edge_width = 1.5;  // pixels, tanh transition
  double displacement_amplitude = 0.12;  // fraction of the scan height
  double displacement_period_min = 0.75;  // fraction of the scan width
  double displacement_period_max = 2.0;
  double noise_amplitude = 0.05;
  int noise_smoothing = 1;  // box blur radius

  int lesion_size_min = 5;
  int lesion_size_max = 12;
  double lesion_delta_min = 0.6;
  double lesion_delta_max = 1.2;

  std::uint64_t seed = 0;

  static SyntheticCorpusConfig desk() { return SyntheticCorpusConfig{}; }
  static SyntheticCorpusConfig paper();

  void validate() const;
  std::string to_text() const;
  static SyntheticCorpusConfig from_text(const std::string& text, const SyntheticCorpusConfig& base);
  static SyntheticCorpusConfig from_text(const std::string& text) { return from_text(text, SyntheticCorpusConfig{}); }
};

// Affine map of [min,max] onto [-1,1]. Throws for a constant or empty image.
std::vector<float> normalize(std::span<const float> raw);

struct PatchCorner {
  std::size_t row = 0;
  std::size_t col = 0;
};

// k patches from uniformly drawn top-left corners of a row-major
// height x width image. Throws if the image is smaller than the patch.
std::vector<std::vector<float>> extract_patches(std::span<const float> image, std::size_t height,
                                                std::size_t width, std::size_t k,
                                                std::size_t patch_size, std::mt19937_64& rng,
                                                std::vector<PatchCorner>* corners = nullptr);

// 1 iff any mask pixel is set.
int label_from_mask(std::span<const std::uint8_t> mask);

enum class Split { train, test };
std::string to_string(Split s);
Split parse_split(const std::string& s);

enum class LesionShape { square, ellipse };
std::string to_string(LesionShape s);
LesionShape parse_lesion_shape(const std::string& s);

struct LesionSpec {
  LesionShape shape = LesionShape::square;
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
  double delta = 0.0;  // signed intensity change before clamping
};

// Whether pixel (row, col) lies inside the lesion footprint.
bool lesion_covers(const LesionSpec& lesion, int row, int col);
std::size_t lesion_pixel_count(const LesionSpec& lesion);

// Adds the lesion to a size x size patch in place (clamped to [-1,1]) and
// returns its mask.
std::vector<std::uint8_t> inject_lesion(std::vector<float>& patch, std::size_t size,
                                        const LesionSpec& lesion);

struct PatchRecord {
  std::string id;
  Split split = Split::train;
  int label = 0;
  std::uint64_t offset = 0;  // byte offset into the patch file
  std::optional<std::uint64_t> mask_offset;  // byte offset into the mask file
  std::optional<LesionSpec> lesion;
};

struct DatasetManifest {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  int image_size = 0;
  std::string config_text;
  std::string config_hash;
  double test_anomalous_ratio = 0.0;
  std::vector<PatchRecord> records;

  std::string to_json() const;
  static DatasetManifest from_json(const std::string& text);
};

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kPatchFile = "patches.f32";
inline constexpr const char* kMaskFile = "masks.u8";

// Manifest plus the in-memory patch store.
struct Dataset {
  DatasetManifest manifest;
  std::vector<float> patches;  // little-endian float32 on disk
  std::vector<std::uint8_t> masks;

  std::size_t patch_pixels() const;
  std::span<const float> patch(std::size_t record) const;
  // Empty when the record has no mask.
  std::span<const std::uint8_t> mask(std::size_t record) const;

  std::vector<std::size_t> indices(Split split) const;
  // [n,1,s,s] stacked in the order given.
  Tensor images(std::span<const std::size_t> records) const;

  // Throws std::runtime_error describing the first violated invariant.
  void check_consistency() const;
};

Dataset generate_corpus(const SyntheticCorpusConfig& config);

// Writes manifest.json, patches.f32 and masks.u8 into `dir` (created if
// missing) through temporary files.
void write_dataset(const Dataset& dataset, const std::string& dir);
Dataset read_dataset(const std::string& dir);

// A directory holding patches.f32 (raw float32, values in [-1,1]) and
// labels.csv with header "id,label[,split]". Missing split means test.
Dataset import_patch_directory(const std::string& dir);

}  // namespace anogan
