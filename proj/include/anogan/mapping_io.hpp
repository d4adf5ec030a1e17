#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "anogan/mapping.hpp"

namespace anogan {

struct MappingRecord {
  std::string query_id;
  std::optional<int> label;
  MappingResult result;
};

// A directory of mapping results: mapping.json holds the scalars and latent
// points, the images and loss trajectories live in raw little-endian files
// referenced by offset.
struct MappingRun {
  DiscriminationLoss variant = DiscriminationLoss::feature_matching;
  double lambda = 0.1;
  int iterations = 0;
  std::size_t image_size = 0;
  std::vector<MappingRecord> records;
};

inline constexpr const char* kMappingFile = "mapping.json";
inline constexpr const char* kGeneratedFile = "generated.f32";
inline constexpr const char* kResidualFile = "residual.f32";
inline constexpr const char* kTrajectoryFile = "trajectories.f64";

void write_mapping_run(const MappingRun& run, const std::string& dir);
MappingRun read_mapping_run(const std::string& dir);

}  // namespace anogan
