#include <bit>
#include <cstring>
#include <filesystem>
#include <stdexcept>

#include "json.hpp"

#include "anogan/file_io.hpp"
#include "anogan/mapping_io.hpp"

namespace anogan {

static_assert(std::endian::native == std::endian::little,
              "mapping images are stored as raw little-endian values");

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

template <typename T>
void append_raw(std::string& out, const T* values, std::size_t n) {
  out.append(reinterpret_cast<const char*>(values), n * sizeof(T));
}

template <typename T>
std::vector<T> read_raw(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path.string());
  if (bytes.size() % sizeof(T) != 0) {
    throw std::runtime_error("mapping: truncated file " + path.string());
  }
  std::vector<T> out(bytes.size() / sizeof(T));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

}  // namespace

void write_mapping_run(const MappingRun& run, const std::string& dir) {
  const std::size_t pixels = run.image_size * run.image_size;
  std::string generated, residual, trajectories;
  json records = json::array();
  std::size_t trajectory_offset = 0;
  for (std::size_t i = 0; i < run.records.size(); ++i) {
    const auto& rec = run.records[i];
    const auto& r = rec.result;
    if (r.generated.numel() != pixels || r.residual_image.numel() != pixels) {
      throw std::invalid_argument("mapping: record '" + rec.query_id + "' has the wrong image size");
    }
    append_raw(generated, r.generated.ptr(), pixels);
    append_raw(residual, r.residual_image.ptr(), pixels);
    append_raw(trajectories, r.loss_trajectory.data(), r.loss_trajectory.size());
    records.push_back(json{{"query_id", rec.query_id},
                           {"label", rec.label ? json(*rec.label) : json(nullptr)},
                           {"residual_loss", r.residual_loss_final},
                           {"discrimination_loss", r.discrimination_loss_final},
                           {"z", r.z_final},
                           {"image_index", i},
                           {"trajectory_offset", trajectory_offset},
                           {"trajectory_length", r.loss_trajectory.size()}});
    trajectory_offset += r.loss_trajectory.size();
  }
  json root{{"format_version", kFormatVersion},
            {"variant", to_string(run.variant)},
            {"lambda", run.lambda},
            {"iterations", run.iterations},
            {"image_size", run.image_size},
            {"generated_file", kGeneratedFile},
            {"residual_file", kResidualFile},
            {"trajectory_file", kTrajectoryFile},
            {"records", std::move(records)}};

  std::filesystem::create_directories(dir);
  const std::filesystem::path root_dir(dir);
  io::write_file_atomic((root_dir / kGeneratedFile).string(), generated);
  io::write_file_atomic((root_dir / kResidualFile).string(), residual);
  io::write_file_atomic((root_dir / kTrajectoryFile).string(), trajectories);
  io::write_file_atomic((root_dir / kMappingFile).string(), root.dump(1));
}

MappingRun read_mapping_run(const std::string& dir) {
  const std::filesystem::path root_dir(dir);
  MappingRun run;
  try {
    const json root = json::parse(io::read_file((root_dir / kMappingFile).string()));
    if (root.at("format_version").get<int>() != kFormatVersion) {
      throw std::runtime_error("unsupported format version");
    }
    run.variant = parse_discrimination_loss(root.at("variant").get<std::string>());
    run.lambda = root.at("lambda").get<double>();
    run.iterations = root.at("iterations").get<int>();
    run.image_size = root.at("image_size").get<std::size_t>();
    const std::size_t pixels = run.image_size * run.image_size;
    const auto generated = read_raw<float>(root_dir / kGeneratedFile);
    const auto residual = read_raw<float>(root_dir / kResidualFile);
    const auto trajectories = read_raw<double>(root_dir / kTrajectoryFile);
    for (const auto& j : root.at("records")) {
      MappingRecord rec;
      rec.query_id = j.at("query_id").get<std::string>();
      if (!j.at("label").is_null()) rec.label = j.at("label").get<int>();
      auto& r = rec.result;
      r.variant = run.variant;
      r.lambda = run.lambda;
      r.residual_loss_final = j.at("residual_loss").get<double>();
      r.discrimination_loss_final = j.at("discrimination_loss").get<double>();
      r.z_final = j.at("z").get<std::vector<float>>();
      const auto index = j.at("image_index").get<std::size_t>();
      if ((index + 1) * pixels > generated.size() || (index + 1) * pixels > residual.size()) {
        throw std::runtime_error("record '" + rec.query_id + "' points past the image files");
      }
      const Shape shape{1, 1, run.image_size, run.image_size};
      r.generated = Tensor(shape, std::vector<float>(generated.begin() + index * pixels,
                                                     generated.begin() + (index + 1) * pixels));
      r.residual_image = Tensor(shape, std::vector<float>(residual.begin() + index * pixels,
                                                          residual.begin() + (index + 1) * pixels));
      const auto off = j.at("trajectory_offset").get<std::size_t>();
      const auto len = j.at("trajectory_length").get<std::size_t>();
      if (off + len > trajectories.size()) {
        throw std::runtime_error("record '" + rec.query_id + "' points past the trajectory file");
      }
      r.loss_trajectory.assign(trajectories.begin() + off, trajectories.begin() + off + len);
      run.records.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("mapping: malformed " + std::string(kMappingFile) + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error("mapping: " + std::string(e.what()));
  }
  return run;
}

}  // namespace anogan
