#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"

#include "anogan/config_text.hpp"
#include "anogan/data.hpp"
#include "anogan/file_io.hpp"

namespace anogan {

static_assert(std::endian::native == std::endian::little,
              "the patch store is read and written as raw little-endian floats");

namespace {

using nlohmann::json;

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw std::invalid_argument("unknown split '" + s + "'");
}

std::string to_string(LesionShape s) { return s == LesionShape::square ? "square" : "ellipse"; }

LesionShape parse_lesion_shape(const std::string& s) {
  if (s == "square") return LesionShape::square;
  if (s == "ellipse") return LesionShape::ellipse;
  throw std::invalid_argument("unknown lesion shape '" + s + "'");
}

std::string DatasetManifest::to_json() const {
  json records_json = json::array();
  for (const auto& r : records) {
    json j{{"id", r.id},
           {"split", to_string(r.split)},
           {"label", r.label},
           {"offset", r.offset},
           {"mask_offset", r.mask_offset ? json(*r.mask_offset) : json(nullptr)}};
    if (r.lesion) {
      j["lesion"] = json{{"shape", to_string(r.lesion->shape)}, {"top", r.lesion->top},
                         {"left", r.lesion->left},          {"height", r.lesion->height},
                         {"width", r.lesion->width},        {"delta", r.lesion->delta}};
    }
    records_json.push_back(std::move(j));
  }
  json root{{"format_version", format_version},
            {"image_size", image_size},
            {"config", config_text},
            {"config_hash", config_hash},
            {"test_anomalous_ratio", test_anomalous_ratio},
            {"patch_file", kPatchFile},
            {"mask_file", kMaskFile},
            {"records", std::move(records_json)}};
  return root.dump(1) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const json root = json::parse(text);
    m.format_version = root.at("format_version").get<int>();
    if (m.format_version != kFormatVersion) {
      throw std::runtime_error("unsupported manifest version " + std::to_string(m.format_version));
    }
    m.image_size = root.at("image_size").get<int>();
    m.config_text = root.at("config").get<std::string>();
    m.config_hash = root.at("config_hash").get<std::string>();
    m.test_anomalous_ratio = root.at("test_anomalous_ratio").get<double>();
    for (const auto& j : root.at("records")) {
      PatchRecord r;
      r.id = j.at("id").get<std::string>();
      r.split = parse_split(j.at("split").get<std::string>());
      r.label = j.at("label").get<int>();
      r.offset = j.at("offset").get<std::uint64_t>();
      if (!j.at("mask_offset").is_null()) r.mask_offset = j.at("mask_offset").get<std::uint64_t>();
      if (j.contains("lesion")) {
        const auto& l = j.at("lesion");
        r.lesion = LesionSpec{parse_lesion_shape(l.at("shape").get<std::string>()),
                              l.at("top").get<int>(),   l.at("left").get<int>(),
                              l.at("height").get<int>(), l.at("width").get<int>(),
                              l.at("delta").get<double>()};
      }
      m.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("manifest: ") + e.what());
  }
  return m;
}

std::size_t Dataset::patch_pixels() const {
  const auto s = static_cast<std::size_t>(manifest.image_size);
  return s * s;
}

std::span<const float> Dataset::patch(std::size_t record) const {
  const auto& r = manifest.records.at(record);
  return {patches.data() + r.offset / sizeof(float), patch_pixels()};
}

std::span<const std::uint8_t> Dataset::mask(std::size_t record) const {
  const auto& r = manifest.records.at(record);
  if (!r.mask_offset) return {};
  return {masks.data() + *r.mask_offset, patch_pixels()};
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    if (manifest.records[i].split == split) out.push_back(i);
  }
  return out;
}

Tensor Dataset::images(std::span<const std::size_t> records) const {
  const auto s = static_cast<std::size_t>(manifest.image_size);
  Tensor t({records.size(), 1, s, s});
  float* dst = t.ptr();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto p = patch(records[i]);
    std::copy(p.begin(), p.end(), dst + i * p.size());
  }
  return t;
}

void Dataset::check_consistency() const {
  auto fail = [](const std::string& msg) { throw std::runtime_error("dataset: " + msg); };
  if (manifest.image_size < 1) fail("image_size must be positive");
  const std::size_t pix = patch_pixels();
  std::unordered_set<std::string> ids;
  for (const auto& r : manifest.records) {
    if (!ids.insert(r.id).second) fail("duplicate patch id '" + r.id + "'");
    if (r.label != 0 && r.label != 1) fail("record '" + r.id + "' has a non-binary label");
    if (r.split == Split::train && r.label != 0) fail("train record '" + r.id + "' is labeled anomalous");
    if (r.offset % sizeof(float) != 0 || r.offset / sizeof(float) + pix > patches.size()) {
      fail("record '" + r.id + "' points outside the patch file");
    }
    if (r.mask_offset) {
      if (*r.mask_offset + pix > masks.size()) fail("record '" + r.id + "' points outside the mask file");
      const std::span<const std::uint8_t> m(masks.data() + *r.mask_offset, pix);
      if (label_from_mask(m) != r.label) fail("record '" + r.id + "' label disagrees with its mask");
    }
  }
  for (float v : patches) {
    if (!(v >= -1.0f && v <= 1.0f)) fail("patch value outside [-1,1]");
  }
}

void write_dataset(const Dataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path root(dir);
  io::write_file_atomic((root / kPatchFile).string(),
                        std::string_view(reinterpret_cast<const char*>(ds.patches.data()),
                                         ds.patches.size() * sizeof(float)));
  io::write_file_atomic((root / kMaskFile).string(),
                        std::string_view(reinterpret_cast<const char*>(ds.masks.data()),
                                         ds.masks.size()));
  io::write_file_atomic((root / kManifestFile).string(), ds.manifest.to_json());
}

Dataset read_dataset(const std::string& dir) {
  const std::filesystem::path root(dir);
  Dataset ds;
  ds.manifest = DatasetManifest::from_json(io::read_file((root / kManifestFile).string()));
  const auto& m = ds.manifest;
  if (m.config_hash != text::hex64(text::fnv1a64(m.config_text.data(), m.config_text.size()))) {
    throw std::runtime_error("dataset: manifest config hash does not match its config");
  }
  const std::string raw = io::read_file((root / kPatchFile).string());
  if (raw.size() % sizeof(float) != 0) throw std::runtime_error("dataset: truncated patch file");
  ds.patches.resize(raw.size() / sizeof(float));
  std::memcpy(ds.patches.data(), raw.data(), raw.size());
  const auto mask_path = root / kMaskFile;
  if (std::filesystem::exists(mask_path)) {
    const std::string mb = io::read_file(mask_path.string());
    ds.masks.assign(mb.begin(), mb.end());
  }
  if (ds.patches.size() != m.records.size() * ds.patch_pixels()) {
    throw std::runtime_error("dataset: patch file holds " + std::to_string(ds.patches.size()) +
                             " floats, manifest needs " +
                             std::to_string(m.records.size() * ds.patch_pixels()));
  }
  ds.check_consistency();
  return ds;
}

Dataset import_patch_directory(const std::string& dir) {
  const std::filesystem::path root(dir);
  std::istringstream labels(io::read_file((root / "labels.csv").string()));
  std::string line;
  if (!std::getline(labels, line)) throw std::runtime_error("import: labels.csv is empty");
  const auto header = split_csv(trim(line));
  const bool has_split = header.size() == 3 && header[2] == "split";
  if (header.size() < 2 || header[0] != "id" || header[1] != "label" ||
      (header.size() == 3 && !has_split) || header.size() > 3) {
    throw std::runtime_error("import: labels.csv header must be id,label[,split]");
  }
  struct Row {
    std::string id;
    int label;
    Split split;
  };
  std::vector<Row> rows;
  while (std::getline(labels, line)) {
    line = trim(line);
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw std::runtime_error("import: malformed row '" + line + "'");
    if (f[1] != "0" && f[1] != "1") throw std::runtime_error("import: label must be 0 or 1 in '" + line + "'");
    rows.push_back({f[0], f[1] == "1" ? 1 : 0, has_split ? parse_split(f[2]) : Split::test});
  }
  if (rows.empty()) throw std::runtime_error("import: labels.csv has no rows");

  const std::string raw = io::read_file((root / kPatchFile).string());
  const std::size_t floats = raw.size() / sizeof(float);
  const std::size_t pix = floats / rows.size();
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(pix))));
  if (raw.size() % sizeof(float) != 0 || floats % rows.size() != 0 || side * side != pix || pix == 0) {
    throw std::runtime_error("import: patches.f32 does not hold " + std::to_string(rows.size()) +
                             " square float32 patches");
  }

  Dataset ds;
  ds.patches.resize(floats);
  std::memcpy(ds.patches.data(), raw.data(), raw.size());
  auto& m = ds.manifest;
  m.image_size = static_cast<int>(side);
  m.config_text = "source=" + root.filename().string() + "\npatch_checksum=" +
                  text::hex64(text::fnv1a64(raw.data(), raw.size())) + "\n";
  m.config_hash = text::hex64(text::fnv1a64(m.config_text.data(), m.config_text.size()));
  std::size_t test = 0, test_pos = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    PatchRecord r;
    r.id = rows[i].id;
    r.label = rows[i].label;
    r.split = rows[i].split;
    r.offset = i * pix * sizeof(float);
    if (r.split == Split::test) {
      ++test;
      test_pos += static_cast<std::size_t>(r.label);
    }
    m.records.push_back(std::move(r));
  }
  m.test_anomalous_ratio = test == 0 ? 0.0 : static_cast<double>(test_pos) / static_cast<double>(test);
  ds.check_consistency();
  return ds;
}

}  // namespace anogan
