#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "anogan/config_text.hpp"
#include "anogan/data.hpp"

namespace anogan {

namespace {

const std::vector<std::string> kCorpusKeys{
    "image_size",          "n_train_patches",        "n_test_normal",
    "n_test_anomalous",    "scan_height_factor",     "scan_width_factor",
    "patches_per_scan",    "bands_min",              "bands_max",
    "band_edge_width",     "displacement_amplitude", "displacement_period_min",
    "displacement_period_max", "noise_amplitude",    "noise_smoothing",
    "lesion_size_min",     "lesion_size_max",        "lesion_delta_min",
    "lesion_delta_max",    "seed"};

struct Scan {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

struct Sinusoid {
  double amplitude = 0.0;
  double period = 1.0;
  double phase = 0.0;
  double at(double x) const {
    return amplitude * std::sin(2.0 * std::numbers::pi * x / period + phase);
  }
};

Sinusoid draw_sinusoid(std::mt19937_64& rng, double amplitude, const SyntheticCorpusConfig& c,
                       double width) {
  return Sinusoid{amplitude,
                  width * uniform(rng, c.displacement_period_min, c.displacement_period_max),
                  uniform(rng, 0.0, 2.0 * std::numbers::pi)};
}

std::vector<float> box_blur(const std::vector<float>& src, std::size_t h, std::size_t w, int r) {
  if (r <= 0) return src;
  std::vector<float> tmp(src.size()), out(src.size());
  const auto ih = static_cast<int>(h), iw = static_cast<int>(w);
  for (int y = 0; y < ih; ++y) {
    for (int x = 0; x < iw; ++x) {
      double acc = 0.0;
      int n = 0;
      for (int dx = -r; dx <= r; ++dx) {
        const int xx = x + dx;
        if (xx < 0 || xx >= iw) continue;
        acc += src[static_cast<std::size_t>(y * iw + xx)];
        ++n;
      }
      tmp[static_cast<std::size_t>(y * iw + x)] = static_cast<float>(acc / n);
    }
  }
  for (int y = 0; y < ih; ++y) {
    for (int x = 0; x < iw; ++x) {
      double acc = 0.0;
      int n = 0;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= ih) continue;
        acc += tmp[static_cast<std::size_t>(yy * iw + x)];
        ++n;
      }
      out[static_cast<std::size_t>(y * iw + x)] = static_cast<float>(acc / n);
    }
  }
  return out;
}

// One normalized scan of layered bands.
Scan make_scan(const SyntheticCorpusConfig& c, std::mt19937_64& rng) {
  Scan scan;
  scan.height = static_cast<std::size_t>(std::lround(c.scan_height_factor * c.image_size));
  scan.width = static_cast<std::size_t>(c.scan_width_factor) * static_cast<std::size_t>(c.image_size);
  const double h = static_cast<double>(scan.height);
  const double w = static_cast<double>(scan.width);

  const int bands = uniform_int(rng, c.bands_min, c.bands_max);
  std::vector<double> thickness(static_cast<std::size_t>(bands));
  double total = 0.0;
  for (auto& t : thickness) total += (t = uniform(rng, 0.5, 1.5));
  std::vector<double> boundaries;
  double acc = 0.0;
  for (int b = 0; b + 1 < bands; ++b) {
    acc += thickness[static_cast<std::size_t>(b)] / total * h;
    boundaries.push_back(acc);
  }
  std::vector<double> levels{uniform(rng, 0.0, 1.0)};
  while (levels.size() < static_cast<std::size_t>(bands)) {
    double next = uniform(rng, 0.0, 1.0);
    for (int tries = 0; tries < 16 && std::abs(next - levels.back()) < 0.2; ++tries) {
      next = uniform(rng, 0.0, 1.0);
    }
    levels.push_back(next);
  }

  const double amp = c.displacement_amplitude * h;
  const Sinusoid shared = draw_sinusoid(rng, amp, c, w);
  const Sinusoid shared2 = draw_sinusoid(rng, 0.4 * amp, c, w / 2.0);
  std::vector<Sinusoid> own;
  for (std::size_t b = 0; b < boundaries.size(); ++b) own.push_back(draw_sinusoid(rng, 0.3 * amp, c, w));

  std::normal_distribution<float> gauss(0.0f, 1.0f);
  std::vector<float> noise(scan.height * scan.width);
  for (float& v : noise) v = gauss(rng);
  noise = box_blur(noise, scan.height, scan.width, c.noise_smoothing);
  const double noise_gain = c.noise_amplitude * (2 * c.noise_smoothing + 1);

  std::vector<float> raw(scan.height * scan.width);
  for (std::size_t x = 0; x < scan.width; ++x) {
    const double xd = static_cast<double>(x);
    const double common = shared.at(xd) + shared2.at(xd);
    for (std::size_t y = 0; y < scan.height; ++y) {
      double v = levels[0];
      for (std::size_t b = 0; b < boundaries.size(); ++b) {
        const double pos = boundaries[b] + common + own[b].at(xd);
        const double step = 0.5 * (1.0 + std::tanh((static_cast<double>(y) + 0.5 - pos) / c.band_edge_width));
        v += (levels[b + 1] - levels[b]) * step;
      }
      raw[y * scan.width + x] = static_cast<float>(v + noise_gain * noise[y * scan.width + x]);
    }
  }
  scan.pixels = normalize(raw);
  return scan;
}

std::vector<std::vector<float>> normal_patches(const SyntheticCorpusConfig& c, std::size_t count,
                                               std::mt19937_64& rng) {
  std::vector<std::vector<float>> out;
  out.reserve(count);
  const auto size = static_cast<std::size_t>(c.image_size);
  while (out.size() < count) {
    const Scan scan = make_scan(c, rng);
    const std::size_t k =
        std::min(static_cast<std::size_t>(c.patches_per_scan), count - out.size());
    for (auto& p : extract_patches(scan.pixels, scan.height, scan.width, k, size, rng)) {
      out.push_back(std::move(p));
    }
  }
  return out;
}

LesionSpec draw_lesion(const SyntheticCorpusConfig& c, const std::vector<float>& patch,
                       std::mt19937_64& rng) {
  LesionSpec l;
  l.shape = uniform_int(rng, 0, 1) == 0 ? LesionShape::square : LesionShape::ellipse;
  l.height = uniform_int(rng, c.lesion_size_min, c.lesion_size_max);
  l.width = uniform_int(rng, c.lesion_size_min, c.lesion_size_max);
  l.top = uniform_int(rng, 0, c.image_size - l.height);
  l.left = uniform_int(rng, 0, c.image_size - l.width);
  const double magnitude = uniform(rng, c.lesion_delta_min, c.lesion_delta_max);
  // Push away from the local intensity so clamping cannot swallow the lesion.
  double mean = 0.0;
  std::size_t n = 0;
  for (int r = l.top; r < l.top + l.height; ++r) {
    for (int col = l.left; col < l.left + l.width; ++col) {
      if (!lesion_covers(l, r, col)) continue;
      mean += patch[static_cast<std::size_t>(r * c.image_size + col)];
      ++n;
    }
  }
  mean /= static_cast<double>(std::max<std::size_t>(n, 1));
  l.delta = mean > 0.0 ? -magnitude : magnitude;
  return l;
}

void append_patch(Dataset& ds, std::string id, Split split, const std::vector<float>& pixels,
                  const std::vector<std::uint8_t>* mask, std::optional<LesionSpec> lesion) {
  PatchRecord r;
  r.id = std::move(id);
  r.split = split;
  r.offset = ds.patches.size() * sizeof(float);
  ds.patches.insert(ds.patches.end(), pixels.begin(), pixels.end());
  if (mask) {
    r.mask_offset = ds.masks.size();
    ds.masks.insert(ds.masks.end(), mask->begin(), mask->end());
    r.label = label_from_mask(*mask);
  }
  r.lesion = lesion;
  ds.manifest.records.push_back(std::move(r));
}

std::string numbered(const char* prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return prefix + digits;
}

}  // namespace

SyntheticCorpusConfig SyntheticCorpusConfig::paper() {
  SyntheticCorpusConfig c;
  c.image_size = 64;
  c.n_train_patches = 1000000;
  c.n_test_normal = 4096;
  c.n_test_anomalous = 4096;
  c.lesion_size_min = 10;
  c.lesion_size_max = 24;
  c.noise_smoothing = 2;
  return c;
}

void SyntheticCorpusConfig::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("SyntheticCorpusConfig: " + msg);
  };
  if (image_size < 8) fail("image_size must be at least 8");
  if (n_train_patches < 0 || n_test_normal < 0 || n_test_anomalous < 0) {
    fail("patch counts must be non-negative");
  }
  if (!(scan_height_factor >= 1.0) || scan_width_factor < 1) {
    fail("scans must be at least as large as a patch");
  }
  if (patches_per_scan < 1) fail("patches_per_scan must be positive");
  if (bands_min < 2 || bands_max < bands_min) fail("need 2 <= bands_min <= bands_max");
  if (!(band_edge_width > 0.0)) fail("band_edge_width must be positive");
  if (!(displacement_amplitude >= 0.0)) fail("displacement_amplitude must be non-negative");
  if (!(displacement_period_min > 0.0) || displacement_period_max < displacement_period_min) {
    fail("need 0 < displacement_period_min <= displacement_period_max");
  }
  if (!(noise_amplitude >= 0.0) || noise_smoothing < 0) fail("noise settings must be non-negative");
  if (lesion_size_min < 1 || lesion_size_max < lesion_size_min) {
    fail("need 1 <= lesion_size_min <= lesion_size_max");
  }
  if (lesion_size_max >= image_size) fail("lesion_size_max must be smaller than image_size");
  if (!(lesion_delta_min > 0.0) || lesion_delta_max < lesion_delta_min) {
    fail("need 0 < lesion_delta_min <= lesion_delta_max");
  }
}

std::string SyntheticCorpusConfig::to_text() const {
  text::KeyValues kv;
  kv.set("image_size", std::to_string(image_size));
  kv.set("n_train_patches", std::to_string(n_train_patches));
  kv.set("n_test_normal", std::to_string(n_test_normal));
  kv.set("n_test_anomalous", std::to_string(n_test_anomalous));
  kv.set("scan_height_factor", text::format_double(scan_height_factor));
  kv.set("scan_width_factor", std::to_string(scan_width_factor));
  kv.set("patches_per_scan", std::to_string(patches_per_scan));
  kv.set("bands_min", std::to_string(bands_min));
  kv.set("bands_max", std::to_string(bands_max));
  kv.set("band_edge_width", text::format_double(band_edge_width));
  kv.set("displacement_amplitude", text::format_double(displacement_amplitude));
  kv.set("displacement_period_min", text::format_double(displacement_period_min));
  kv.set("displacement_period_max", text::format_double(displacement_period_max));
  kv.set("noise_amplitude", text::format_double(noise_amplitude));
  kv.set("noise_smoothing", std::to_string(noise_smoothing));
  kv.set("lesion_size_min", std::to_string(lesion_size_min));
  kv.set("lesion_size_max", std::to_string(lesion_size_max));
  kv.set("lesion_delta_min", text::format_double(lesion_delta_min));
  kv.set("lesion_delta_max", text::format_double(lesion_delta_max));
  kv.set("seed", std::to_string(seed));
  return kv.to_text();
}

SyntheticCorpusConfig SyntheticCorpusConfig::from_text(const std::string& body,
                                                       const SyntheticCorpusConfig& base) {
  const auto kv = text::KeyValues::parse(body);
  kv.require_known(kCorpusKeys, "SyntheticCorpusConfig");
  SyntheticCorpusConfig c = base;
  auto get_int = [&](const char* key, int& field) {
    if (kv.has(key)) field = kv.get_int(key);
  };
  auto get_double = [&](const char* key, double& field) {
    if (kv.has(key)) field = kv.get_double(key);
  };
  get_int("image_size", c.image_size);
  get_int("n_train_patches", c.n_train_patches);
  get_int("n_test_normal", c.n_test_normal);
  get_int("n_test_anomalous", c.n_test_anomalous);
  get_double("scan_height_factor", c.scan_height_factor);
  get_int("scan_width_factor", c.scan_width_factor);
  get_int("patches_per_scan", c.patches_per_scan);
  get_int("bands_min", c.bands_min);
  get_int("bands_max", c.bands_max);
  get_double("band_edge_width", c.band_edge_width);
  get_double("displacement_amplitude", c.displacement_amplitude);
  get_double("displacement_period_min", c.displacement_period_min);
  get_double("displacement_period_max", c.displacement_period_max);
  get_double("noise_amplitude", c.noise_amplitude);
  get_int("noise_smoothing", c.noise_smoothing);
  get_int("lesion_size_min", c.lesion_size_min);
  get_int("lesion_size_max", c.lesion_size_max);
  get_double("lesion_delta_min", c.lesion_delta_min);
  get_double("lesion_delta_max", c.lesion_delta_max);
  if (kv.has("seed")) c.seed = kv.get_u64("seed");
  return c;
}

std::vector<float> normalize(std::span<const float> raw) {
  if (raw.empty()) throw std::invalid_argument("normalize: empty image");
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) throw std::invalid_argument("normalize: constant image has no scale");
  std::vector<float> out(raw.size());
  const double span = hi - lo;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double v = 2.0 * (static_cast<double>(raw[i]) - lo) / span - 1.0;
    out[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return out;
}

std::vector<std::vector<float>> extract_patches(std::span<const float> image, std::size_t height,
                                                std::size_t width, std::size_t k,
                                                std::size_t patch_size, std::mt19937_64& rng,
                                                std::vector<PatchCorner>* corners) {
  if (image.size() != height * width) {
    throw std::invalid_argument("extract_patches: image has " + std::to_string(image.size()) +
                                " pixels, expected " + std::to_string(height * width));
  }
  if (patch_size == 0 || height < patch_size || width < patch_size) {
    throw std::invalid_argument("extract_patches: image " + std::to_string(height) + "x" +
                                std::to_string(width) + " is smaller than patch size " +
                                std::to_string(patch_size));
  }
  std::uniform_int_distribution<std::size_t> rows(0, height - patch_size);
  std::uniform_int_distribution<std::size_t> cols(0, width - patch_size);
  std::vector<std::vector<float>> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t r0 = rows(rng);
    const std::size_t c0 = cols(rng);
    if (corners) corners->push_back({r0, c0});
    std::vector<float> p(patch_size * patch_size);
    for (std::size_t r = 0; r < patch_size; ++r) {
      std::copy_n(image.begin() + static_cast<std::ptrdiff_t>((r0 + r) * width + c0), patch_size,
                  p.begin() + static_cast<std::ptrdiff_t>(r * patch_size));
    }
    out.push_back(std::move(p));
  }
  return out;
}

int label_from_mask(std::span<const std::uint8_t> mask) {
  return std::any_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }) ? 1 : 0;
}

bool lesion_covers(const LesionSpec& l, int row, int col) {
  if (row < l.top || row >= l.top + l.height || col < l.left || col >= l.left + l.width) {
    return false;
  }
  if (l.shape == LesionShape::square) return true;
  const double ry = l.height / 2.0, rx = l.width / 2.0;
  const double dy = (row + 0.5 - (l.top + ry)) / ry;
  const double dx = (col + 0.5 - (l.left + rx)) / rx;
  return dy * dy + dx * dx <= 1.0;
}

std::size_t lesion_pixel_count(const LesionSpec& l) {
  std::size_t n = 0;
  for (int r = l.top; r < l.top + l.height; ++r) {
    for (int c = l.left; c < l.left + l.width; ++c) n += lesion_covers(l, r, c) ? 1 : 0;
  }
  return n;
}

std::vector<std::uint8_t> inject_lesion(std::vector<float>& patch, std::size_t size,
                                        const LesionSpec& l) {
  if (patch.size() != size * size) throw std::invalid_argument("inject_lesion: patch size mismatch");
  if (l.top < 0 || l.left < 0 || l.height < 1 || l.width < 1 ||
      static_cast<std::size_t>(l.top + l.height) > size ||
      static_cast<std::size_t>(l.left + l.width) > size) {
    throw std::invalid_argument("inject_lesion: lesion does not fit inside the patch");
  }
  std::vector<std::uint8_t> mask(size * size, 0);
  const int s = static_cast<int>(size);
  for (int r = l.top; r < l.top + l.height; ++r) {
    for (int c = l.left; c < l.left + l.width; ++c) {
      if (!lesion_covers(l, r, c)) continue;
      const auto i = static_cast<std::size_t>(r * s + c);
      patch[i] = static_cast<float>(std::clamp(patch[i] + l.delta, -1.0, 1.0));
      mask[i] = 1;
    }
  }
  return mask;
}

Dataset generate_corpus(const SyntheticCorpusConfig& config) {
  config.validate();
  Dataset ds;
  auto& m = ds.manifest;
  m.image_size = config.image_size;
  m.config_text = config.to_text();
  m.config_hash = text::hex64(text::fnv1a64(m.config_text.data(), m.config_text.size()));
  const int n_test = config.n_test_normal + config.n_test_anomalous;
  m.test_anomalous_ratio =
      n_test == 0 ? 0.0 : static_cast<double>(config.n_test_anomalous) / n_test;

  const auto size = static_cast<std::size_t>(config.image_size);
  // Separate streams so changing one count leaves the other splits intact.
  auto stream = [&](std::uint64_t id) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                      static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(id)};
    return std::mt19937_64(seq);
  };

  auto rng = stream(1);
  const auto train = normal_patches(config, static_cast<std::size_t>(config.n_train_patches), rng);
  for (std::size_t i = 0; i < train.size(); ++i) {
    append_patch(ds, numbered("train-", i), Split::train, train[i], nullptr, std::nullopt);
  }

  rng = stream(2);
  const auto normal = normal_patches(config, static_cast<std::size_t>(config.n_test_normal), rng);
  const std::vector<std::uint8_t> empty_mask(size * size, 0);
  for (std::size_t i = 0; i < normal.size(); ++i) {
    append_patch(ds, numbered("test-normal-", i), Split::test, normal[i], &empty_mask,
                 std::nullopt);
  }

  rng = stream(3);
  auto anomalous =
      normal_patches(config, static_cast<std::size_t>(config.n_test_anomalous), rng);
  for (std::size_t i = 0; i < anomalous.size(); ++i) {
    const LesionSpec lesion = draw_lesion(config, anomalous[i], rng);
    const auto mask = inject_lesion(anomalous[i], size, lesion);
    append_patch(ds, numbered("test-anomalous-", i), Split::test, anomalous[i], &mask, lesion);
  }
  return ds;
}

}  // namespace anogan
