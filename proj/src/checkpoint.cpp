#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "anogan/config_text.hpp"
#include "anogan/file_io.hpp"
#include "anogan/gan.hpp"

namespace anogan {

namespace {

constexpr char kMagic[8] = {'A', 'N', 'O', 'G', 'A', 'N', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_string(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    const auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    const auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }

  std::string string() {
    const std::uint32_t n = u32();
    return std::string(take(n));
  }

  std::string_view take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw std::runtime_error("checkpoint: truncated data");
    const auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const GanModel& model) {
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  put_string(out, model.config().to_text());
  put_u32(out, static_cast<std::uint32_t>(model.feature_layer()));
  const auto state = model.state();
  put_u32(out, static_cast<std::uint32_t>(state.size()));
  for (const auto& [name, tensor] : state) {
    put_string(out, name);
    put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) put_u64(out, d);
    for (float v : tensor.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  put_u64(out, text::fnv1a64(out.data(), out.size()));
  return out;
}

GanModel parse_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 8) throw std::runtime_error("checkpoint: truncated file");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("checkpoint: bad magic, not a checkpoint file");
  }
  const std::string_view body(bytes.data(), bytes.size() - 8);
  Reader tail(std::string_view(bytes).substr(bytes.size() - 8));
  if (tail.u64() != text::fnv1a64(body.data(), body.size())) {
    throw std::runtime_error("checkpoint: checksum mismatch (truncated or corrupt file)");
  }

  Reader in(body);
  in.take(sizeof kMagic);
  const std::uint32_t version = in.u32();
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  }
  const GanConfig config = GanConfig::from_text(in.string());
  GanModel model = build_model(config);
  model.set_feature_layer(in.u32());

  auto state = model.state();
  const std::uint32_t count = in.u32();
  if (count != state.size()) {
    throw std::runtime_error("checkpoint: expected " + std::to_string(state.size()) +
                             " tensors, file has " + std::to_string(count));
  }
  for (auto& [name, tensor] : state) {
    const std::string stored = in.string();
    if (stored != name) {
      throw std::runtime_error("checkpoint: expected tensor '" + name + "', found '" + stored + "'");
    }
    const std::uint32_t rank = in.u32();
    Shape shape(rank);
    for (auto& d : shape) d = in.u64();
    if (shape != tensor.shape()) {
      throw std::runtime_error("checkpoint: tensor '" + name + "' has shape " +
                               shape_string(shape) + ", model expects " +
                               shape_string(tensor.shape()));
    }
    for (float& v : tensor.data()) v = std::bit_cast<float>(in.u32());
  }
  if (!in.done()) throw std::runtime_error("checkpoint: trailing bytes after tensor data");
  return model;
}

void save_checkpoint(const GanModel& model, const std::string& path) {
  io::write_file_atomic(path, serialize_checkpoint(model));
}

GanModel load_checkpoint(const std::string& path) {
  return parse_checkpoint(io::read_file(path));
}

}  // namespace anogan
