#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

// Canonical "key=value" text used for every configuration block: one pair
// per line, keys in a fixed order, '#' comments and blank lines ignored on
// input. Numbers are printed with enough digits to round-trip exactly.
namespace anogan::text {

class KeyValues {
 public:
  // Throws std::invalid_argument on malformed lines or duplicate keys.
  static KeyValues parse(const std::string& text);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  void set(const std::string& key, std::string value);

  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;

  // Pairs whose key starts with `prefix`, with the prefix stripped.
  KeyValues with_prefix(const std::string& prefix) const;
  // Throws if any key is not in `known`.
  void require_known(const std::vector<std::string>& known, const std::string& context) const;

  const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }
  std::string to_text() const;

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

std::string format_double(double v);
std::string format_int_list(const std::vector<int>& values);

// FNV-1a, 64 bit. Used for config hashes and checkpoint checksums.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 14695981039346656037ULL);
std::string hex64(std::uint64_t v);

}  // namespace anogan::text
