#include "anogan/config_text.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace anogan::text {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* kind) {
  throw std::invalid_argument("config: key '" + key + "' expects " + kind + ", got '" + value +
                              "'");
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not key=value: '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    if (kv.has(key)) {
      throw std::invalid_argument("config: duplicate key '" + key + "'");
    }
    kv.items_.emplace_back(key, trim(t.substr(eq + 1)));
  }
  return kv;
}

bool KeyValues::has(const std::string& key) const {
  return std::any_of(items_.begin(), items_.end(), [&](const auto& p) { return p.first == key; });
}

const std::string& KeyValues::get(const std::string& key) const {
  for (const auto& [k, v] : items_) {
    if (k == key) return v;
  }
  throw std::invalid_argument("config: missing key '" + key + "'");
}

void KeyValues::set(const std::string& key, std::string value) {
  for (auto& [k, v] : items_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  items_.emplace_back(key, std::move(value));
}

int KeyValues::get_int(const std::string& key) const {
  const std::string& v = get(key);
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t KeyValues::get_u64(const std::string& key) const {
  const std::string& v = get(key);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an unsigned integer");
  return out;
}

double KeyValues::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v, "a number");
    return out;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a number");
  }
}

bool KeyValues::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true/false");
}

std::vector<int> KeyValues::get_int_list(const std::string& key) const {
  const std::string& v = get(key);
  std::vector<int> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    int x = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), x);
    if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
      bad_value(key, v, "a comma-separated integer list");
    }
    out.push_back(x);
  }
  return out;
}

KeyValues KeyValues::with_prefix(const std::string& prefix) const {
  KeyValues out;
  for (const auto& [k, v] : items_) {
    if (k.rfind(prefix, 0) == 0) out.items_.emplace_back(k.substr(prefix.size()), v);
  }
  return out;
}

void KeyValues::require_known(const std::vector<std::string>& known,
                              const std::string& context) const {
  for (const auto& [k, v] : items_) {
    if (std::find(known.begin(), known.end(), k) == known.end()) {
      throw std::invalid_argument(context + ": unknown key '" + k + "'");
    }
  }
}

std::string KeyValues::to_text() const {
  std::string out;
  for (const auto& [k, v] : items_) out += k + "=" + v + "\n";
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_int_list(const std::vector<int>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace anogan::text
