#include "dps/config.hpp"

#include <charconv>
#include <sstream>

#include "dps/codec.hpp"
#include "dps/error.hpp"

namespace dps {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw Error(Errc::config, "'" + std::string(key) + "' expects a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

double parse_real(std::string_view key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw Error(Errc::config, "'" + std::string(key) + "' expects a number, got '" + v + "'");
  }
  return out;
}

}  // namespace

std::optional<std::string> KeyValues::find(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  used_.insert(key);
  return it->second;
}

std::string KeyValues::get_string(const std::string& key) const {
  auto v = find(key);
  if (!v) throw Error(Errc::config, "missing key '" + key + "'");
  return *v;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  auto v = find(key);
  return v ? *v : fallback;
}

double KeyValues::get_real(const std::string& key) const { return parse_real(key, get_string(key)); }

double KeyValues::get_real(const std::string& key, double fallback) const {
  auto v = find(key);
  return v ? parse_real(key, *v) : fallback;
}

std::uint64_t KeyValues::get_uint(const std::string& key) const { return parse_uint(key, get_string(key)); }

std::uint64_t KeyValues::get_uint(const std::string& key, std::uint64_t fallback) const {
  auto v = find(key);
  return v ? parse_uint(key, *v) : fallback;
}

std::vector<std::size_t> KeyValues::get_uint_list(const std::string& key, std::vector<std::size_t> fallback) const {
  auto v = find(key);
  if (!v) return fallback;
  std::vector<std::size_t> out;
  std::string_view rest = *v;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const auto item = trim(rest.substr(0, comma));
    out.push_back(static_cast<std::size_t>(parse_uint(key, item)));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  if (out.empty()) throw Error(Errc::config, "'" + key + "' is an empty list");
  return out;
}

std::vector<std::string> KeyValues::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (!used_.count(k)) out.push_back(k);
  }
  return out;
}

std::string KeyValues::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries_) os << k << " = " << v << '\n';
  return os.str();
}

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(Errc::config, "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw Error(Errc::config, "line " + std::to_string(line_no) + ": empty key");
    if (kv.contains(key)) throw Error(Errc::config, "duplicate key '" + key + "'");
    kv.set(key, value);
  }
  return kv;
}

KeyValues load_key_values(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    throw Error(Errc::config, "cannot read config " + path.string());
  }
  return parse_key_values(text);
}

}  // namespace dps
