#include "dps/pattern_store.hpp"

#include <sstream>

#include "dps/codec.hpp"
#include "dps/config.hpp"
#include "dps/error.hpp"

namespace dps {

namespace {
constexpr std::string_view kStoreMagic = "DPS1";
}

std::string encode_pattern_store(const PatternStore& store) {
  std::string out(kStoreMagic);
  le::put_u32(out, kPatternStoreVersion);
  le::put_u32(out, store.channels);
  le::put_u32(out, static_cast<std::uint32_t>(store.patterns.size()));
  out.reserve(out.size() + store.patterns.size() * (32 + 8 * store.channels));
  for (const auto& p : store.patterns) {
    if (p.pattern.size() != store.channels) {
      throw Error(Errc::input_shape, "pattern length differs from store K");
    }
    le::put_u32(out, p.sample_id);
    le::put_u32(out, p.true_class);
    le::put_u32(out, p.predicted_class);
    le::put_u32(out, p.class_used);
    le::put_f64(out, p.class_logit);
    le::put_f64(out, p.loss);
    for (double v : p.pattern) le::put_f64(out, v);
  }
  return out;
}

PatternStore decode_pattern_store(std::string_view bytes) {
  le::Reader r(bytes, "pattern store");
  if (r.take(4) != kStoreMagic) throw Error(Errc::format, "bad pattern store magic (expected DPS1)");
  const auto version = r.u32();
  if (version != kPatternStoreVersion) {
    throw Error(Errc::format, "unsupported pattern store version " + std::to_string(version));
  }
  PatternStore store;
  store.channels = r.u32();
  const std::size_t n = r.u32();
  const std::size_t record = 32 + 8 * static_cast<std::size_t>(store.channels);
  if (r.remaining() != n * record) throw Error(Errc::format, "pattern store payload length mismatch");
  store.patterns.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    DecisionPattern p;
    p.sample_id = r.u32();
    p.true_class = r.u32();
    p.predicted_class = r.u32();
    p.class_used = r.u32();
    p.class_logit = r.f64();
    p.loss = r.f64();
    p.pattern.resize(store.channels);
    for (double& v : p.pattern) v = r.f64();
    p.renormalize();
    store.patterns.push_back(std::move(p));
  }
  return store;
}

void save_pattern_store(const PatternStore& store, const std::filesystem::path& path) {
  write_file(path, encode_pattern_store(store));
}

PatternStore load_pattern_store(const std::filesystem::path& path) {
  return decode_pattern_store(read_file(path));
}

std::filesystem::path sidecar_path(const std::filesystem::path& store_path) {
  auto p = store_path;
  p += ".meta";
  return p;
}

std::string encode_sidecar(const StoreSidecar& s) {
  std::ostringstream os;
  os << "checkpoint_hash = " << s.checkpoint_hash << '\n';
  os << "target_layer = " << s.target_layer << '\n';
  os << "split = " << s.split << '\n';
  for (const auto& [k, v] : s.config) os << "config." << k << " = " << v << '\n';
  return os.str();
}

StoreSidecar decode_sidecar(std::string_view text) {
  const KeyValues kv = parse_key_values(text);
  StoreSidecar s;
  s.checkpoint_hash = kv.get_string("checkpoint_hash");
  s.target_layer = static_cast<std::size_t>(kv.get_uint("target_layer"));
  s.split = kv.get_string("split");
  for (const auto& [k, v] : kv.entries()) {
    if (k.rfind("config.", 0) == 0) s.config[k.substr(7)] = v;
  }
  return s;
}

}  // namespace dps
