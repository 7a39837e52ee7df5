#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dps/pattern.hpp"

namespace dps {

inline constexpr std::uint32_t kPatternStoreVersion = 1;

struct PatternStore {
  std::uint32_t channels = 0;  // K
  std::vector<DecisionPattern> patterns;
};

/// "DPS1", u32 version, u32 K, u32 N, then per record u32 sample_id, true_class,
/// predicted_class, class_used, f64 g_c, f64 loss, K x f64 pattern.
/// Normalized vectors are not stored; decode recomputes them.
std::string encode_pattern_store(const PatternStore& store);
PatternStore decode_pattern_store(std::string_view bytes);

void save_pattern_store(const PatternStore& store, const std::filesystem::path& path);
PatternStore load_pattern_store(const std::filesystem::path& path);

/// Text sidecar next to a store: `key = value` lines.
struct StoreSidecar {
  std::string checkpoint_hash;
  std::size_t target_layer = 0;
  std::string split;
  std::map<std::string, std::string> config;
};

std::filesystem::path sidecar_path(const std::filesystem::path& store_path);
std::string encode_sidecar(const StoreSidecar& sidecar);
StoreSidecar decode_sidecar(std::string_view text);

}  // namespace dps
