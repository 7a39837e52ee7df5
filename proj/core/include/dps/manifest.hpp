#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace dps {

inline constexpr const char* kToolVersion = "0.1.0";

/// Audit record for one command run. Every consumed input file appears in input_hashes.
struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string command_line;
  std::map<std::string, std::string> input_hashes;  // name -> sha256 hex
  std::map<std::string, std::uint64_t> seeds;
  std::map<std::string, std::string> outputs;  // name -> sha256 hex
  std::string started;
  std::string finished;

  void add_input(const std::string& name, const std::filesystem::path& path);
};

std::string utc_timestamp();
nlohmann::json to_json(const RunManifest& m);
void write_manifest(const RunManifest& m, const std::filesystem::path& path);

}  // namespace dps
