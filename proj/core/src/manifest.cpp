#include "dps/manifest.hpp"

#include <chrono>
#include <ctime>

#include "dps/codec.hpp"

namespace dps {

void RunManifest::add_input(const std::string& name, const std::filesystem::path& path) {
  input_hashes[name] = sha256_file(path);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json to_json(const RunManifest& m) {
  return {{"tool_version", m.tool_version}, {"command_line", m.command_line}, {"input_hashes", m.input_hashes},
          {"seeds", m.seeds},               {"outputs", m.outputs},           {"timestamps", {{"started", m.started}, {"finished", m.finished}}}};
}

void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
  write_file(path, to_json(m).dump(2) + "\n");
}

}  // namespace dps
