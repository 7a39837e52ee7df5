#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace dps::cli {

/// Exit statuses of the dps tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // toolkit error; nothing (or no complete output set) was written
inline constexpr int kExitUsage = 2;    // bad command line

/// Runs one command line (without the program name) and returns the exit status.
/// Regular output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct GenDataArgs {
  std::filesystem::path config;
  std::filesystem::path out;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::filesystem::path data;
  std::filesystem::path model_config;
  std::filesystem::path out;
  std::uint64_t seed = 0;
};

struct ExtractArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::string split = "test";
  std::filesystem::path out;
  std::uint64_t seed = 0;
};

struct AnalyzeArgs {
  std::filesystem::path train;
  std::filesystem::path test;
  std::filesystem::path out;
  std::size_t bins = 50;
  std::size_t min_class_size = 1;
  std::string reference = "all";
  std::uint64_t seed = 0;
};

struct ScenarioArgs {
  std::filesystem::path spec;
  std::filesystem::path out;
  std::vector<std::string> overrides;  // key=value
  bool has_seed = false;
  std::uint64_t seed = 0;
};

// Each command throws dps::Error on failure. `command_line` is recorded in the manifest.
void cmd_gen_data(const GenDataArgs& a, const std::string& command_line, std::ostream& out);
void cmd_train(const TrainArgs& a, const std::string& command_line, std::ostream& out);
void cmd_extract(const ExtractArgs& a, const std::string& command_line, std::ostream& out);
void cmd_analyze(const AnalyzeArgs& a, const std::string& command_line, std::ostream& out);
void cmd_scenario(const ScenarioArgs& a, const std::string& command_line, std::ostream& out);

/// Manifest written next to a single-file output.
std::filesystem::path manifest_path_for(const std::filesystem::path& output);

}  // namespace dps::cli
