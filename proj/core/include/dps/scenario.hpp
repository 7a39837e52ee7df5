#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dps/analysis.hpp"
#include "dps/config.hpp"
#include "dps/datasets.hpp"
#include "dps/manifest.hpp"
#include "dps/model.hpp"
#include "dps/pattern.hpp"

namespace dps {

enum class ScenarioKind { ideal, in_distribution, domain_shift, ood, shortcut, label_noise };

std::string_view scenario_kind_name(ScenarioKind k) noexcept;
ScenarioKind parse_scenario_kind(std::string_view name);

struct ModelConfig {
  std::vector<std::size_t> conv_channels{8, 16, 16};
  std::size_t epochs = 30;
  double lr = 0.05;
  std::size_t batch_size = 16;
  double momentum = 0.9;
};

/// Reads channels / epochs / lr / batch_size / momentum, each optionally under `prefix`.
ModelConfig parse_model_config(const KeyValues& kv, const std::string& prefix = "");
/// Reads kind / num_classes / samples_per_class / image_size / channels / jitter under `prefix`.
SyntheticDatasetConfig parse_dataset_config(const KeyValues& kv, const std::string& prefix = "",
                                            SyntheticDatasetConfig defaults = {});

struct ScenarioSpec {
  ScenarioKind name = ScenarioKind::ideal;
  std::uint64_t seed = 0;
  std::optional<int> severity;                 // domain_shift only, 0..3
  std::optional<Corruption> corruption;        // domain_shift and label_noise only
  std::optional<double> noise_ratio;           // label_noise only
  std::optional<double> correlation_strength;  // shortcut only
  SyntheticDatasetConfig dataset;
  std::size_t test_samples_per_class = 40;
  ModelConfig model;
  AnalysisOptions analysis;
  std::optional<std::filesystem::path> checkpoint;  // load instead of training
};

/// Parses a `key = value` spec. Unknown keys, unknown names and fields that do not
/// belong to the named scenario are config errors.
ScenarioSpec parse_scenario_spec(const KeyValues& kv, const std::filesystem::path& base_dir = {});
ScenarioSpec load_scenario_spec(const std::filesystem::path& path);
void validate_spec(const ScenarioSpec& spec);

/// Named sub-seeds derived from the scenario seed.
struct ScenarioSeeds {
  std::uint64_t train_data, test_data, init, shuffle, corruption, label_noise;
  static ScenarioSeeds from(std::uint64_t seed);
};

/// A trained model together with its training-split patterns.
struct Experiment {
  ModelCheckpoint model;
  Batch train;
  std::vector<double> epoch_loss;
  std::vector<DecisionPattern> train_patterns;
};

Experiment train_experiment(const ModelConfig& config, Batch train, std::size_t num_classes, std::uint64_t init_seed,
                            std::uint64_t shuffle_seed);
/// Wraps an existing checkpoint; no training.
Experiment load_experiment(ModelCheckpoint model, Batch train);

struct SplitOutcome {
  std::string name;
  std::vector<DecisionPattern> patterns;
  DpsReport report;
};

SplitOutcome evaluate_split(const Experiment& exp, std::string name, const Batch& test,
                            const AnalysisOptions& options);

/// Clean test samples followed by corrupt(test, kind, 1..3); 4N samples with ids 0..4N-1.
Batch severity_probe(const Batch& test, Corruption kind, std::uint64_t seed);

/// Per-class GAP activation vectors of a batch (the class-agnostic baseline).
StructuralStats activation_structure(const ModelCheckpoint& model, const Batch& batch);

struct ScenarioResult {
  ScenarioSpec spec;
  Experiment experiment;
  std::vector<SplitOutcome> splits;  // splits.front() is the primary split
  StructuralStats decision_structure;
  StructuralStats activation_structure;
  OptionalFit dataset_fit;  // dataset-level DPS vs gap across splits
  nlohmann::json details;   // scenario-specific comparisons
};

/// Builds data, trains (or loads) the model and scores every split. Pure in `spec`.
ScenarioResult run_scenario(const ScenarioSpec& spec);

/// Writes checkpoint, pattern stores, report.json, tabular exports and manifest.json.
/// Nothing is written unless the run already completed.
void write_scenario_outputs(const ScenarioResult& result, const std::filesystem::path& out_dir, RunManifest manifest);

nlohmann::json scenario_report_json(const ScenarioResult& result);

}  // namespace dps
