#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dps/metrics.hpp"
#include "dps/pattern.hpp"

namespace dps {

struct AnalysisOptions {
  std::size_t bins = 50;
  std::size_t min_class_size = 1;      // classes with fewer test records stay out of the class-level fit
  bool correct_only_reference = false;  // build references from correctly classified training samples only
};

struct ClassSummary {
  std::uint32_t class_index = 0;
  std::size_t train_count = 0;
  std::size_t test_count = 0;  // scored (non-degenerate) test records
  double train_mean_loss = 0.0;
  double test_mean_loss = 0.0;
  double gen_gap = 0.0;  // mean per-sample gap over scored records
  double dps = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

/// Eqs. for intra-class consistency and inter-class confusability over any K-vector source.
struct StructuralStats {
  std::vector<std::uint32_t> classes;
  std::vector<double> intra;
  std::vector<Confusability> inter;
  double min_intra = 0.0;
  double max_inter = 0.0;
  double margin() const { return min_intra - max_inter; }
};

/// Vectors grouped by class; references are means of the normalized vectors.
StructuralStats structural_stats(const std::map<std::uint32_t, std::vector<std::vector<double>>>& by_class);
StructuralStats structural_stats(std::span<const DecisionPattern> patterns);

struct OptionalFit {
  std::optional<FitResult> fit;
  std::string note;  // why the fit is absent
};

/// Attempts a fit; insufficient or degenerate inputs yield an empty fit with a note.
OptionalFit try_fit(std::span<const double> xs, std::span<const double> ys);

struct Exclusions {
  std::size_t train_degenerate = 0;
  std::size_t test_degenerate = 0;
  std::size_t test_without_reference = 0;
  std::size_t classes_below_min_size = 0;
};

struct DpsReport {
  std::size_t channels = 0;
  std::vector<ClassReference> references;
  std::vector<DpsRecord> records;
  std::vector<ClassSummary> classes;
  double dps_dataset = 0.0;
  double gen_gap_dataset = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  OptionalFit sample_fit;
  OptionalFit class_fit;
  std::optional<StructuralStats> structure;
  std::vector<TaylorDiagnostic> taylor;
  SpectrumHistogram spectrum;
  Exclusions exclusions;
  std::map<std::string, std::string> metadata;
};

/// Full pipeline from train/test patterns. Throws on empty or incompatible input;
/// every number in the report comes from the functions in metrics.hpp.
DpsReport analyze(std::span<const DecisionPattern> train, std::span<const DecisionPattern> test,
                  const AnalysisOptions& options = {});

// Serialization. CSV doubles use %.17g so exports are bit-faithful and byte-stable.
std::string format_double(double v);
nlohmann::json to_json(const DpsReport& report);
nlohmann::json to_json(const FitResult& fit);
nlohmann::json to_json(const OptionalFit& fit);
nlohmann::json to_json(const StructuralStats& stats);
nlohmann::json to_json(const SpectrumHistogram& hist);

std::string samples_csv(std::span<const DpsRecord> records);
std::string classes_csv(std::span<const ClassSummary> classes);
std::string histogram_csv(const SpectrumHistogram& hist);
std::string taylor_csv(std::span<const TaylorDiagnostic> diagnostics);

struct DatasetRow {
  std::string split;
  std::size_t n = 0;
  double dps = 0.0;
  double gen_gap = 0.0;
  double test_accuracy = 0.0;
};
std::string datasets_csv(std::span<const DatasetRow> rows);
DatasetRow dataset_row(const std::string& split, const DpsReport& report);

/// Writes report.json, samples.csv, classes.csv, datasets.csv, histogram.csv and taylor.csv
/// under `dir`, each name prefixed by `prefix`.
void write_report_files(const DpsReport& report, const std::filesystem::path& dir, const std::string& prefix = "");

}  // namespace dps
