#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dps/model.hpp"
#include "dps/tensor.hpp"

namespace dps {

/// Norms at or below this are treated as zero.
inline constexpr double kZeroNormEpsilon = 1e-12;

enum class Split { train, test };
std::string_view split_name(Split s) noexcept;

/// Channel-contribution vector p^c of one sample for one class, plus its metadata.
/// `normalized` is empty when the pattern has (near) zero norm; such patterns are
/// excluded from references and metrics.
struct DecisionPattern {
  std::uint32_t sample_id = 0;
  std::uint32_t true_class = 0;
  std::uint32_t predicted_class = 0;
  std::uint32_t class_used = 0;
  std::vector<double> pattern;
  std::vector<double> normalized;
  double class_logit = 0.0;  // g at class_used
  double loss = 0.0;         // cross-entropy at true_class

  bool degenerate() const noexcept { return normalized.empty(); }
  /// Recomputes `normalized` from `pattern` (empty if degenerate).
  void renormalize();
};

/// Mean of the normalized member patterns of one class. Not re-normalized.
struct ClassReference {
  std::uint32_t class_index = 0;
  std::vector<double> mean_pattern;
  std::size_t sample_count = 0;
  std::size_t skipped = 0;  // degenerate members left out
  Split source_split = Split::train;
};

/// Class-agnostic per-channel GAP of the target activation.
struct ActivationBaseline {
  std::uint32_t sample_id = 0;
  std::vector<double> vector;
};

/// p_k = w_k * GAP(A^k), w_k = spatial mean of d g_c / d A^k. No rectification.
/// `true_class` (default: class_index) selects the label used for the loss field.
DecisionPattern extract_pattern(const ModelCheckpoint& model, const Tensor& x, std::size_t class_index,
                                std::uint32_t sample_id = 0,
                                std::optional<std::uint32_t> true_class = std::nullopt);

/// Extracts every sample of `batch` against its own label, sample_id = position.
std::vector<DecisionPattern> extract_patterns(const ModelCheckpoint& model, const Batch& batch);

/// p / ||p||. Throws degenerate_pattern when ||p|| <= kZeroNormEpsilon.
std::vector<double> normalize_pattern(std::span<const double> p);

/// Arithmetic mean of unit-normalized vectors, accumulated in the given order.
/// Throws degenerate_pattern on a zero vector and empty_class on an empty list.
std::vector<double> mean_of_normalized(std::span<const std::vector<double>> vectors);

struct ReferenceOptions {
  bool correct_only = false;  // keep only members with predicted_class == true_class
};

/// Reference from all patterns with true_class == class_index, in sample_id order.
ClassReference class_reference(std::span<const DecisionPattern> patterns, std::uint32_t class_index,
                               const ReferenceOptions& options = {}, Split split = Split::train);

ActivationBaseline activation_baseline(const ModelCheckpoint& model, const Tensor& x,
                                       std::uint32_t sample_id = 0);

/// ReLU(sum_k w_k A^k) over the target activation, shape [H, W].
Tensor gradcam_map(const ModelCheckpoint& model, const Tensor& x, std::size_t class_index);

/// |Z * sum(pattern) + b_c - g_c|; zero up to rounding for a GAP + linear head.
double faithfulness_residual(const DecisionPattern& dp, const ModelCheckpoint& model);

}  // namespace dps
