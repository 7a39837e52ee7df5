#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dps/pattern.hpp"

namespace dps {

/// One scored test sample.
struct DpsRecord {
  std::uint32_t sample_id = 0;
  std::uint32_t class_index = 0;
  double dps = 0.0;       // 1 - cos(pattern, class reference), in [0, 2]
  double gen_gap = 0.0;   // loss - class mean training loss
  double loss = 0.0;
  bool correct = false;
  double pattern_deviation = 0.0;  // sum_k (q_k - reference_k), exposed for inspection only
};

struct FitResult {
  double pearson_r = 0.0;
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t n = 0;
  std::string p_value_note;
};

struct SpectrumSummary {
  double mean = 0.0;
  double median = 0.0;
  double fraction_below_0_05 = 0.0;
};

struct SpectrumHistogram {
  std::vector<double> bin_edges;  // num_bins + 1 edges, 0 .. 2
  std::vector<std::size_t> counts;
  std::size_t total = 0;
  SpectrumSummary summary;
  std::size_t mode_count = 0;  // local maxima of the 3-bin smoothed counts
};

struct TaylorPoint {
  std::uint32_t sample_id = 0;
  double logit_dev = 0.0;        // g_c - mean training g_c
  double loss_exact = 0.0;       // the sample's own cross-entropy
  double loss_coordinate = 0.0;  // exact loss along g_c with the class-mean non-target context
  double loss_taylor2 = 0.0;
};

/// Second-order expansion of cross-entropy in the true-class logit around the class mean.
/// The non-target context is the class-mean non-target log-partition
/// log sum_{k != c} exp(g_k), recovered per training sample as g_c + log(expm1(loss)).
struct TaylorDiagnostic {
  std::uint32_t class_index = 0;
  double mean_logit = 0.0;          // mean training g_c
  double mean_other_logsumexp = 0.0;
  double mean_prob = 0.0;           // P at the class-mean context
  double first_order_coeff = 0.0;   // P - 1
  double second_order_coeff = 0.0;  // P (1 - P) / 2, never above 0.125
  std::vector<TaylorPoint> per_sample;
};

/// Cosine similarity clamped to [-1, 1]. Throws degenerate_pattern on a zero vector.
double cosine(std::span<const double> a, std::span<const double> b);

/// Mean cosine over all unordered pairs. Throws insufficient_samples below two vectors.
double intra_class_consistency(std::span<const std::vector<double>> vectors);
/// Same, over the non-degenerate patterns whose true_class is `class_index`.
double intra_class_consistency(std::span<const DecisionPattern> patterns, std::uint32_t class_index);

struct Confusability {
  double value = 0.0;
  std::uint32_t nearest_class = 0;  // smallest c' attaining the maximum
};

/// max over c' != c of cos(reference_c, reference_c').
Confusability inter_class_confusability(std::span<const ClassReference> refs, std::uint32_t class_index);

double dps_sample(const DecisionPattern& p, const ClassReference& ref);

/// Mean dps of the records of one class, summed in sample_id order.
double dps_class(std::span<const DpsRecord> records, std::uint32_t class_index);
/// Mean dps over all records, summed in (sample_id, class) order.
double dps_dataset(std::span<const DpsRecord> records);

double gen_gap_sample(double loss, double class_train_mean_loss);
std::vector<double> gen_gaps(std::span<const double> losses, std::span<const double> class_train_mean_losses);

/// Pearson r and least-squares line y = slope * x + intercept (two-pass sums).
/// Throws insufficient_samples for n < 3 and degenerate_fit for (near) zero variance.
FitResult pearson_fit(std::span<const double> xs, std::span<const double> ys);

/// Throws empty_class when either split has no members of the class.
TaylorDiagnostic taylor_diagnostic(std::span<const DecisionPattern> train, std::span<const DecisionPattern> test,
                                   std::uint32_t class_index);

/// Fixed-width bins over [0, 2]; dps == 2 lands in the last bin.
SpectrumHistogram spectrum_histogram(std::span<const DpsRecord> records, std::size_t num_bins);
SpectrumHistogram spectrum_histogram(std::span<const double> dps_values, std::size_t num_bins);

/// Local maxima of the counts after a centered 3-bin moving average.
std::size_t count_modes(std::span<const std::size_t> counts);

}  // namespace dps
