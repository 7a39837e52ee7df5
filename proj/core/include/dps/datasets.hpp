#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "dps/model.hpp"

namespace dps {

enum class DatasetKind { shapes, colored_digits, shapes_variant };
enum class Corruption { blur, contrast, noise };

std::string_view dataset_kind_name(DatasetKind k) noexcept;
DatasetKind parse_dataset_kind(std::string_view name);
std::string_view corruption_name(Corruption c) noexcept;
Corruption parse_corruption(std::string_view name);

/// Largest class count each generator supports.
inline constexpr std::size_t kMaxShapeClasses = 8;
inline constexpr std::size_t kMaxDigitClasses = 10;

struct SyntheticDatasetConfig {
  DatasetKind kind = DatasetKind::shapes;
  std::size_t num_classes = 6;
  std::size_t samples_per_class = 60;
  std::size_t image_size = 16;
  std::size_t channels = 1;
  double jitter = 1.0;  // scales position/size/intensity/noise perturbations
};

/// Throws config on an invalid configuration.
void validate_config(const SyntheticDatasetConfig& config);

/// Parametric shapes (bars, crosses, disks, rings, ...), class-balanced, in class-major
/// order, pixel values in [0, 1]. kind must be shapes.
Batch gen_shapes(const SyntheticDatasetConfig& config, std::uint64_t seed);

/// Same classes drawn with different primitives (e.g. a disk becomes an octagon).
Batch gen_shapes_variant(const SyntheticDatasetConfig& config, std::uint64_t seed);

/// 3x5 bitmap digits tinted with a color. With probability `correlation_strength` the
/// tint is the class color, otherwise a uniformly random class color.
Batch gen_colored_digits(const SyntheticDatasetConfig& config, double correlation_strength, std::uint64_t seed);

/// Dispatches on config.kind; correlation_strength only affects colored_digits.
Batch generate_dataset(const SyntheticDatasetConfig& config, std::uint64_t seed, double correlation_strength = 1.0);

/// RGB tint assigned to a class.
std::vector<double> class_color(std::size_t class_index);

/// blur: box filter radius {1,2,3}; contrast: rescale toward the image mean by {0.7,0.4,0.15};
/// noise: Gaussian with sigma {0.05,0.15,0.3} of the dynamic range. Output is clamped to the
/// input's value range; labels are untouched. Throws range for severity outside 1..3.
Batch corrupt(const Batch& batch, Corruption kind, int severity, std::uint64_t seed);

struct NoisyBatch {
  Batch batch;
  std::vector<bool> flipped;
};

/// Flips exactly round(ratio * N) labels to a uniformly random different class.
NoisyBatch inject_label_noise(const Batch& batch, double ratio, std::size_t num_classes, std::uint64_t seed);

/// Concatenates batches with identical sample shapes.
Batch concat(const std::vector<Batch>& parts);

}  // namespace dps
