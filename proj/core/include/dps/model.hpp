#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dps/tensor.hpp"

namespace dps {

enum class LayerKind { conv, relu, maxpool, gap, linear };

std::string_view layer_kind_name(LayerKind kind) noexcept;

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t out_channels = 0;  // conv
  std::size_t kernel = 0;        // conv
  std::size_t stride = 1;        // conv
  std::size_t padding = 0;       // conv
  std::size_t out_classes = 0;   // linear

  static LayerSpec conv(std::size_t out, std::size_t kernel, std::size_t stride = 1,
                        std::size_t padding = 0) {
    return {LayerKind::conv, out, kernel, stride, padding, 0};
  }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec maxpool() { return {LayerKind::maxpool}; }
  static LayerSpec gap() { return {LayerKind::gap}; }
  static LayerSpec linear(std::size_t classes) { return {LayerKind::linear, 0, 0, 1, 0, classes}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Channel/height/width of a single feature map.
struct MapShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t size() const noexcept { return channels * height * width; }
  std::vector<std::size_t> dims() const { return {channels, height, width}; }
  friend bool operator==(const MapShape&, const MapShape&) = default;
};

/// Architecture plus parameters of a conv/relu/maxpool stack ending in GAP + linear.
/// Conv weights are [out, in, k, k]; linear weights are [classes, in]. Parameter-free
/// layers hold empty arrays.
struct ModelCheckpoint {
  MapShape input;
  std::vector<LayerSpec> layers;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  std::uint64_t rng_seed = 0;
  std::size_t target_layer_index = 0;

  std::size_t num_classes() const;
  const std::vector<double>& head_weights() const { return weights.back(); }
  const std::vector<double>& head_biases() const { return biases.back(); }

  friend bool operator==(const ModelCheckpoint&, const ModelCheckpoint&) = default;
};

/// Output shape of every layer, in order. Throws input_shape on an inconsistent stack.
std::vector<MapShape> layer_output_shapes(const MapShape& input, std::span<const LayerSpec> layers);

/// Expected (weights, biases) lengths for each layer.
std::vector<std::pair<std::size_t, std::size_t>> parameter_sizes(const MapShape& input,
                                                                 std::span<const LayerSpec> layers);

/// Throws config/input_shape if the checkpoint violates the architecture rules.
void validate_model(const ModelCheckpoint& model);

/// Index of the last conv layer.
std::size_t default_target_layer(std::span<const LayerSpec> layers);

/// Layer whose output is the target activation A: the target conv, or the ReLU directly after it.
std::size_t feature_layer_index(const ModelCheckpoint& model);

/// Shape of the target activation [K, H, W].
MapShape feature_shape(const ModelCheckpoint& model);

/// Builds a checkpoint with Kaiming fan-in normal weights and zero biases.
ModelCheckpoint make_model(const MapShape& input, std::vector<LayerSpec> layers, std::uint64_t seed,
                           std::optional<std::size_t> target_layer = std::nullopt);

/// conv(3x3, pad 1) -> relu [-> maxpool] per stage, then gap -> linear. No pool after the last stage.
std::vector<LayerSpec> standard_cnn_layers(std::span<const std::size_t> conv_channels,
                                           std::size_t num_classes);

struct ForwardResult {
  Tensor logits;       // [num_classes]
  Tensor activations;  // [K, H, W] at the target layer
};

/// x is [C, H, W] or [1, C, H, W].
ForwardResult forward(const ModelCheckpoint& model, const Tensor& x);

/// Runs layers [first, last) on `in` and returns the last output.
Tensor run_layers(const ModelCheckpoint& model, std::size_t first, std::size_t last, const Tensor& in);

/// d logit_c / d A for the target activation. Gradient of the pre-softmax logit.
Tensor grad_wrt_activation(const ModelCheckpoint& model, const Tensor& x, std::size_t class_index);

struct ParamGradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  static ParamGradients zeros_like(const ModelCheckpoint& model);
};

/// Backpropagates `grad_logits` through the whole network, accumulating into `grads`
/// and returning d/dx.
Tensor backward(const ModelCheckpoint& model, const Tensor& x, std::span<const double> grad_logits,
                ParamGradients& grads);

struct Batch {
  Tensor images;  // [N, C, H, W]
  std::vector<std::uint32_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  MapShape sample_shape() const;
  Tensor sample(std::size_t i) const;
};

/// Throws input_shape / class_range / empty_input on malformed batches.
void validate_batch(const Batch& batch, std::optional<std::size_t> num_classes = std::nullopt);

/// Cross-entropy -log softmax(logits)[label], computed without cancellation.
double cross_entropy(std::span<const double> logits, std::size_t label);

std::vector<double> loss_per_sample(const ModelCheckpoint& model, const Batch& batch);

std::size_t argmax(std::span<const double> values);

double accuracy(const ModelCheckpoint& model, const Batch& batch);

struct TrainOptions {
  std::size_t epochs = 30;
  double lr = 0.05;
  std::uint64_t seed = 0;
  std::size_t batch_size = 16;
  double momentum = 0.9;
};

struct TrainResult {
  ModelCheckpoint model;
  std::vector<double> epoch_loss;      // mean minibatch loss seen during each epoch
  std::vector<double> epoch_accuracy;  // running accuracy during each epoch
};

/// Minibatch SGD with momentum on cross-entropy. Deterministic in (model, data, options).
TrainResult train(ModelCheckpoint model, const Batch& data, const TrainOptions& options);

}  // namespace dps
