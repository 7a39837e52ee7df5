#include "dps/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dps/error.hpp"
#include "dps/layers.hpp"
#include "dps/rng.hpp"

namespace dps {

std::string_view layer_kind_name(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::gap: return "gap";
    case LayerKind::linear: return "linear";
  }
  return "?";
}

std::size_t ModelCheckpoint::num_classes() const {
  if (layers.empty() || layers.back().kind != LayerKind::linear) {
    throw Error(Errc::config, "model does not end in a linear head");
  }
  return layers.back().out_classes;
}

std::vector<MapShape> layer_output_shapes(const MapShape& input, std::span<const LayerSpec> layers) {
  std::vector<MapShape> shapes;
  shapes.reserve(layers.size());
  MapShape cur = input;
  for (const auto& spec : layers) {
    switch (spec.kind) {
      case LayerKind::conv: cur = layers::conv_output_shape(cur, spec); break;
      case LayerKind::relu: break;
      case LayerKind::maxpool:
        if (cur.height < 2 || cur.width < 2) throw Error(Errc::input_shape, "maxpool input smaller than 2x2");
        cur = {cur.channels, cur.height / 2, cur.width / 2};
        break;
      case LayerKind::gap: cur = {cur.channels, 1, 1}; break;
      case LayerKind::linear:
        if (spec.out_classes == 0) throw Error(Errc::config, "linear layer needs out_classes > 0");
        cur = {spec.out_classes, 1, 1};
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

std::vector<std::pair<std::size_t, std::size_t>> parameter_sizes(const MapShape& input,
                                                                 std::span<const LayerSpec> layers) {
  std::vector<std::pair<std::size_t, std::size_t>> sizes;
  MapShape cur = input;
  const auto shapes = layer_output_shapes(input, layers);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& spec = layers[i];
    if (spec.kind == LayerKind::conv) {
      sizes.emplace_back(spec.out_channels * cur.channels * spec.kernel * spec.kernel, spec.out_channels);
    } else if (spec.kind == LayerKind::linear) {
      sizes.emplace_back(spec.out_classes * cur.size(), spec.out_classes);
    } else {
      sizes.emplace_back(0, 0);
    }
    cur = shapes[i];
  }
  return sizes;
}

std::size_t default_target_layer(std::span<const LayerSpec> layers) {
  for (std::size_t i = layers.size(); i-- > 0;) {
    if (layers[i].kind == LayerKind::conv) return i;
  }
  throw Error(Errc::config, "model has no conv layer");
}

void validate_model(const ModelCheckpoint& model) {
  const auto& layers = model.layers;
  if (model.input.size() == 0) throw Error(Errc::config, "model input shape is empty");
  if (layers.size() < 3) throw Error(Errc::config, "model needs at least conv, gap and linear layers");
  if (layers[layers.size() - 2].kind != LayerKind::gap || layers.back().kind != LayerKind::linear) {
    throw Error(Errc::config, "final two layers must be [gap, linear]");
  }
  for (std::size_t i = 0; i + 2 < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::gap || layers[i].kind == LayerKind::linear) {
      throw Error(Errc::config, "gap/linear allowed only as the final two layers");
    }
  }
  if (model.target_layer_index >= layers.size() || layers[model.target_layer_index].kind != LayerKind::conv) {
    throw Error(Errc::config, "target_layer_index must point at a conv layer");
  }
  const auto sizes = parameter_sizes(model.input, layers);
  if (model.weights.size() != layers.size() || model.biases.size() != layers.size()) {
    throw Error(Errc::config, "parameter arrays must have one entry per layer");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (model.weights[i].size() != sizes[i].first || model.biases[i].size() != sizes[i].second) {
      throw Error(Errc::config, "parameter length mismatch at layer " + std::to_string(i));
    }
  }
}

std::size_t feature_layer_index(const ModelCheckpoint& model) {
  const std::size_t t = model.target_layer_index;
  if (t + 1 < model.layers.size() && model.layers[t + 1].kind == LayerKind::relu) return t + 1;
  return t;
}

MapShape feature_shape(const ModelCheckpoint& model) {
  return layer_output_shapes(model.input, model.layers)[feature_layer_index(model)];
}

ModelCheckpoint make_model(const MapShape& input, std::vector<LayerSpec> layers, std::uint64_t seed,
                           std::optional<std::size_t> target_layer) {
  ModelCheckpoint m;
  m.input = input;
  m.layers = std::move(layers);
  m.rng_seed = seed;
  m.target_layer_index = target_layer ? *target_layer : default_target_layer(m.layers);
  const auto sizes = parameter_sizes(input, m.layers);
  Rng rng(seed);
  MapShape cur = input;
  const auto shapes = layer_output_shapes(input, m.layers);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const auto& spec = m.layers[i];
    std::vector<double> w(sizes[i].first);
    std::vector<double> b(sizes[i].second, 0.0);
    std::size_t fan_in = 0;
    if (spec.kind == LayerKind::conv) fan_in = cur.channels * spec.kernel * spec.kernel;
    if (spec.kind == LayerKind::linear) fan_in = cur.size();
    if (fan_in > 0) {
      // The head feeds softmax directly, so it uses unit-gain (not ReLU-gain) scaling.
      const double gain = spec.kind == LayerKind::linear ? 1.0 : 2.0;
      const double stddev = std::sqrt(gain / static_cast<double>(fan_in));
      for (double& v : w) v = stddev * rng.normal();
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
    cur = shapes[i];
  }
  validate_model(m);
  return m;
}

std::vector<LayerSpec> standard_cnn_layers(std::span<const std::size_t> conv_channels,
                                           std::size_t num_classes) {
  if (conv_channels.empty()) throw Error(Errc::config, "need at least one conv stage");
  std::vector<LayerSpec> layers;
  for (std::size_t i = 0; i < conv_channels.size(); ++i) {
    layers.push_back(LayerSpec::conv(conv_channels[i], 3, 1, 1));
    layers.push_back(LayerSpec::relu());
    if (i + 1 < conv_channels.size()) layers.push_back(LayerSpec::maxpool());
  }
  layers.push_back(LayerSpec::gap());
  layers.push_back(LayerSpec::linear(num_classes));
  return layers;
}

namespace {

Tensor as_map(const ModelCheckpoint& model, const Tensor& x) {
  const auto& s = x.shape();
  std::vector<std::size_t> dims;
  if (s.size() == 3) {
    dims = s;
  } else if (s.size() == 4 && s[0] == 1) {
    dims = {s[1], s[2], s[3]};
  } else {
    throw Error(Errc::input_shape, "expected [C, H, W] or [1, C, H, W], got " + shape_string(s));
  }
  if (MapShape{dims[0], dims[1], dims[2]} != model.input) {
    throw Error(Errc::input_shape, "input " + shape_string(dims) + " does not match model input " +
                                       shape_string(model.input.dims()));
  }
  return Tensor(std::move(dims), x.values());
}

Tensor apply_layer(const ModelCheckpoint& model, std::size_t i, const Tensor& in) {
  const auto& spec = model.layers[i];
  switch (spec.kind) {
    case LayerKind::conv: return layers::conv2d(in, spec, model.weights[i], model.biases[i]);
    case LayerKind::relu: return layers::relu(in);
    case LayerKind::maxpool: return layers::maxpool2(in);
    case LayerKind::gap: return layers::gap(in);
    case LayerKind::linear: return layers::linear(in, spec.out_classes, model.weights[i], model.biases[i]);
  }
  throw Error(Errc::config, "unknown layer kind");
}

// outputs[i] is the output of layer i; the input is kept separately.
std::vector<Tensor> trace(const ModelCheckpoint& model, const Tensor& input) {
  std::vector<Tensor> outputs;
  outputs.reserve(model.layers.size());
  const Tensor* cur = &input;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    outputs.push_back(apply_layer(model, i, *cur));
    cur = &outputs.back();
  }
  return outputs;
}

Tensor flat_logits(const Tensor& head_out) { return Tensor({head_out.size()}, head_out.values()); }

// Backward from layer `last` down to layer `first` (inclusive). Parameter gradients
// are accumulated only when `grads` is non-null.
Tensor backprop(const ModelCheckpoint& model, const Tensor& input, const std::vector<Tensor>& outputs,
                Tensor grad, std::size_t first, ParamGradients* grads) {
  static thread_local std::vector<double> scratch_w;
  static thread_local std::vector<double> scratch_b;
  for (std::size_t i = model.layers.size(); i-- > first;) {
    const Tensor& in = i == 0 ? input : outputs[i - 1];
    const auto& spec = model.layers[i];
    std::span<double> dw;
    std::span<double> db;
    if (spec.kind == LayerKind::conv || spec.kind == LayerKind::linear) {
      if (grads) {
        dw = grads->weights[i];
        db = grads->biases[i];
      } else {
        scratch_w.assign(model.weights[i].size(), 0.0);
        scratch_b.assign(model.biases[i].size(), 0.0);
        dw = scratch_w;
        db = scratch_b;
      }
    }
    switch (spec.kind) {
      case LayerKind::conv: grad = layers::conv2d_backward(in, spec, model.weights[i], grad, dw, db); break;
      case LayerKind::relu: grad = layers::relu_backward(in, grad); break;
      case LayerKind::maxpool: grad = layers::maxpool2_backward(in, grad); break;
      case LayerKind::gap: grad = layers::gap_backward(in, grad); break;
      case LayerKind::linear:
        grad = layers::linear_backward(in, spec.out_classes, model.weights[i], grad, dw, db);
        break;
    }
  }
  return grad;
}

}  // namespace

ForwardResult forward(const ModelCheckpoint& model, const Tensor& x) {
  const Tensor input = as_map(model, x);
  auto outputs = trace(model, input);
  ForwardResult r;
  r.logits = flat_logits(outputs.back());
  r.activations = std::move(outputs[feature_layer_index(model)]);
  return r;
}

Tensor run_layers(const ModelCheckpoint& model, std::size_t first, std::size_t last, const Tensor& in) {
  if (first > last || last > model.layers.size()) throw Error(Errc::range, "invalid layer range");
  Tensor cur = in;
  for (std::size_t i = first; i < last; ++i) cur = apply_layer(model, i, cur);
  if (last == model.layers.size()) return flat_logits(cur);
  return cur;
}

Tensor grad_wrt_activation(const ModelCheckpoint& model, const Tensor& x, std::size_t class_index) {
  const std::size_t classes = model.num_classes();
  if (class_index >= classes) {
    throw Error(Errc::class_range, "class " + std::to_string(class_index) + " outside [0, " +
                                       std::to_string(classes) + ")");
  }
  const Tensor input = as_map(model, x);
  const auto outputs = trace(model, input);
  Tensor seed({classes, 1, 1});
  seed[class_index] = 1.0;
  // Gradient w.r.t. the output of layer f is the gradient w.r.t. the input of layer f + 1.
  return backprop(model, input, outputs, std::move(seed), feature_layer_index(model) + 1, nullptr);
}

ParamGradients ParamGradients::zeros_like(const ModelCheckpoint& model) {
  ParamGradients g;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    g.weights.emplace_back(model.weights[i].size(), 0.0);
    g.biases.emplace_back(model.biases[i].size(), 0.0);
  }
  return g;
}

Tensor backward(const ModelCheckpoint& model, const Tensor& x, std::span<const double> grad_logits,
                ParamGradients& grads) {
  const std::size_t classes = model.num_classes();
  if (grad_logits.size() != classes) throw Error(Errc::input_shape, "logit gradient has wrong length");
  const Tensor input = as_map(model, x);
  const auto outputs = trace(model, input);
  Tensor seed({classes, 1, 1}, std::vector<double>(grad_logits.begin(), grad_logits.end()));
  return backprop(model, input, outputs, std::move(seed), 0, &grads);
}

MapShape Batch::sample_shape() const {
  if (images.rank() != 4) throw Error(Errc::input_shape, "batch images must be [N, C, H, W]");
  return {images.dim(1), images.dim(2), images.dim(3)};
}

Tensor Batch::sample(std::size_t i) const {
  const MapShape s = sample_shape();
  const std::size_t n = s.size();
  auto first = images.values().begin() + static_cast<std::ptrdiff_t>(i * n);
  return Tensor(s.dims(), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n)));
}

void validate_batch(const Batch& batch, std::optional<std::size_t> num_classes) {
  if (batch.labels.empty()) throw Error(Errc::empty_input, "batch has no samples");
  if (batch.images.rank() != 4 || batch.images.dim(0) != batch.labels.size()) {
    throw Error(Errc::input_shape, "batch images " + shape_string(batch.images.shape()) +
                                       " do not match " + std::to_string(batch.labels.size()) + " labels");
  }
  if (num_classes) {
    for (auto l : batch.labels) {
      if (l >= *num_classes) throw Error(Errc::class_range, "label " + std::to_string(l) + " out of range");
    }
  }
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw Error(Errc::class_range, "label outside logit range");
  const double top = *std::max_element(logits.begin(), logits.end());
  const double gc = logits[label];
  if (gc == top) {
    // log1p keeps precision when the true class dominates.
    double rest = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
      if (k != label) rest += std::exp(logits[k] - gc);
    }
    return std::log1p(rest);
  }
  double s = 0.0;
  for (double g : logits) s += std::exp(g - top);
  return top + std::log(s) - gc;
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::vector<double> loss_per_sample(const ModelCheckpoint& model, const Batch& batch) {
  validate_batch(batch, model.num_classes());
  std::vector<double> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto r = forward(model, batch.sample(i));
    out[i] = cross_entropy(r.logits.data(), batch.labels[i]);
  }
  return out;
}

double accuracy(const ModelCheckpoint& model, const Batch& batch) {
  validate_batch(batch, model.num_classes());
  std::size_t hit = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto r = forward(model, batch.sample(i));
    if (argmax(r.logits.data()) == batch.labels[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(batch.size());
}

namespace {

std::vector<double> softmax(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) s += (p[k] = std::exp(logits[k] - top));
  for (double& v : p) v /= s;
  return p;
}

}  // namespace

TrainResult train(ModelCheckpoint model, const Batch& data, const TrainOptions& options) {
  validate_model(model);
  validate_batch(data, model.num_classes());
  if (!(options.lr >= 0.0) || options.epochs < 1 || options.batch_size < 1) {
    throw Error(Errc::config, "train needs lr >= 0, epochs >= 1, batch_size >= 1");
  }
  const std::size_t n = data.size();
  ParamGradients velocity = ParamGradients::zeros_like(model);
  Rng rng(options.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const std::size_t stop = std::min(n, start + options.batch_size);
      ParamGradients grads = ParamGradients::zeros_like(model);
      for (std::size_t j = start; j < stop; ++j) {
        const std::size_t idx = order[j];
        const Tensor x = data.sample(idx);
        const auto r = forward(model, x);
        const auto label = data.labels[idx];
        loss_sum += cross_entropy(r.logits.data(), label);
        if (argmax(r.logits.data()) == label) ++hits;
        auto g = softmax(r.logits.data());
        g[label] -= 1.0;
        backward(model, x, g, grads);
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto update = [&](std::vector<double>& param, std::vector<double>& vel, const std::vector<double>& grad) {
          for (std::size_t p = 0; p < param.size(); ++p) {
            vel[p] = options.momentum * vel[p] + grad[p] * scale;
            param[p] -= options.lr * vel[p];
          }
        };
        update(model.weights[l], velocity.weights[l], grads.weights[l]);
        update(model.biases[l], velocity.biases[l], grads.biases[l]);
      }
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    result.epoch_accuracy.push_back(static_cast<double>(hits) / static_cast<double>(n));
  }
  result.model = std::move(model);
  return result;
}

}  // namespace dps
