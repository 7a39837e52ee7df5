#include "dps/pattern.hpp"

#include <algorithm>
#include <cmath>

#include "dps/error.hpp"

namespace dps {

std::string_view split_name(Split s) noexcept { return s == Split::train ? "train" : "test"; }

namespace {

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> channel_means(const Tensor& maps) {
  const std::size_t k = maps.dim(0);
  const std::size_t z = maps.dim(1) * maps.dim(2);
  std::vector<double> out(k);
  for (std::size_t c = 0; c < k; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < z; ++i) s += maps[c * z + i];
    out[c] = s / static_cast<double>(z);
  }
  return out;
}

}  // namespace

void DecisionPattern::renormalize() {
  if (l2_norm(pattern) > kZeroNormEpsilon) {
    normalized = normalize_pattern(pattern);
  } else {
    normalized.clear();
  }
}

std::vector<double> normalize_pattern(std::span<const double> p) {
  const double n = l2_norm(p);
  if (!(n > kZeroNormEpsilon)) throw Error(Errc::degenerate_pattern, "pattern has zero norm");
  std::vector<double> q(p.begin(), p.end());
  for (double& v : q) v /= n;
  return q;
}

DecisionPattern extract_pattern(const ModelCheckpoint& model, const Tensor& x, std::size_t class_index,
                                std::uint32_t sample_id, std::optional<std::uint32_t> true_class) {
  const std::size_t classes = model.num_classes();
  if (class_index >= classes) {
    throw Error(Errc::class_range, "class " + std::to_string(class_index) + " outside [0, " +
                                       std::to_string(classes) + ")");
  }
  const std::uint32_t label = true_class ? *true_class : static_cast<std::uint32_t>(class_index);
  if (label >= classes) throw Error(Errc::class_range, "true class outside model range");

  const auto fwd = forward(model, x);
  const Tensor grad = grad_wrt_activation(model, x, class_index);
  const auto weights = channel_means(grad);
  const auto gap = channel_means(fwd.activations);

  DecisionPattern dp;
  dp.sample_id = sample_id;
  dp.true_class = label;
  dp.class_used = static_cast<std::uint32_t>(class_index);
  dp.predicted_class = static_cast<std::uint32_t>(argmax(fwd.logits.data()));
  dp.pattern.resize(weights.size());
  for (std::size_t k = 0; k < weights.size(); ++k) dp.pattern[k] = weights[k] * gap[k];
  dp.class_logit = fwd.logits[class_index];
  dp.loss = cross_entropy(fwd.logits.data(), label);
  dp.renormalize();
  return dp;
}

std::vector<DecisionPattern> extract_patterns(const ModelCheckpoint& model, const Batch& batch) {
  validate_batch(batch, model.num_classes());
  std::vector<DecisionPattern> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    out.push_back(extract_pattern(model, batch.sample(i), batch.labels[i], static_cast<std::uint32_t>(i)));
  }
  return out;
}

std::vector<double> mean_of_normalized(std::span<const std::vector<double>> vectors) {
  if (vectors.empty()) throw Error(Errc::empty_class, "no vectors to average");
  std::vector<double> mean(vectors.front().size(), 0.0);
  for (const auto& v : vectors) {
    if (v.size() != mean.size()) throw Error(Errc::input_shape, "vectors have different lengths");
    const auto q = normalize_pattern(v);
    for (std::size_t k = 0; k < q.size(); ++k) mean[k] += q[k];
  }
  for (double& m : mean) m /= static_cast<double>(vectors.size());
  return mean;
}

ClassReference class_reference(std::span<const DecisionPattern> patterns, std::uint32_t class_index,
                               const ReferenceOptions& options, Split split) {
  std::vector<const DecisionPattern*> members;
  for (const auto& p : patterns) {
    if (p.true_class != class_index) continue;
    if (options.correct_only && p.predicted_class != p.true_class) continue;
    members.push_back(&p);
  }
  std::stable_sort(members.begin(), members.end(),
                   [](const auto* a, const auto* b) { return a->sample_id < b->sample_id; });
  ClassReference ref;
  ref.class_index = class_index;
  ref.source_split = split;
  for (const auto* p : members) {
    if (p->degenerate()) {
      ++ref.skipped;
      continue;
    }
    if (ref.mean_pattern.empty()) ref.mean_pattern.assign(p->normalized.size(), 0.0);
    if (p->normalized.size() != ref.mean_pattern.size()) {
      throw Error(Errc::input_shape, "patterns have different lengths");
    }
    for (std::size_t k = 0; k < p->normalized.size(); ++k) ref.mean_pattern[k] += p->normalized[k];
    ++ref.sample_count;
  }
  if (ref.sample_count == 0) {
    throw Error(Errc::empty_class, "class " + std::to_string(class_index) + " has no usable patterns");
  }
  for (double& m : ref.mean_pattern) m /= static_cast<double>(ref.sample_count);
  return ref;
}

ActivationBaseline activation_baseline(const ModelCheckpoint& model, const Tensor& x, std::uint32_t sample_id) {
  const auto fwd = forward(model, x);
  return {sample_id, channel_means(fwd.activations)};
}

Tensor gradcam_map(const ModelCheckpoint& model, const Tensor& x, std::size_t class_index) {
  const Tensor grad = grad_wrt_activation(model, x, class_index);
  const auto fwd = forward(model, x);
  const auto weights = channel_means(grad);
  const Tensor& a = fwd.activations;
  const std::size_t h = a.dim(1), w = a.dim(2);
  Tensor map({h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < weights.size(); ++k) s += weights[k] * a.at(k, i, j);
      map[i * w + j] = s > 0.0 ? s : 0.0;
    }
  }
  return map;
}

double faithfulness_residual(const DecisionPattern& dp, const ModelCheckpoint& model) {
  const MapShape fs = feature_shape(model);
  const double z = static_cast<double>(fs.height * fs.width);
  double sum = 0.0;
  for (double v : dp.pattern) sum += v;
  return std::abs(z * sum + model.head_biases().at(dp.class_used) - dp.class_logit);
}

}  // namespace dps
