#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dps::testing {
namespace {

NaiveMap naive_conv(const NaiveMap& in, const LayerSpec& s, const std::vector<double>& w, const std::vector<double>& b) {
  const std::size_t p = s.padding, k = s.kernel;
  NaiveMap padded{in.c, in.h + 2 * p, in.w + 2 * p, {}};
  padded.v.assign(padded.c * padded.h * padded.w, 0.0);
  for (std::size_t c = 0; c < in.c; ++c)
    for (std::size_t i = 0; i < in.h; ++i)
      for (std::size_t j = 0; j < in.w; ++j)
        padded.v[(c * padded.h + i + p) * padded.w + j + p] = in.v[(c * in.h + i) * in.w + j];
  NaiveMap out{s.out_channels, (padded.h - k) / s.stride + 1, (padded.w - k) / s.stride + 1, {}};
  out.v.resize(out.c * out.h * out.w);
  for (std::size_t o = 0; o < out.c; ++o)
    for (std::size_t i = 0; i < out.h; ++i)
      for (std::size_t j = 0; j < out.w; ++j) {
        double acc = b[o];
        for (std::size_t c = 0; c < in.c; ++c)
          for (std::size_t u = 0; u < k; ++u)
            for (std::size_t v = 0; v < k; ++v)
              acc += w[((o * in.c + c) * k + u) * k + v] *
                     padded.v[(c * padded.h + i * s.stride + u) * padded.w + j * s.stride + v];
        out.v[(o * out.h + i) * out.w + j] = acc;
      }
  return out;
}

NaiveMap naive_layer(const ModelCheckpoint& m, std::size_t l, const NaiveMap& in) {
  const LayerSpec& s = m.layers[l];
  switch (s.kind) {
    case LayerKind::conv:
      return naive_conv(in, s, m.weights[l], m.biases[l]);
    case LayerKind::relu: {
      NaiveMap out = in;
      for (double& v : out.v) v = v > 0.0 ? v : 0.0;
      return out;
    }
    case LayerKind::maxpool: {
      NaiveMap out{in.c, in.h / 2, in.w / 2, {}};
      for (std::size_t c = 0; c < out.c; ++c)
        for (std::size_t i = 0; i < out.h; ++i)
          for (std::size_t j = 0; j < out.w; ++j) {
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t u = 0; u < 2; ++u)
              for (std::size_t v = 0; v < 2; ++v) best = std::max(best, in.v[(c * in.h + 2 * i + u) * in.w + 2 * j + v]);
            out.v.push_back(best);
          }
      return out;
    }
    case LayerKind::gap: {
      NaiveMap out{in.c, 1, 1, {}};
      for (std::size_t c = 0; c < in.c; ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < in.h * in.w; ++i) sum += in.v[c * in.h * in.w + i];
        out.v.push_back(sum / static_cast<double>(in.h * in.w));
      }
      return out;
    }
    case LayerKind::linear: {
      NaiveMap out{s.out_classes, 1, 1, {}};
      const std::size_t n = in.v.size();
      for (std::size_t o = 0; o < s.out_classes; ++o) {
        double acc = m.biases[l][o];
        for (std::size_t i = 0; i < n; ++i) acc += m.weights[l][o * n + i] * in.v[i];
        out.v.push_back(acc);
      }
      return out;
    }
  }
  return in;
}

}  // namespace

NaiveMap to_naive(const Tensor& t) {
  const auto& s = t.shape();
  const std::size_t off = s.size() == 4 ? 1 : 0;
  return {s[off], s[off + 1], s[off + 2], t.values()};
}

std::vector<NaiveMap> naive_trace(const ModelCheckpoint& model, const NaiveMap& input) {
  std::vector<NaiveMap> outs;
  NaiveMap cur = input;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    cur = naive_layer(model, l, cur);
    outs.push_back(cur);
  }
  return outs;
}

std::vector<double> naive_run_from(const ModelCheckpoint& model, std::size_t first, const NaiveMap& in) {
  NaiveMap cur = in;
  for (std::size_t l = first; l < model.layers.size(); ++l) cur = naive_layer(model, l, cur);
  return cur.v;
}

double direct_cross_entropy(std::span<const double> logits, std::size_t label) {
  long double denom = 0.0L;
  for (double g : logits) denom += std::exp(static_cast<long double>(g));
  return static_cast<double>(-std::log(std::exp(static_cast<long double>(logits[label])) / denom));
}

std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double delta) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + delta;
    const double up = f(x);
    x[i] = orig - delta;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * delta);
  }
  return g;
}

double max_norm_rel_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return scale > 0.0 ? diff / scale : diff;
}

SidedDifferences sided_grad_activation(const ModelCheckpoint& model, const Tensor& x, std::size_t c, double delta) {
  const std::size_t f = feature_layer_index(model);
  NaiveMap a = naive_trace(model, to_naive(x))[f];
  auto logit = [&] { return naive_run_from(model, f + 1, a)[c]; };
  const double base = logit();
  SidedDifferences d;
  for (double& v : a.v) {
    const double orig = v;
    v = orig + delta;
    const double up = logit();
    v = orig - delta;
    const double down = logit();
    v = orig;
    d.central.push_back((up - down) / (2.0 * delta));
    d.forward.push_back((up - base) / delta);
    d.backward.push_back((base - down) / delta);
  }
  return d;
}

ModelCheckpoint random_tiny_model(Rng& rng, bool target_feeds_gap) {
  for (;;) {
    const MapShape input{1 + rng.below(3), 4 + rng.below(5), 4 + rng.below(5)};
    std::vector<LayerSpec> layers;
    const std::size_t stages = 1 + rng.below(3);
    for (std::size_t s = 0; s < stages; ++s) {
      // padding < kernel, else border outputs are bias-only and a following maxpool ties exactly.
      const std::size_t kernel = 1 + rng.below(3);
      layers.push_back(LayerSpec::conv(1 + rng.below(4), kernel, 1 + rng.below(2), kernel > 1 ? rng.below(2) : 0));
      if (rng.bernoulli(0.7)) layers.push_back(LayerSpec::relu());
      if (s + 1 < stages && rng.bernoulli(0.4)) layers.push_back(LayerSpec::maxpool());
    }
    layers.push_back(LayerSpec::gap());
    layers.push_back(LayerSpec::linear(2 + rng.below(4)));
    std::vector<std::size_t> convs;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (layers[i].kind == LayerKind::conv) convs.push_back(i);
    }
    const std::size_t target = target_feeds_gap ? convs.back() : convs[rng.below(convs.size())];
    try {
      const auto shapes = layer_output_shapes(input, layers);
      if (std::any_of(shapes.begin(), shapes.end(), [](const MapShape& m) { return m.size() == 0; })) continue;
      ModelCheckpoint m = make_model(input, layers, rng.next(), target);
      for (auto& b : m.biases)
        for (double& v : b) v = 0.1 * rng.normal();
      return m;
    } catch (const std::exception&) {
      continue;
    }
  }
}

Tensor random_tensor(const std::vector<std::size_t>& shape, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

std::vector<double> random_vector(std::size_t k, Rng& rng) {
  std::vector<double> v(k);
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace dps::testing
