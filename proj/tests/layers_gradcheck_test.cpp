// Per-layer backward kernels against central differences of <G, layer(x)>.

#include <cmath>

#include <gtest/gtest.h>

#include "dps/layers.hpp"
#include "support/oracles.hpp"

namespace dps {
namespace {

using testing::central_difference;
using testing::max_norm_rel_error;
using testing::random_tensor;

constexpr double kDelta = 1e-6;
constexpr double kTol = 1e-6;
constexpr int kConfigs = 120;

double inner(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Keeps entries away from ReLU's kink so a delta step never crosses it.
Tensor away_from_zero(Tensor t, Rng& rng) {
  for (double& v : t.values()) {
    if (std::abs(v) < 1e-3) v = (rng.bernoulli(0.5) ? 1.0 : -1.0) * (1e-3 + rng.uniform());
  }
  return t;
}

TEST(LayerGradcheck, Conv) {
  Rng rng(1);
  for (int t = 0; t < kConfigs; ++t) {
    const MapShape in{1 + rng.below(3), 3 + rng.below(6), 3 + rng.below(6)};
    const auto spec = LayerSpec::conv(1 + rng.below(4), 1 + rng.below(3), 1 + rng.below(2), rng.below(2));
    const MapShape out = layers::conv_output_shape(in, spec);
    const Tensor x = random_tensor(in.dims(), rng);
    const auto w = testing::random_vector(spec.out_channels * in.channels * spec.kernel * spec.kernel, rng);
    const auto b = testing::random_vector(spec.out_channels, rng);
    const Tensor g = random_tensor(out.dims(), rng);
    std::vector<double> dw(w.size(), 0.0), db(b.size(), 0.0);
    const Tensor dx = layers::conv2d_backward(x, spec, w, g, dw, db);

    const auto fx = central_difference(
        [&](const std::vector<double>& v) { return inner(g, layers::conv2d(Tensor(in.dims(), v), spec, w, b)); },
        x.values(), kDelta);
    const auto fw = central_difference(
        [&](const std::vector<double>& v) { return inner(g, layers::conv2d(x, spec, v, b)); }, w, kDelta);
    const auto fb = central_difference(
        [&](const std::vector<double>& v) { return inner(g, layers::conv2d(x, spec, w, v)); }, b, kDelta);
    EXPECT_LT(max_norm_rel_error(dx.values(), fx), kTol) << "config " << t;
    EXPECT_LT(max_norm_rel_error(dw, fw), kTol) << "config " << t;
    EXPECT_LT(max_norm_rel_error(db, fb), kTol) << "config " << t;
  }
}

TEST(LayerGradcheck, Relu) {
  Rng rng(2);
  for (int t = 0; t < kConfigs; ++t) {
    const std::vector<std::size_t> shape{1 + rng.below(3), 1 + rng.below(6), 1 + rng.below(6)};
    const Tensor x = away_from_zero(random_tensor(shape, rng), rng);
    const Tensor g = random_tensor(shape, rng);
    const Tensor dx = layers::relu_backward(x, g);
    const auto fx = central_difference(
        [&](const std::vector<double>& v) { return inner(g, layers::relu(Tensor(shape, v))); }, x.values(), kDelta);
    EXPECT_LT(max_norm_rel_error(dx.values(), fx), kTol) << "config " << t;
  }
}

TEST(LayerGradcheck, MaxPool) {
  Rng rng(3);
  for (int t = 0; t < kConfigs; ++t) {
    const std::vector<std::size_t> shape{1 + rng.below(3), 2 + rng.below(7), 2 + rng.below(7)};
    Tensor x(shape);
    // Distinct values spaced well above delta, randomly placed: no ties inside a window.
    std::vector<double> levels(x.size());
    for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = 0.01 * static_cast<double>(i);
    for (std::size_t i = levels.size(); i > 1; --i) std::swap(levels[i - 1], levels[rng.below(i)]);
    x.values() = levels;
    const Tensor y = layers::maxpool2(x);
    const Tensor g = random_tensor(y.shape(), rng);
    const Tensor dx = layers::maxpool2_backward(x, g);
    const auto fx = central_difference(
        [&](const std::vector<double>& v) { return inner(g, layers::maxpool2(Tensor(shape, v))); }, x.values(), kDelta);
    EXPECT_LT(max_norm_rel_error(dx.values(), fx), kTol) << "config " << t;
  }
}

TEST(LayerGradcheck, MaxPoolTiesRouteToFirstMaximum) {
  const Tensor x({1, 2, 2}, std::vector<double>{1.0, 1.0, 1.0, 1.0});
  const Tensor g({1, 1, 1}, std::vector<double>{3.0});
  EXPECT_EQ(layers::maxpool2_backward(x, g).values(), (std::vector<double>{3.0, 0.0, 0.0, 0.0}));
}

TEST(LayerGradcheck, Gap) {
  Rng rng(4);
  for (int t = 0; t < kConfigs; ++t) {
    const std::vector<std::size_t> shape{1 + rng.below(4), 1 + rng.below(6), 1 + rng.below(6)};
    const Tensor x = random_tensor(shape, rng);
    const Tensor g = random_tensor({shape[0], 1, 1}, rng);
    const Tensor dx = layers::gap_backward(x, g);
    const auto fx = central_difference(
        [&](const std::vector<double>& v) { return inner(g, layers::gap(Tensor(shape, v))); }, x.values(), kDelta);
    EXPECT_LT(max_norm_rel_error(dx.values(), fx), kTol) << "config " << t;
  }
}

TEST(LayerGradcheck, Linear) {
  Rng rng(5);
  for (int t = 0; t < kConfigs; ++t) {
    const std::vector<std::size_t> shape{1 + rng.below(6), 1, 1};
    const std::size_t out = 1 + rng.below(5);
    const Tensor x = random_tensor(shape, rng);
    const auto w = testing::random_vector(out * shape[0], rng);
    const auto b = testing::random_vector(out, rng);
    const Tensor g = random_tensor({out, 1, 1}, rng);
    std::vector<double> dw(w.size(), 0.0), db(b.size(), 0.0);
    const Tensor dx = layers::linear_backward(x, out, w, g, dw, db);
    const auto fx = central_difference(
        [&](const std::vector<double>& v) { return inner(g, layers::linear(Tensor(shape, v), out, w, b)); },
        x.values(), kDelta);
    const auto fw = central_difference(
        [&](const std::vector<double>& v) { return inner(g, layers::linear(x, out, v, b)); }, w, kDelta);
    const auto fb = central_difference(
        [&](const std::vector<double>& v) { return inner(g, layers::linear(x, out, w, v)); }, b, kDelta);
    EXPECT_LT(max_norm_rel_error(dx.values(), fx), kTol) << "config " << t;
    EXPECT_LT(max_norm_rel_error(dw, fw), kTol) << "config " << t;
    EXPECT_LT(max_norm_rel_error(db, fb), kTol) << "config " << t;
  }
}

TEST(LayerGradcheck, BackwardAccumulatesIntoParameterGradients) {
  Rng rng(6);
  const auto spec = LayerSpec::conv(2, 3, 1, 1);
  const Tensor x = random_tensor({1, 4, 4}, rng);
  const auto w = testing::random_vector(18, rng);
  const Tensor g = random_tensor({2, 4, 4}, rng);
  std::vector<double> dw1(18, 0.0), db1(2, 0.0), dw2(18, 0.0), db2(2, 0.0);
  layers::conv2d_backward(x, spec, w, g, dw1, db1);
  layers::conv2d_backward(x, spec, w, g, dw2, db2);
  layers::conv2d_backward(x, spec, w, g, dw2, db2);
  for (std::size_t i = 0; i < 18; ++i) EXPECT_NEAR(dw2[i], 2.0 * dw1[i], 1e-12);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(db2[i], 2.0 * db1[i], 1e-12);
}

}  // namespace
}  // namespace dps
