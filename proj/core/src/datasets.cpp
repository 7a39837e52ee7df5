#include "dps/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>

#include "dps/error.hpp"
#include "dps/rng.hpp"

namespace dps {

std::string_view dataset_kind_name(DatasetKind k) noexcept {
  switch (k) {
    case DatasetKind::shapes: return "shapes";
    case DatasetKind::colored_digits: return "colored_digits";
    case DatasetKind::shapes_variant: return "shapes_variant";
  }
  return "?";
}

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "shapes") return DatasetKind::shapes;
  if (name == "colored_digits") return DatasetKind::colored_digits;
  if (name == "shapes_variant") return DatasetKind::shapes_variant;
  throw Error(Errc::config, "unknown dataset kind '" + std::string(name) + "'");
}

std::string_view corruption_name(Corruption c) noexcept {
  switch (c) {
    case Corruption::blur: return "blur";
    case Corruption::contrast: return "contrast";
    case Corruption::noise: return "noise";
  }
  return "?";
}

Corruption parse_corruption(std::string_view name) {
  if (name == "blur") return Corruption::blur;
  if (name == "contrast") return Corruption::contrast;
  if (name == "noise") return Corruption::noise;
  throw Error(Errc::config, "unknown corruption '" + std::string(name) + "'");
}

void validate_config(const SyntheticDatasetConfig& c) {
  if (c.num_classes < 2) throw Error(Errc::config, "num_classes must be >= 2");
  if (c.image_size < 8) throw Error(Errc::config, "image_size must be >= 8");
  if (c.samples_per_class < 1) throw Error(Errc::config, "samples_per_class must be >= 1");
  if (c.channels != 1 && c.channels != 3) throw Error(Errc::config, "channels must be 1 or 3");
  if (!(c.jitter >= 0.0)) throw Error(Errc::config, "jitter must be >= 0");
  const std::size_t limit = c.kind == DatasetKind::colored_digits ? kMaxDigitClasses : kMaxShapeClasses;
  if (c.num_classes > limit) {
    throw Error(Errc::config, std::string(dataset_kind_name(c.kind)) + " supports at most " +
                                  std::to_string(limit) + " classes");
  }
  if (c.kind == DatasetKind::colored_digits && c.channels != 3) {
    throw Error(Errc::config, "colored_digits requires channels = 3");
  }
}

namespace {

// Signed distance helpers in pixel units; negative inside.
double box(double x, double y, double hx, double hy) {
  const double dx = std::abs(x) - hx, dy = std::abs(y) - hy;
  const double ox = std::max(dx, 0.0), oy = std::max(dy, 0.0);
  return std::sqrt(ox * ox + oy * oy) + std::min(std::max(dx, dy), 0.0);
}

double rotated_box(double x, double y, double hx, double hy, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return box(c * x + s * y, -s * x + c * y, hx, hy);
}

using Sdf = std::function<double(double, double)>;

Sdf shape_sdf(std::size_t cls, double r, bool variant) {
  const double t = 0.25 * r;  // bar half-thickness
  switch (cls) {
    case 0:  // horizontal bar | two thin horizontal bars
      if (!variant) return [=](double x, double y) { return box(x, y, r, t); };
      return [=](double x, double y) { return std::min(box(x, y - 1.6 * t, r, 0.5 * t), box(x, y + 1.6 * t, r, 0.5 * t)); };
    case 1:  // vertical bar | two thin vertical bars
      if (!variant) return [=](double x, double y) { return box(x, y, t, r); };
      return [=](double x, double y) { return std::min(box(x - 1.6 * t, y, 0.5 * t, r), box(x + 1.6 * t, y, 0.5 * t, r)); };
    case 2:  // plus | plus with an open center
      if (!variant) return [=](double x, double y) { return std::min(box(x, y, r, t), box(x, y, t, r)); };
      return [=](double x, double y) {
        return std::max(std::min(box(x, y, r, 0.6 * t), box(x, y, 0.6 * t, r)), -box(x, y, 1.5 * t, 1.5 * t));
      };
    case 3:  // disk | octagon
      if (!variant) return [=](double x, double y) { return std::sqrt(x * x + y * y) - r; };
      return [=](double x, double y) {
        return std::max(std::max(std::abs(x), std::abs(y)), (std::abs(x) + std::abs(y)) * std::numbers::sqrt2 / 2.0) - 0.92 * r;
      };
    case 4:  // ring | ring broken into arcs
      if (!variant) return [=](double x, double y) { return std::abs(std::sqrt(x * x + y * y) - 0.75 * r) - 0.22 * r; };
      return [=](double x, double y) {
        const double ring = std::abs(std::sqrt(x * x + y * y) - 0.75 * r) - 0.15 * r;
        const double a = std::atan2(y, x);
        const double gap = std::abs(std::sin(3.0 * a)) < 0.35 ? 1.0 : -1.0;
        return std::max(ring, gap);
      };
    case 5:  // X | thin X
      if (!variant) {
        return [=](double x, double y) {
          return std::min(rotated_box(x, y, r, t, std::numbers::pi / 4), rotated_box(x, y, r, t, -std::numbers::pi / 4));
        };
      }
      return [=](double x, double y) {
        return std::min(rotated_box(x, y, 0.8 * r, 0.45 * t, std::numbers::pi / 4),
                        rotated_box(x, y, 0.8 * r, 0.45 * t, -std::numbers::pi / 4));
      };
    case 6:  // square frame | corner brackets
      if (!variant) return [=](double x, double y) { return std::abs(box(x, y, 0.8 * r, 0.8 * r)) - 0.18 * r; };
      return [=](double x, double y) {
        const double frame = std::abs(box(x, y, 0.8 * r, 0.8 * r)) - 0.14 * r;
        return std::min(box(x, y, 0.35 * r, 2 * r), box(x, y, 2 * r, 0.35 * r)) < 0.0 ? 1.0 : frame;
      };
    case 7:  // filled diamond | diamond outline
      if (!variant) return [=](double x, double y) { return (std::abs(x) + std::abs(y) - r) / std::numbers::sqrt2; };
      return [=](double x, double y) { return std::abs((std::abs(x) + std::abs(y) - r) / std::numbers::sqrt2) - 0.15 * r; };
    default: break;
  }
  throw Error(Errc::config, "no shape for class " + std::to_string(cls));
}

Batch render_shapes(const SyntheticDatasetConfig& cfg, std::uint64_t seed, bool variant) {
  validate_config(cfg);
  Rng rng(seed);
  const std::size_t s = cfg.image_size;
  const std::size_t n = cfg.num_classes * cfg.samples_per_class;
  const double j = cfg.jitter;
  Batch b;
  b.images = Tensor({n, cfg.channels, s, s});
  b.labels.resize(n);
  const double half = static_cast<double>(s) / 2.0;
  std::size_t idx = 0;
  for (std::size_t cls = 0; cls < cfg.num_classes; ++cls) {
    for (std::size_t k = 0; k < cfg.samples_per_class; ++k, ++idx) {
      const double cx = half + rng.uniform(-1, 1) * 0.12 * j * static_cast<double>(s);
      const double cy = half + rng.uniform(-1, 1) * 0.12 * j * static_cast<double>(s);
      const double r = static_cast<double>(s) * (0.30 + 0.05 * j * rng.uniform(-1, 1));
      const double fg = std::clamp(0.8 + 0.15 * j * rng.uniform(-1, 1), 0.3, 1.0);
      const double bg = std::clamp(0.1 * j * rng.uniform(), 0.0, 0.3);
      const double pixel_noise = 0.03 * j;
      std::array<double, 3> gain{1.0, 1.0, 1.0};
      if (cfg.channels == 3) {
        for (double& g : gain) g = 0.8 + 0.2 * rng.uniform();
      }
      const Sdf sdf = shape_sdf(cls, r, variant);
      for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t x = 0; x < s; ++x) {
          const double d = sdf(static_cast<double>(x) + 0.5 - cx, static_cast<double>(y) + 0.5 - cy);
          const double cover = std::clamp(0.5 - d, 0.0, 1.0);
          const double base = bg + (fg - bg) * cover;
          for (std::size_t c = 0; c < cfg.channels; ++c) {
            const double v = base * gain[c] + pixel_noise * rng.normal();
            b.images[((idx * cfg.channels + c) * s + y) * s + x] = std::clamp(v, 0.0, 1.0);
          }
        }
      }
      b.labels[idx] = static_cast<std::uint32_t>(cls);
    }
  }
  return b;
}

constexpr std::array<std::array<const char*, 5>, 10> kDigitFont{{
    {"111", "101", "101", "101", "111"},
    {"010", "110", "010", "010", "111"},
    {"111", "001", "111", "100", "111"},
    {"111", "001", "111", "001", "111"},
    {"101", "101", "111", "001", "001"},
    {"111", "100", "111", "001", "111"},
    {"111", "100", "111", "101", "111"},
    {"111", "001", "001", "001", "001"},
    {"111", "101", "111", "101", "111"},
    {"111", "101", "111", "001", "111"},
}};

constexpr std::array<std::array<double, 3>, 10> kPalette{{
    {1.0, 0.1, 0.1},
    {0.1, 1.0, 0.1},
    {0.15, 0.3, 1.0},
    {1.0, 1.0, 0.1},
    {1.0, 0.1, 1.0},
    {0.1, 1.0, 1.0},
    {1.0, 0.55, 0.1},
    {0.55, 0.2, 1.0},
    {0.6, 1.0, 0.5},
    {1.0, 0.6, 0.7},
}};

}  // namespace

Batch gen_shapes(const SyntheticDatasetConfig& config, std::uint64_t seed) {
  if (config.kind != DatasetKind::shapes) throw Error(Errc::config, "gen_shapes needs kind = shapes");
  return render_shapes(config, seed, false);
}

Batch gen_shapes_variant(const SyntheticDatasetConfig& config, std::uint64_t seed) {
  if (config.kind == DatasetKind::colored_digits) throw Error(Errc::config, "shape variant needs a shapes config");
  return render_shapes(config, seed, true);
}

std::vector<double> class_color(std::size_t class_index) {
  const auto& c = kPalette.at(class_index % kPalette.size());
  return {c[0], c[1], c[2]};
}

Batch gen_colored_digits(const SyntheticDatasetConfig& cfg, double correlation_strength, std::uint64_t seed) {
  validate_config(cfg);
  if (cfg.kind != DatasetKind::colored_digits) throw Error(Errc::config, "gen_colored_digits needs kind = colored_digits");
  if (!(correlation_strength >= 0.0 && correlation_strength <= 1.0)) {
    throw Error(Errc::config, "correlation_strength must lie in [0, 1]");
  }
  Rng rng(seed);
  const std::size_t s = cfg.image_size;
  const std::size_t n = cfg.num_classes * cfg.samples_per_class;
  const double j = cfg.jitter;
  const std::size_t scale = std::max<std::size_t>(1, s / 8);
  const std::size_t gw = 3 * scale, gh = 5 * scale;
  Batch b;
  b.images = Tensor({n, 3, s, s});
  b.labels.resize(n);
  std::size_t idx = 0;
  for (std::size_t cls = 0; cls < cfg.num_classes; ++cls) {
    for (std::size_t k = 0; k < cfg.samples_per_class; ++k, ++idx) {
      const std::size_t color = rng.bernoulli(correlation_strength) ? cls : rng.below(cfg.num_classes);
      const auto& tint = kPalette[color];
      const double max_dx = static_cast<double>(s - gw), max_dy = static_cast<double>(s - gh);
      const double cx = std::clamp(max_dx / 2.0 + rng.uniform(-1, 1) * 0.25 * j * max_dx, 0.0, max_dx);
      const double cy = std::clamp(max_dy / 2.0 + rng.uniform(-1, 1) * 0.25 * j * max_dy, 0.0, max_dy);
      const auto ox = static_cast<std::size_t>(std::lround(cx));
      const auto oy = static_cast<std::size_t>(std::lround(cy));
      const double fg = std::clamp(0.85 + 0.15 * j * rng.uniform(-1, 1), 0.3, 1.0);
      for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t x = 0; x < s; ++x) {
          double on = 0.0;
          if (x >= ox && x < ox + gw && y >= oy && y < oy + gh) {
            on = kDigitFont[cls][(y - oy) / scale][(x - ox) / scale] == '1' ? 1.0 : 0.0;
          }
          for (std::size_t c = 0; c < 3; ++c) {
            const double v = on * fg * tint[c] + 0.03 * j * rng.normal();
            b.images[((idx * 3 + c) * s + y) * s + x] = std::clamp(v, 0.0, 1.0);
          }
        }
      }
      b.labels[idx] = static_cast<std::uint32_t>(cls);
    }
  }
  return b;
}

Batch generate_dataset(const SyntheticDatasetConfig& config, std::uint64_t seed, double correlation_strength) {
  switch (config.kind) {
    case DatasetKind::shapes: return gen_shapes(config, seed);
    case DatasetKind::shapes_variant: return gen_shapes_variant(config, seed);
    case DatasetKind::colored_digits: return gen_colored_digits(config, correlation_strength, seed);
  }
  throw Error(Errc::config, "unknown dataset kind");
}

Batch corrupt(const Batch& batch, Corruption kind, int severity, std::uint64_t seed) {
  if (severity < 1 || severity > 3) throw Error(Errc::range, "severity must be 1, 2 or 3");
  validate_batch(batch);
  const MapShape ms = batch.sample_shape();
  const auto& src = batch.images.values();
  const auto [lo_it, hi_it] = std::minmax_element(src.begin(), src.end());
  const double lo = *lo_it, hi = *hi_it;
  Batch out = batch;
  auto& dst = out.images.values();
  const std::size_t plane = ms.height * ms.width;
  const std::size_t per_sample = ms.size();
  const std::size_t sev = static_cast<std::size_t>(severity - 1);

  switch (kind) {
    case Corruption::blur: {
      const auto radius = static_cast<std::ptrdiff_t>(severity);
      const auto h = static_cast<std::ptrdiff_t>(ms.height), w = static_cast<std::ptrdiff_t>(ms.width);
      for (std::size_t p = 0; p < batch.size() * ms.channels; ++p) {
        const double* in = src.data() + p * plane;
        double* o = dst.data() + p * plane;
        for (std::ptrdiff_t y = 0; y < h; ++y) {
          for (std::ptrdiff_t x = 0; x < w; ++x) {
            double sum = 0.0;
            int count = 0;
            for (std::ptrdiff_t dy = -radius; dy <= radius; ++dy) {
              for (std::ptrdiff_t dx = -radius; dx <= radius; ++dx) {
                const auto yy = y + dy, xx = x + dx;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                sum += in[yy * w + xx];
                ++count;
              }
            }
            o[y * w + x] = sum / count;
          }
        }
      }
      break;
    }
    case Corruption::contrast: {
      constexpr std::array<double, 3> factor{0.7, 0.4, 0.15};
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const double* in = src.data() + i * per_sample;
        double* o = dst.data() + i * per_sample;
        const auto [mn, mx] = std::minmax_element(in, in + per_sample);
        if (*mn == *mx) continue;  // constant image is already at its mean
        double mean = 0.0;
        for (std::size_t q = 0; q < per_sample; ++q) mean += in[q];
        mean /= static_cast<double>(per_sample);
        for (std::size_t q = 0; q < per_sample; ++q) o[q] = mean + factor[sev] * (in[q] - mean);
      }
      break;
    }
    case Corruption::noise: {
      constexpr std::array<double, 3> sigma{0.05, 0.15, 0.3};
      Rng rng(seed);
      const double sd = sigma[sev] * (hi - lo);
      for (double& v : dst) v += sd * rng.normal();
      break;
    }
  }
  for (double& v : dst) v = std::clamp(v, lo, hi);
  return out;
}

NoisyBatch inject_label_noise(const Batch& batch, double ratio, std::size_t num_classes, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error(Errc::range, "noise ratio must lie in [0, 1]");
  if (num_classes < 2) throw Error(Errc::config, "label noise needs at least two classes");
  validate_batch(batch, num_classes);
  const std::size_t n = batch.size();
  const auto flips = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  Rng rng(seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  // Partial Fisher-Yates: the first `flips` slots are a uniform sample without replacement.
  for (std::size_t i = 0; i < flips; ++i) std::swap(order[i], order[i + rng.below(n - i)]);
  NoisyBatch out{batch, std::vector<bool>(n, false)};
  for (std::size_t i = 0; i < flips; ++i) {
    const std::size_t idx = order[i];
    const auto offset = 1 + rng.below(num_classes - 1);
    out.batch.labels[idx] = static_cast<std::uint32_t>((batch.labels[idx] + offset) % num_classes);
    out.flipped[idx] = true;
  }
  return out;
}

Batch concat(const std::vector<Batch>& parts) {
  if (parts.empty()) throw Error(Errc::empty_input, "nothing to concatenate");
  const MapShape ms = parts.front().sample_shape();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.sample_shape() != ms) throw Error(Errc::input_shape, "cannot concatenate batches of different shapes");
    n += p.size();
  }
  Batch out;
  std::vector<double> data;
  data.reserve(n * ms.size());
  for (const auto& p : parts) {
    data.insert(data.end(), p.images.values().begin(), p.images.values().end());
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  out.images = Tensor({n, ms.channels, ms.height, ms.width}, std::move(data));
  return out;
}

}  // namespace dps
