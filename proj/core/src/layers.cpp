#include "dps/layers.hpp"

#include "dps/error.hpp"

namespace dps::layers {
namespace {

MapShape shape_of(const Tensor& t) {
  if (t.rank() != 3) throw Error(Errc::input_shape, "expected [C, H, W], got " + shape_string(t.shape()));
  return {t.dim(0), t.dim(1), t.dim(2)};
}

}  // namespace

MapShape conv_output_shape(const MapShape& in, const LayerSpec& spec) {
  if (spec.kernel == 0 || spec.stride == 0 || spec.out_channels == 0) {
    throw Error(Errc::config, "conv layer needs positive kernel, stride and out_channels");
  }
  const std::size_t ph = in.height + 2 * spec.padding;
  const std::size_t pw = in.width + 2 * spec.padding;
  if (ph < spec.kernel || pw < spec.kernel) {
    throw Error(Errc::input_shape, "conv kernel larger than padded input");
  }
  return {spec.out_channels, (ph - spec.kernel) / spec.stride + 1, (pw - spec.kernel) / spec.stride + 1};
}

Tensor conv2d(const Tensor& in, const LayerSpec& spec, std::span<const double> w,
              std::span<const double> b) {
  const MapShape is = shape_of(in);
  const MapShape os = conv_output_shape(is, spec);
  const std::size_t k = spec.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  const auto ih = static_cast<std::ptrdiff_t>(is.height);
  const auto iw = static_cast<std::ptrdiff_t>(is.width);
  Tensor out(os.dims());
  const double* x = in.data().data();
  double* y = out.data().data();
  for (std::size_t o = 0; o < os.channels; ++o) {
    double* yo = y + o * os.height * os.width;
    for (std::size_t i = 0; i < os.height * os.width; ++i) yo[i] = b[o];
    for (std::size_t c = 0; c < is.channels; ++c) {
      const double* xc = x + c * is.height * is.width;
      const double* wk = w.data() + (o * is.channels + c) * k * k;
      for (std::size_t kh = 0; kh < k; ++kh) {
        for (std::size_t kw = 0; kw < k; ++kw) {
          const double wv = wk[kh * k + kw];
          for (std::size_t oh = 0; oh < os.height; ++oh) {
            const auto r = static_cast<std::ptrdiff_t>(oh * spec.stride + kh) - pad;
            if (r < 0 || r >= ih) continue;
            const double* xrow = xc + r * iw;
            double* yrow = yo + oh * os.width;
            for (std::size_t ow = 0; ow < os.width; ++ow) {
              const auto col = static_cast<std::ptrdiff_t>(ow * spec.stride + kw) - pad;
              if (col < 0 || col >= iw) continue;
              yrow[ow] += wv * xrow[col];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor conv2d_backward(const Tensor& in, const LayerSpec& spec, std::span<const double> w,
                       const Tensor& grad_out, std::span<double> dw, std::span<double> db) {
  const MapShape is = shape_of(in);
  const MapShape os = conv_output_shape(is, spec);
  if (shape_of(grad_out) != os) throw Error(Errc::input_shape, "conv gradient shape mismatch");
  const std::size_t k = spec.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  const auto ih = static_cast<std::ptrdiff_t>(is.height);
  const auto iw = static_cast<std::ptrdiff_t>(is.width);
  Tensor grad_in(is.dims());
  const double* x = in.data().data();
  const double* g = grad_out.data().data();
  double* gx = grad_in.data().data();
  for (std::size_t o = 0; o < os.channels; ++o) {
    const double* go = g + o * os.height * os.width;
    double bsum = 0.0;
    for (std::size_t i = 0; i < os.height * os.width; ++i) bsum += go[i];
    db[o] += bsum;
    for (std::size_t c = 0; c < is.channels; ++c) {
      const double* xc = x + c * is.height * is.width;
      double* gxc = gx + c * is.height * is.width;
      const std::size_t widx = (o * is.channels + c) * k * k;
      for (std::size_t kh = 0; kh < k; ++kh) {
        for (std::size_t kw = 0; kw < k; ++kw) {
          const double wv = w[widx + kh * k + kw];
          double acc = 0.0;
          for (std::size_t oh = 0; oh < os.height; ++oh) {
            const auto r = static_cast<std::ptrdiff_t>(oh * spec.stride + kh) - pad;
            if (r < 0 || r >= ih) continue;
            const double* xrow = xc + r * iw;
            double* gxrow = gxc + r * iw;
            const double* grow = go + oh * os.width;
            for (std::size_t ow = 0; ow < os.width; ++ow) {
              const auto col = static_cast<std::ptrdiff_t>(ow * spec.stride + kw) - pad;
              if (col < 0 || col >= iw) continue;
              acc += grow[ow] * xrow[col];
              gxrow[col] += grow[ow] * wv;
            }
          }
          dw[widx + kh * k + kw] += acc;
        }
      }
    }
  }
  return grad_in;
}

Tensor relu(const Tensor& in) {
  Tensor out = in;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& in, const Tensor& grad_out) {
  if (in.shape() != grad_out.shape()) throw Error(Errc::input_shape, "relu gradient shape mismatch");
  Tensor grad_in(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) grad_in[i] = in[i] > 0.0 ? grad_out[i] : 0.0;
  return grad_in;
}

namespace {

// Flat index of the first maximum in the 2x2 window feeding (c, oh, ow).
std::size_t pool_argmax(const Tensor& in, const MapShape& is, std::size_t c, std::size_t oh,
                        std::size_t ow) {
  std::size_t best = (c * is.height + 2 * oh) * is.width + 2 * ow;
  for (std::size_t dh = 0; dh < 2; ++dh) {
    for (std::size_t dw = 0; dw < 2; ++dw) {
      const std::size_t idx = (c * is.height + 2 * oh + dh) * is.width + 2 * ow + dw;
      if (in[idx] > in[best]) best = idx;
    }
  }
  return best;
}

}  // namespace

Tensor maxpool2(const Tensor& in) {
  const MapShape is = shape_of(in);
  if (is.height < 2 || is.width < 2) throw Error(Errc::input_shape, "maxpool input smaller than 2x2");
  const MapShape os{is.channels, is.height / 2, is.width / 2};
  Tensor out(os.dims());
  for (std::size_t c = 0; c < os.channels; ++c)
    for (std::size_t oh = 0; oh < os.height; ++oh)
      for (std::size_t ow = 0; ow < os.width; ++ow) out.at(c, oh, ow) = in[pool_argmax(in, is, c, oh, ow)];
  return out;
}

Tensor maxpool2_backward(const Tensor& in, const Tensor& grad_out) {
  const MapShape is = shape_of(in);
  const MapShape os{is.channels, is.height / 2, is.width / 2};
  if (shape_of(grad_out) != os) throw Error(Errc::input_shape, "maxpool gradient shape mismatch");
  Tensor grad_in(is.dims());
  for (std::size_t c = 0; c < os.channels; ++c)
    for (std::size_t oh = 0; oh < os.height; ++oh)
      for (std::size_t ow = 0; ow < os.width; ++ow)
        grad_in[pool_argmax(in, is, c, oh, ow)] += grad_out.at(c, oh, ow);
  return grad_in;
}

Tensor gap(const Tensor& in) {
  const MapShape is = shape_of(in);
  const std::size_t z = is.height * is.width;
  Tensor out({is.channels, 1, 1});
  for (std::size_t c = 0; c < is.channels; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < z; ++i) s += in[c * z + i];
    out[c] = s / static_cast<double>(z);
  }
  return out;
}

Tensor gap_backward(const Tensor& in, const Tensor& grad_out) {
  const MapShape is = shape_of(in);
  if (grad_out.size() != is.channels) throw Error(Errc::input_shape, "gap gradient shape mismatch");
  const std::size_t z = is.height * is.width;
  Tensor grad_in(is.dims());
  for (std::size_t c = 0; c < is.channels; ++c) {
    const double g = grad_out[c] / static_cast<double>(z);
    for (std::size_t i = 0; i < z; ++i) grad_in[c * z + i] = g;
  }
  return grad_in;
}

Tensor linear(const Tensor& in, std::size_t out, std::span<const double> w, std::span<const double> b) {
  const std::size_t n = in.size();
  if (w.size() != out * n || b.size() != out) throw Error(Errc::input_shape, "linear parameter size mismatch");
  Tensor y({out, 1, 1});
  for (std::size_t o = 0; o < out; ++o) {
    double s = b[o];
    const double* row = w.data() + o * n;
    for (std::size_t i = 0; i < n; ++i) s += row[i] * in[i];
    y[o] = s;
  }
  return y;
}

Tensor linear_backward(const Tensor& in, std::size_t out, std::span<const double> w,
                       const Tensor& grad_out, std::span<double> dw, std::span<double> db) {
  const std::size_t n = in.size();
  if (grad_out.size() != out) throw Error(Errc::input_shape, "linear gradient shape mismatch");
  Tensor grad_in(in.shape());
  for (std::size_t o = 0; o < out; ++o) {
    const double g = grad_out[o];
    db[o] += g;
    const double* row = w.data() + o * n;
    double* drow = dw.data() + o * n;
    for (std::size_t i = 0; i < n; ++i) {
      drow[i] += g * in[i];
      grad_in[i] += g * row[i];
    }
  }
  return grad_in;
}

}  // namespace dps::layers
