#pragma once

#include <span>

#include "dps/model.hpp"
#include "dps/tensor.hpp"

// Per-layer forward and backward kernels on single [C, H, W] maps.
// Backward kernels accumulate parameter gradients into dw/db and return d/d(input).
namespace dps::layers {

MapShape conv_output_shape(const MapShape& in, const LayerSpec& spec);

Tensor conv2d(const Tensor& in, const LayerSpec& spec, std::span<const double> w,
              std::span<const double> b);
Tensor conv2d_backward(const Tensor& in, const LayerSpec& spec, std::span<const double> w,
                       const Tensor& grad_out, std::span<double> dw, std::span<double> db);

Tensor relu(const Tensor& in);
Tensor relu_backward(const Tensor& in, const Tensor& grad_out);

/// 2x2 window, stride 2, floor semantics; ties route to the first maximum in row-major order.
Tensor maxpool2(const Tensor& in);
Tensor maxpool2_backward(const Tensor& in, const Tensor& grad_out);

/// [C, H, W] -> [C, 1, 1]
Tensor gap(const Tensor& in);
Tensor gap_backward(const Tensor& in, const Tensor& grad_out);

/// Flattens the input and applies y = W x + b; output is [out, 1, 1].
Tensor linear(const Tensor& in, std::size_t out, std::span<const double> w, std::span<const double> b);
Tensor linear_backward(const Tensor& in, std::size_t out, std::span<const double> w,
                       const Tensor& grad_out, std::span<double> dw, std::span<double> db);

}  // namespace dps::layers
