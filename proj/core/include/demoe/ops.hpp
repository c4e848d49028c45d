#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "demoe/tensor.hpp"

// Forward and backward kernels over plain tensors. These carry no graph
// state; ad:: wraps them into recorded operations.
namespace demoe::ops {

enum class ConvMode {
  pointwise_1x1,     // w: (Cout, Cin, 1, 1)
  depthwise_3x3,     // w: (C, 1, 3, 3), padding 1
  strided_2x2_down,  // w: (Cout, Cin, 2, 2), stride 2
};

enum class Padding { zero, reflect };

/// Running total of multiply-accumulates performed by conv2d on this thread.
std::uint64_t& conv_mac_counter() noexcept;

/// Multiply-accumulates of one conv2d call on an input of shape `x`.
std::uint64_t conv2d_macs(const Shape& x, std::size_t out_channels, ConvMode mode) noexcept;

/// Output shape of conv2d, validating every operand. Throws ShapeError.
Shape conv2d_shape(const Shape& x, const Shape& w, const Shape& b, ConvMode mode);

/// `b` may be empty (no bias) or hold one value per output channel.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, ConvMode mode,
              Padding padding = Padding::zero);

/// Accumulates (+=) into dx / dw / db; any of them may be null.
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dout, ConvMode mode,
                     Tensor* dx, Tensor* dw, Tensor* db);

struct LayerNormStats {
  std::vector<double> mean;  // one per (n, h, w) site
  std::vector<double> rstd;
};

/// Normalizes the channel vector at every spatial site.
Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps,
                           LayerNormStats* stats = nullptr);

void layer_norm_channels_backward(const Tensor& x, const Tensor& gamma, const LayerNormStats& stats,
                                  const Tensor& dout, Tensor* dx, Tensor* dgamma, Tensor* dbeta);

/// First channel half times second channel half.
Tensor simple_gate(const Tensor& x);
void simple_gate_backward(const Tensor& x, const Tensor& dout, Tensor& dx);

/// (N, C, H, W) -> (N, C, 1, 1) spatial mean.
Tensor global_avg_pool(const Tensor& x);
void global_avg_pool_backward(const Shape& x_shape, const Tensor& dout, Tensor& dx);

/// Broadcast shape check: every extent of b equals a's or is 1.
bool broadcastable(const Shape& a, const Shape& b) noexcept;

/// Elementwise a * b with b broadcast over its unit extents.
Tensor mul_broadcast(const Tensor& a, const Tensor& b);
void mul_broadcast_backward(const Tensor& a, const Tensor& b, const Tensor& dout, Tensor* da,
                            Tensor* db);

/// Elementwise a + b with b broadcast over its unit extents.
Tensor add_broadcast(const Tensor& a, const Tensor& b);
void add_broadcast_backward(const Shape& b_shape, const Tensor& dout, Tensor* da, Tensor* db);

enum class ShuffleDirection { up, down };

/// up: (N, C, H, W) -> (N, C/r^2, rH, rW); down is the exact inverse.
Tensor pixel_shuffle(const Tensor& x, ShuffleDirection direction, std::size_t r = 2);

/// Numerically stable softmax of a single vector.
std::vector<float> softmax(std::span<const float> logits);

/// Softmax over the channel axis at every (n, h, w) site.
Tensor softmax_channels(const Tensor& x);
void softmax_channels_backward(const Tensor& y, const Tensor& dout, Tensor& dx);

}  // namespace demoe::ops
