#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "demoe/ops.hpp"
#include "demoe/tensor.hpp"

// Reverse-mode automatic differentiation over the operator set the network
// needs. A Tape owns every value produced during a forward pass; a Var is a
// handle into it.
namespace demoe::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  /// With `grad_enabled == false` no backward closures are recorded, which is
  /// what inference uses.
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);

  /// Records an operation result. `fn` runs during backward() when the node
  /// has received gradient; it is dropped if no parent requires gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> parents, BackwardFn fn);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  bool grad_enabled() const noexcept { return grad_enabled_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::span<const std::uint32_t> parents(Var v) const;

  /// Gradient buffer of a node, allocated as zeros on first access.
  Tensor& grad(Var v);
  Tensor& grad(std::uint32_t id);
  bool has_grad(Var v) const;

  /// dLoss/dv after backward(); zeros when nothing reached v.
  Tensor grad_or_zero(Var v) const;

  /// Seeds dLoss/dLoss = 1 and visits nodes in reverse recording order.
  /// Throws ArgumentError if `loss` is foreign to this tape or not a scalar.
  void backward(Var loss);

  /// Releases all nodes; previously issued Vars become invalid.
  void clear();

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::uint32_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  void check(Var v) const;

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

// Differentiable operations. All operands must live on the same tape.

Var conv2d(Var x, Var w, Var b, ops::ConvMode mode);
Var conv2d(Var x, Var w, ops::ConvMode mode);  // no bias
Var layer_norm_channels(Var x, Var gamma, Var beta, float eps = 1e-6f);
Var simple_gate(Var x);
Var global_avg_pool(Var x);
/// x * broadcast(pointwise_conv(global_avg_pool(x), w, b)).
Var simplified_channel_attention(Var x, Var w, Var b);
Var pixel_shuffle(Var x, ops::ShuffleDirection direction, std::size_t r = 2);
Var softmax_channels(Var x);
Var mul(Var a, Var b);  // b broadcast over unit extents
Var add(Var a, Var b);  // b broadcast over unit extents
Var sum(Var x);         // scalar (1, 1, 1, 1)

/// out[n] = sum over i with mask[n][i] of gates[n, i] * experts[i][n].
/// The first selected term initializes the sum, so a single selected
/// expert with gate 1 is reproduced bit for bit.
Var gated_sum(std::span<const Var> experts, Var gates, const std::vector<std::vector<bool>>& mask);

/// Mean absolute difference, scalar output.
Var l1_loss(Var pred, Var target);

/// Mean over the batch of -log(max(p[n, label[n]], 1e-12)); p is (N, K, 1, 1).
Var cross_entropy_from_probs(Var probs, std::span<const int> labels);

/// Weighted sum of scalar terms.
Var weighted_sum(std::span<const Var> scalars, std::span<const float> weights);

}  // namespace demoe::ad
