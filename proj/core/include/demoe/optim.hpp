#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "demoe/tensor.hpp"

namespace demoe::optim {

struct AdamWConfig {
  float beta1 = 0.9f;
  float beta2 = 0.9f;
  float eps = 1e-8f;
  float weight_decay = 0.0f;
};

/// AdamW with decoupled weight decay and bias-corrected moments.
class AdamW {
 public:
  AdamW(AdamWConfig config, std::span<const Shape> param_shapes);

  /// One update. `grads[i]` may be empty, meaning "no gradient" (treated as
  /// zero). Throws ShapeError on misaligned inputs, ArgumentError if lr <= 0.
  void step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, float lr);

  std::int64_t steps() const noexcept { return t_; }
  const AdamWConfig& config() const noexcept { return config_; }
  const Tensor& first_moment(std::size_t i) const { return m_.at(i); }
  const Tensor& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  AdamWConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::int64_t t_ = 0;
};

/// lr_min + (lr0 - lr_min) * (1 + cos(pi * t / T)) / 2.
float cosine_anneal(float lr0, float lr_min, std::int64_t t, std::int64_t total);

/// Scales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor* const> grads, double max_norm);

}  // namespace demoe::optim
