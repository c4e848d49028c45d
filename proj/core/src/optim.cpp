#include "demoe/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "demoe/error.hpp"

namespace demoe::optim {

AdamW::AdamW(AdamWConfig config, std::span<const Shape> param_shapes) : config_(config) {
  if (!(config.beta1 >= 0.0f && config.beta1 < 1.0f) || !(config.beta2 >= 0.0f && config.beta2 < 1.0f)) {
    throw ArgumentError("AdamW: betas must lie in [0, 1)");
  }
  if (!(config.eps > 0.0f)) throw ArgumentError("AdamW: eps must be positive");
  if (config.weight_decay < 0.0f) throw ArgumentError("AdamW: weight decay must be non-negative");
  m_.reserve(param_shapes.size());
  v_.reserve(param_shapes.size());
  for (const Shape& s : param_shapes) {
    m_.emplace_back(s);
    v_.emplace_back(s);
  }
}

void AdamW::step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, float lr) {
  if (!(lr > 0.0f)) throw ArgumentError("AdamW: learning rate must be positive");
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ShapeError("AdamW: expected " + std::to_string(m_.size()) + " parameters, got " +
                     std::to_string(params.size()) + " parameters and " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!(params[i]->shape() == m_[i].shape())) {
      throw ShapeError("AdamW: parameter " + std::to_string(i) + " has shape " +
                       params[i]->shape().str() + ", state has " + m_[i].shape().str());
    }
    if (grads[i] != nullptr && !grads[i]->empty() && !(grads[i]->shape() == m_[i].shape())) {
      throw ShapeError("AdamW: gradient " + std::to_string(i) + " has shape " +
                       grads[i]->shape().str() + ", parameter has " + m_[i].shape().str());
    }
  }

  ++t_;
  const float b1 = config_.beta1;
  const float b2 = config_.beta2;
  const auto bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(b1), static_cast<double>(t_)));
  const auto bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(b2), static_cast<double>(t_)));
  const float decay = 1.0f - lr * config_.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    const bool has_grad = grads[i] != nullptr && !grads[i]->empty();
    for (std::size_t k = 0; k < p.numel(); ++k) {
      const float g = has_grad ? (*grads[i])[k] : 0.0f;
      if (config_.weight_decay != 0.0f) p[k] *= decay;
      m[k] = b1 * m[k] + (1.0f - b1) * g;
      v[k] = b2 * v[k] + (1.0f - b2) * g * g;
      const float mhat = m[k] / bc1;
      const float vhat = v[k] / bc2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

float cosine_anneal(float lr0, float lr_min, std::int64_t t, std::int64_t total) {
  if (!(lr_min > 0.0f) || lr0 < lr_min) {
    throw ArgumentError("cosine_anneal: require lr0 >= lr_min > 0");
  }
  if (total < 0 || t < 0) throw ArgumentError("cosine_anneal: steps must be non-negative");
  if (t > total) {
    throw ArgumentError("cosine_anneal: step " + std::to_string(t) + " exceeds total " +
                        std::to_string(total));
  }
  if (total == 0) return lr0;
  const double progress = static_cast<double>(t) / static_cast<double>(total);
  const double lr = lr_min + 0.5 * (static_cast<double>(lr0) - lr_min) *
                                 (1.0 + std::cos(std::numbers::pi * progress));
  return static_cast<float>(lr);
}

double clip_grad_norm(std::span<Tensor* const> grads, double max_norm) {
  double sq = 0.0;
  for (const Tensor* g : grads) {
    if (g == nullptr) continue;
    for (float v : g->data()) sq += static_cast<double>(v) * v;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto scale = static_cast<float>(max_norm / norm);
    for (Tensor* g : grads) {
      if (g == nullptr) continue;
      for (float& v : g->data()) v *= scale;
    }
  }
  return norm;
}

}  // namespace demoe::optim
