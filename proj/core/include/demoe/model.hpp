#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "demoe/arch.hpp"
#include "demoe/autodiff.hpp"
#include "demoe/checkpoint.hpp"

namespace demoe::net {

struct ParamSpec {
  std::string name;
  Shape shape;
  Taxonomy taxonomy = Taxonomy::other;
  enum class Init { uniform_fan_in, zeros, ones } init = Init::zeros;
};

/// Every parameter the architecture defines, in canonical order.
std::vector<ParamSpec> parameter_specs(const ArchConfig& config);

/// Fresh checkpoint: conv weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases
/// zero, norm scales one, residual scales zero.
Checkpoint init_checkpoint(const ArchConfig& config, std::uint64_t seed);

/// Verifies names, shapes and taxonomy tags against parameter_specs().
/// Throws ArgumentError naming the first discrepancy.
void check_architecture(const Checkpoint& ckpt);

/// Name prefixes of parameter groups.
bool is_encoder_param(std::string_view name);  // intro, enc.*, down.*
bool is_router_param(std::string_view name);   // router.*

/// Places a checkpoint's records on a tape as leaves.
class ParamBinder {
 public:
  using Predicate = std::function<bool(const std::string&)>;

  /// `trainable` selects which leaves require gradient; null means none.
  ParamBinder(ad::Tape& tape, const Checkpoint& ckpt, const Predicate& trainable = nullptr);

  ad::Var operator()(std::string_view name) const;
  const Checkpoint& checkpoint() const noexcept { return *ckpt_; }
  std::span<const ad::Var> vars() const noexcept { return vars_; }
  ad::Tape& tape() const noexcept { return *tape_; }

 private:
  ad::Tape* tape_;
  const Checkpoint* ckpt_;
  std::vector<ad::Var> vars_;
};

/// Probability vector over the N experts for one sample.
struct RouterWeights {
  std::vector<float> w;
};

struct ExpertSelection {
  enum class Mode { automatic, manual };
  Mode mode = Mode::automatic;
  std::vector<std::size_t> indices;
  std::vector<float> weights;  // renormalized over `indices`
};

/// The k largest entries of w (ties to the lower index), renormalized.
ExpertSelection select_top_k(std::span<const float> w, std::size_t k);
/// One-hot selection of `expert` with weight 1.
ExpertSelection select_manual(std::size_t expert, std::size_t num_experts);

/// How the decoder gate is formed.
struct Gating {
  enum class Kind {
    soft,    // training: every expert, weights straight from the router
    top_k,   // inference: k largest router weights, renormalized
    manual,  // user-forced single expert
  };
  Kind kind = Kind::top_k;
  std::size_t k = 1;
  std::size_t expert = 0;

  static Gating soft() { return {Kind::soft, 0, 0}; }
  static Gating top(std::size_t k) { return {Kind::top_k, k, 0}; }
  static Gating manual_expert(std::size_t e) { return {Kind::manual, 1, e}; }
};

struct EncoderOutput {
  std::vector<ad::Var> skips;  // one per level, full to coarse
  ad::Var deep;
};

ad::Var naf_block_forward(ad::Var h, const ParamBinder& params, const std::string& prefix);

EncoderOutput encoder_forward(ad::Var image, const ParamBinder& params);

/// (N, num_experts, 1, 1) probabilities. `logit_noise`, when given, is added
/// to the logits before the softmax.
ad::Var router_forward(ad::Var deep, const ParamBinder& params, const Tensor* logit_noise = nullptr);

/// Gate tensor and per-sample mask for a batch of router outputs.
struct GateBatch {
  Tensor gates;                         // (N, slots, 1, 1)
  std::vector<std::vector<bool>> mask;  // [N][slots]
  std::vector<ExpertSelection> selections;
};

GateBatch make_gates(const Tensor& router_probs, const Gating& gating, std::size_t slots);

/// One MoE block: gated expert sum merged with h per `fusion`. With a single
/// expert slot the gate is bypassed and the expert output is used directly.
ad::Var moe_block_forward(ad::Var h, std::optional<ad::Var> gates,
                          const std::vector<std::vector<bool>>& mask, const ParamBinder& params,
                          const std::string& prefix, std::size_t slots, FusionMode fusion);

struct ForwardResult {
  ad::Var restored;
  std::optional<ad::Var> router;  // (N, num_experts, 1, 1)
  std::vector<ExpertSelection> selections;
};

/// Encoder, router, middle blocks, MoE decoder and the global residual.
ForwardResult demoe_forward(ad::Var image, const ParamBinder& params, const Gating& gating,
                            const Tensor* logit_noise = nullptr);

/// Inference convenience: returns restored images and per-sample router
/// weights. `override_expert` forces a one-hot gate.
struct Inference {
  Tensor restored;
  std::vector<RouterWeights> weights;
  std::vector<ExpertSelection> selections;
};

Inference demoe_infer(const Checkpoint& ckpt, const Tensor& image, std::size_t k,
                      std::optional<std::size_t> override_expert = std::nullopt);

/// Single-expert baseline holding expert `expert`'s decoder parameters and no
/// router.
Checkpoint extract_expert(const Checkpoint& ckpt, std::size_t expert);

/// Multi-expert checkpoint whose experts are all copies of the single decoder
/// path of `single`; encoder, router and shared decoder layers are copied.
Checkpoint replicate_experts(const Checkpoint& single, std::size_t num_experts);

}  // namespace demoe::net
