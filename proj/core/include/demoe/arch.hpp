#pragma once

#include <cstdint>
#include <string>

namespace demoe::net {

/// How the gated expert sum is merged with the MoE block input h.
enum class FusionMode : std::uint8_t {
  weighted_sum = 0,          // sum_i w_i e_i(h)
  addition_residual = 1,     // h + sum_i w_i e_i(h)
  attention_connection = 2,  // h * sum_i w_i e_i(h)
};

std::string to_string(FusionMode m);
FusionMode fusion_mode_from_string(const std::string& s);

struct ArchConfig {
  std::uint32_t base_width = 8;
  std::uint32_t num_levels = 2;
  std::uint32_t enc_blocks = 1;  // per encoder level
  std::uint32_t mid_blocks = 1;
  std::uint32_t dec_blocks = 1;  // MoE blocks per decoder level
  std::uint32_t num_experts = 5; // N: router outputs / degradation classes
  std::uint32_t expert_slots = 5;  // experts instantiated per MoE block: 1 or N
  std::uint32_t top_k = 1;
  FusionMode fusion = FusionMode::weighted_sum;
  bool router = true;

  /// Throws ArgumentError on any inconsistent field.
  void validate() const;

  std::uint32_t width(std::uint32_t level) const { return base_width << level; }
  std::uint32_t deep_width() const { return width(num_levels); }

  bool operator==(const ArchConfig&) const = default;

  /// base_width 8, two levels, one block per stage, N = 5.
  static ArchConfig toy();
  /// base_width 32, four levels, 2 encoder / 3 middle / 3 decoder blocks, N = 5.
  static ArchConfig full();
};

}  // namespace demoe::net
