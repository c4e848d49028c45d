#include "demoe/arch.hpp"

#include "demoe/error.hpp"

namespace demoe::net {

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::weighted_sum: return "weighted_sum";
    case FusionMode::addition_residual: return "addition_residual";
    case FusionMode::attention_connection: return "attention_connection";
  }
  return "unknown";
}

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "weighted_sum") return FusionMode::weighted_sum;
  if (s == "addition_residual") return FusionMode::addition_residual;
  if (s == "attention_connection") return FusionMode::attention_connection;
  throw ArgumentError("unknown fusion mode '" + s + "'");
}

void ArchConfig::validate() const {
  if (base_width == 0) throw ArgumentError("arch: base_width must be positive");
  if (num_levels == 0 || num_levels > 8) throw ArgumentError("arch: num_levels must be in [1, 8]");
  if (num_experts == 0) throw ArgumentError("arch: num_experts must be positive");
  if (expert_slots != 1 && expert_slots != num_experts) {
    throw ArgumentError("arch: expert_slots must be 1 or num_experts (" +
                        std::to_string(num_experts) + "), got " + std::to_string(expert_slots));
  }
  if (top_k == 0 || top_k > num_experts) {
    throw ArgumentError("arch: top_k must be in [1, " + std::to_string(num_experts) + "], got " +
                        std::to_string(top_k));
  }
  if (expert_slots > 1 && !router) {
    throw ArgumentError("arch: a multi-expert decoder needs a router");
  }
  if (static_cast<std::uint8_t>(fusion) > 2) throw ArgumentError("arch: invalid fusion mode");
}

ArchConfig ArchConfig::toy() {
  ArchConfig c;
  c.base_width = 8;
  c.num_levels = 2;
  c.enc_blocks = 1;
  c.mid_blocks = 1;
  c.dec_blocks = 1;
  c.num_experts = 5;
  c.expert_slots = 5;
  c.top_k = 1;
  return c;
}

ArchConfig ArchConfig::full() {
  ArchConfig c;
  c.base_width = 32;
  c.num_levels = 4;
  c.enc_blocks = 2;
  c.mid_blocks = 3;
  c.dec_blocks = 3;
  c.num_experts = 5;
  c.expert_slots = 5;
  c.top_k = 1;
  return c;
}

}  // namespace demoe::net
