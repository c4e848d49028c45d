#pragma once

#include <cstdint>

#include "demoe/arch.hpp"
#include "demoe/checkpoint.hpp"
#include "demoe/tensor.hpp"

namespace demoe::net {

/// Convolution multiply-accumulates by network part for one forward pass.
/// Elementwise work (norms, gates, residual adds, gate weighting) is not
/// counted.
struct MacBreakdown {
  std::uint64_t encoder = 0;  // intro, encoder blocks, downsampling
  std::uint64_t router = 0;
  std::uint64_t middle = 0;
  std::uint64_t decoder = 0;  // upsampling and active experts
  std::uint64_t ending = 0;

  std::uint64_t total() const noexcept { return encoder + router + middle + decoder + ending; }
};

struct ComputeCount {
  std::uint64_t params = 0;
  std::uint64_t active_params = 0;  // only k experts per MoE block
  std::uint64_t macs = 0;
  MacBreakdown breakdown;
};

/// Analytic count for `k` active experts per MoE block. `input` is the image
/// tensor shape (N, 3, H, W); MACs scale with N.
ComputeCount count_params_macs(const ArchConfig& config, const Shape& input, std::size_t k);

/// Same, with parameter totals taken from the checkpoint's records.
ComputeCount count_params_macs(const Checkpoint& ckpt, const Shape& input, std::size_t k);

}  // namespace demoe::net
