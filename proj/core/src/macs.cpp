#include "demoe/macs.hpp"

#include <string>

#include "demoe/error.hpp"
#include "demoe/model.hpp"
#include "demoe/ops.hpp"

namespace demoe::net {

namespace {

using ops::ConvMode;
using ops::conv2d_macs;

std::uint64_t naf_block_macs(std::size_t c, std::size_t h, std::size_t w, std::size_t n) {
  const Shape x{n, c, h, w};
  const Shape x2{n, 2 * c, h, w};
  const Shape pooled{n, c, 1, 1};
  return conv2d_macs(x, 2 * c, ConvMode::pointwise_1x1)      // conv1
         + conv2d_macs(x2, 2 * c, ConvMode::depthwise_3x3)   // conv2
         + conv2d_macs(pooled, c, ConvMode::pointwise_1x1)   // sca
         + conv2d_macs(x, c, ConvMode::pointwise_1x1)        // conv3
         + conv2d_macs(x, 2 * c, ConvMode::pointwise_1x1)    // conv4
         + conv2d_macs(x, c, ConvMode::pointwise_1x1);       // conv5
}

std::uint64_t naf_block_params(std::size_t c) {
  // norm1, conv1, conv2, sca, conv3, beta, norm2, conv4, conv5, gamma (weights + biases)
  return 2 * c + (2 * c * c + 2 * c) + (18 * c + 2 * c) + (c * c + c) + (c * c + c) + c + 2 * c +
         (2 * c * c + 2 * c) + (c * c + c) + c;
}

}  // namespace

ComputeCount count_params_macs(const ArchConfig& cfg, const Shape& input, std::size_t k) {
  cfg.validate();
  const std::size_t factor = std::size_t{1} << cfg.num_levels;
  if (input.c != 3 || input.h == 0 || input.w == 0 || input.h % factor != 0 || input.w % factor != 0) {
    throw ShapeError("compute count: input " + input.str() + " must be (N, 3, H, W) with H, W multiples of " +
                     std::to_string(factor));
  }
  if (k == 0 || k > cfg.expert_slots) {
    if (!(cfg.expert_slots == 1 && k >= 1 && k <= cfg.num_experts)) {
      throw ArgumentError("compute count: k = " + std::to_string(k) + " outside [1, " +
                          std::to_string(cfg.expert_slots) + "]");
    }
  }
  const std::size_t active = cfg.expert_slots == 1 ? 1 : k;
  const std::size_t n = input.n;

  ComputeCount out;
  MacBreakdown& m = out.breakdown;
  std::size_t h = input.h;
  std::size_t w = input.w;
  m.encoder += conv2d_macs(input, cfg.base_width, ConvMode::pointwise_1x1);
  for (std::uint32_t l = 0; l < cfg.num_levels; ++l) {
    const std::size_t c = cfg.width(l);
    for (std::uint32_t b = 0; b < cfg.enc_blocks; ++b) m.encoder += naf_block_macs(c, h, w, n);
    m.encoder += conv2d_macs({n, c, h, w}, 2 * c, ConvMode::strided_2x2_down);
    h /= 2;
    w /= 2;
  }
  const std::size_t d = cfg.deep_width();
  if (cfg.router) {
    m.router += conv2d_macs({n, d, h, w}, 2 * d, ConvMode::pointwise_1x1);
    m.router += conv2d_macs({n, d, 1, 1}, d, ConvMode::pointwise_1x1);
    m.router += conv2d_macs({n, d, 1, 1}, d, ConvMode::pointwise_1x1);
    m.router += conv2d_macs({n, d / 2, 1, 1}, cfg.num_experts, ConvMode::pointwise_1x1);
  }
  for (std::uint32_t b = 0; b < cfg.mid_blocks; ++b) m.middle += naf_block_macs(d, h, w, n);
  for (std::uint32_t l = cfg.num_levels; l-- > 0;) {
    const std::size_t cin = cfg.width(l + 1);
    m.decoder += conv2d_macs({n, cin, h, w}, 2 * cin, ConvMode::pointwise_1x1);
    h *= 2;
    w *= 2;
    for (std::uint32_t b = 0; b < cfg.dec_blocks; ++b) m.decoder += active * naf_block_macs(cfg.width(l), h, w, n);
  }
  m.ending += conv2d_macs({n, cfg.base_width, h, w}, 3, ConvMode::pointwise_1x1);
  out.macs = m.total();

  std::uint64_t params = 0;
  for (const ParamSpec& s : parameter_specs(cfg)) params += s.shape.numel();
  out.params = params;
  std::uint64_t inactive = 0;
  for (std::uint32_t l = 0; l < cfg.num_levels; ++l) {
    inactive += static_cast<std::uint64_t>(cfg.dec_blocks) * (cfg.expert_slots - active) *
                naf_block_params(cfg.width(l));
  }
  out.active_params = params - inactive;
  return out;
}

ComputeCount count_params_macs(const Checkpoint& ckpt, const Shape& input, std::size_t k) {
  ComputeCount out = count_params_macs(ckpt.config(), input, k);
  const std::uint64_t analytic = out.params;
  out.params = ckpt.parameter_count();
  out.active_params = out.active_params - analytic + out.params;
  return out;
}

}  // namespace demoe::net
