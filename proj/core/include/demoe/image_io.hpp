#pragma once

#include <filesystem>

#include "demoe/tensor.hpp"

namespace demoe::io {

/// Reads an 8-bit PNG (any color type) as a (1, 3, H, W) tensor in [0, 1].
Tensor read_png(const std::filesystem::path& path);

/// Writes a (1, 3, H, W) tensor as 8-bit RGB, clamping to [0, 1] and
/// rounding to the nearest code value.
void write_png(const std::filesystem::path& path, const Tensor& image);

/// Rounds every value to the nearest multiple of 1/255 after clamping; this is
/// exactly what a write/read round trip produces.
Tensor quantize8(const Tensor& image);

}  // namespace demoe::io
