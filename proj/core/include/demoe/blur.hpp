#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "demoe/rng.hpp"
#include "demoe/tensor.hpp"

// Synthetic y = x (*) k + n degradations for five blur families.
namespace demoe::synth {

enum class BlurFamily : std::uint8_t {
  global_motion = 0,    // whole-frame linear motion
  local_motion = 1,     // linear motion inside a feathered rectangle, sharp elsewhere
  defocus = 2,          // disk kernel
  lowlight_motion = 3,  // gain * x^gamma darkening, short motion, sensor noise
  mixed_motion = 4,     // random-walk camera shake plus sensor noise
};

inline constexpr std::size_t kNumFamilies = 5;

std::string to_string(BlurFamily f);
BlurFamily family_from_index(int label);

/// Square, odd-sized, non-negative kernel that sums to one.
struct Kernel2D {
  std::size_t size = 1;
  std::vector<double> values{1.0};

  double at(std::size_t row, std::size_t col) const { return values[row * size + col]; }
  double sum() const;
};

struct KernelSpec {
  enum class Kind { delta, linear_motion, disk, shake };
  Kind kind = Kind::delta;
  double length = 1.0;     // linear_motion, >= 1 pixel
  double angle_deg = 0.0;  // linear_motion, counter-clockwise from +x
  double radius = 0.0;     // disk, >= 0
  std::uint64_t trajectory_seed = 0;  // shake
  std::uint32_t steps = 16;           // shake, 8..24
};

/// Throws ArgumentError on out-of-range parameters.
Kernel2D make_kernel(const KernelSpec& spec);

/// Axis-aligned rectangle with a linear feather of `feather` pixels inside
/// its border. height or width 0 means an empty mask.
struct MaskSpec {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t feather = 4;
};

/// (H, W) mask values in [0, 1], row-major.
std::vector<float> rasterize_mask(const MaskSpec& mask, std::size_t h, std::size_t w);

struct BlurSpec {
  BlurFamily family = BlurFamily::global_motion;
  KernelSpec kernel;
  double noise_sigma = 0.0;
  std::optional<MaskSpec> mask;  // local_motion only
  double gain = 1.0;             // lowlight_motion darkening
  double gamma = 1.0;
};

/// Draws family-specific parameters for an h x w image.
BlurSpec sample_blur_spec(BlurFamily family, std::size_t h, std::size_t w, Rng& rng);

/// Convolution of each channel with `k`, reflect padding at the borders.
Tensor convolve_reflect(const Tensor& image, const Kernel2D& k);

struct Degraded {
  Tensor image;
  int label = 0;
};

/// Applies the family's degradation to a clean (1, 3, H, W) image in [0, 1];
/// `seed` drives the additive noise. Output is clamped to [0, 1].
Degraded degrade(const Tensor& clean, const BlurSpec& spec, std::uint64_t seed);

/// Procedural clean image: gradient background, random shapes, optional
/// checker and stripe textures.
Tensor procedural_image(std::size_t h, std::size_t w, Rng& rng);

}  // namespace demoe::synth
