#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace demoe {

/// Extents of a rank-4 (batch, channel, height, width) array.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t numel() const noexcept { return n * c * h * w; }
  constexpr std::size_t plane() const noexcept { return h * w; }
  constexpr std::size_t sample() const noexcept { return c * h * w; }

  bool operator==(const Shape&) const = default;

  std::string str() const;
};

/// Dense row-major NCHW float32 array with value semantics.
///
/// Gradients and graph membership are not stored here; they belong to the
/// ad::Tape that recorded the tensor (see autodiff.hpp).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  float* ptr() noexcept { return data_.data(); }
  const float* ptr() const noexcept { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  float at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

  /// Same data viewed under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  /// Copy of samples [first, first + count) along the batch axis.
  Tensor slice_batch(std::size_t first, std::size_t count) const;

  void fill(float v);

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_{};
  std::vector<float> data_;
};

/// Stacks single-sample tensors of identical (c, h, w) along the batch axis.
Tensor concat_batch(std::span<const Tensor> parts);

bool all_finite(const Tensor& t) noexcept;

/// True when shapes match and every element has the same bit pattern.
bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept;

}  // namespace demoe
