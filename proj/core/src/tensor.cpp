#include "demoe/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "demoe/error.hpp"

namespace demoe {

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ", " << c << ", " << h << ", " << w << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  }
}

float& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
}

float Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(shape, data_);
}

Tensor Tensor::slice_batch(std::size_t first, std::size_t count) const {
  if (first + count > shape_.n) {
    throw ShapeError("batch slice [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") out of range for " + shape_.str());
  }
  const std::size_t per = shape_.sample();
  std::vector<float> out(data_.begin() + static_cast<std::ptrdiff_t>(first * per),
                         data_.begin() + static_cast<std::ptrdiff_t>((first + count) * per));
  return Tensor({count, shape_.c, shape_.h, shape_.w}, std::move(out));
}

void Tensor::fill(float v) {
  std::fill(data_.begin(), data_.end(), v);
}

Tensor concat_batch(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_batch: no tensors");
  Shape s = parts.front().shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    if (ps.c != s.c || ps.h != s.h || ps.w != s.w) {
      throw ShapeError("concat_batch: " + ps.str() + " incompatible with " + s.str());
    }
    total += ps.n;
  }
  std::vector<float> data;
  data.reserve(total * s.sample());
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  s.n = total;
  return Tensor(s, std::move(data));
}

bool all_finite(const Tensor& t) noexcept {
  for (float v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept {
  if (!(a.shape() == b.shape())) return false;
  return a.numel() == 0 || std::memcmp(a.ptr(), b.ptr(), a.numel() * sizeof(float)) == 0;
}

}  // namespace demoe
