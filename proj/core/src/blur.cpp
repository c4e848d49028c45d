#include "demoe/blur.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "demoe/error.hpp"

namespace demoe::synth {

std::string to_string(BlurFamily f) {
  switch (f) {
    case BlurFamily::global_motion: return "global_motion";
    case BlurFamily::local_motion: return "local_motion";
    case BlurFamily::defocus: return "defocus";
    case BlurFamily::lowlight_motion: return "lowlight_motion";
    case BlurFamily::mixed_motion: return "mixed_motion";
  }
  return "unknown";
}

BlurFamily family_from_index(int label) {
  if (label < 0 || label >= static_cast<int>(kNumFamilies)) {
    throw ArgumentError("blur family label " + std::to_string(label) + " outside [0, 5)");
  }
  return static_cast<BlurFamily>(label);
}

double Kernel2D::sum() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

namespace {

// Deposits `weight` at a sub-pixel position with bilinear weights.
void splat(std::vector<double>& grid, std::size_t size, double x, double y, double weight) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const double ax = x - fx;
  const double ay = y - fy;
  const auto ix = static_cast<std::ptrdiff_t>(fx);
  const auto iy = static_cast<std::ptrdiff_t>(fy);
  const auto n = static_cast<std::ptrdiff_t>(size);
  const double w[2][2] = {{(1 - ax) * (1 - ay), ax * (1 - ay)}, {(1 - ax) * ay, ax * ay}};
  for (int dy = 0; dy < 2; ++dy) {
    for (int dx = 0; dx < 2; ++dx) {
      const std::ptrdiff_t px = ix + dx;
      const std::ptrdiff_t py = iy + dy;
      if (w[dy][dx] == 0.0) continue;
      if (px < 0 || py < 0 || px >= n || py >= n) continue;
      grid[static_cast<std::size_t>(py * n + px)] += weight * w[dy][dx];
    }
  }
}

Kernel2D normalized(std::size_t size, std::vector<double> grid) {
  double total = 0.0;
  for (double v : grid) total += v;
  if (!(total > 0.0)) return Kernel2D{};
  for (double& v : grid) v /= total;
  return Kernel2D{size, std::move(grid)};
}

std::size_t odd_at_least(double extent) {
  auto s = static_cast<std::size_t>(std::ceil(extent - 1e-9));
  if (s < 1) s = 1;
  if (s % 2 == 0) ++s;
  return s;
}

Kernel2D linear_motion(double length, double angle_deg) {
  if (length <= 1.0) return Kernel2D{};
  const double theta = angle_deg * std::numbers::pi / 180.0;
  const double dx = std::cos(theta);
  const double dy = -std::sin(theta);
  const double half = (length - 1.0) / 2.0;
  const std::size_t size = odd_at_least(2.0 * std::ceil(half) + 1.0) + 2;
  const double center = static_cast<double>(size / 2);
  std::vector<double> grid(size * size, 0.0);
  // One sample per pixel of length; integer lengths on the axes land exactly
  // on pixel centers.
  const auto samples = static_cast<std::size_t>(std::ceil(length - 1e-9));
  for (std::size_t i = 0; i < samples; ++i) {
    const double t = samples == 1 ? 0.0 : -half + (2.0 * half) * static_cast<double>(i) / static_cast<double>(samples - 1);
    splat(grid, size, center + t * dx, center + t * dy, 1.0);
  }
  return normalized(size, std::move(grid));
}

Kernel2D disk(double radius) {
  if (radius == 0.0) return Kernel2D{};
  const auto r = static_cast<std::size_t>(std::ceil(radius));
  const std::size_t size = 2 * r + 1;
  const double center = static_cast<double>(r);
  constexpr int kSuper = 8;
  std::vector<double> grid(size * size, 0.0);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      int inside = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = static_cast<double>(x) - 0.5 + (sx + 0.5) / kSuper - center;
          const double py = static_cast<double>(y) - 0.5 + (sy + 0.5) / kSuper - center;
          if (px * px + py * py <= radius * radius) ++inside;
        }
      }
      grid[y * size + x] = inside;
    }
  }
  if (grid[r * size + r] == 0.0) grid[r * size + r] = 1.0;
  return normalized(size, std::move(grid));
}

Kernel2D shake(std::uint64_t seed, std::uint32_t steps) {
  Rng rng = make_rng(seed, 0x5ac3);
  std::vector<double> xs{0.0};
  std::vector<double> ys{0.0};
  const double heading = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  double vx = std::cos(heading);
  double vy = std::sin(heading);
  for (std::uint32_t i = 1; i < steps; ++i) {
    vx = 0.8 * vx + normal(rng, 0.0, 0.6);
    vy = 0.8 * vy + normal(rng, 0.0, 0.6);
    const double speed = std::hypot(vx, vy);
    if (speed > 1.2) {
      vx *= 1.2 / speed;
      vy *= 1.2 / speed;
    }
    xs.push_back(xs.back() + vx);
    ys.push_back(ys.back() + vy);
  }
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(ys.size());
  double extent = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] -= mx;
    ys[i] -= my;
    extent = std::max({extent, std::fabs(xs[i]), std::fabs(ys[i])});
  }
  const std::size_t size = 2 * static_cast<std::size_t>(std::ceil(extent)) + 3;
  const double center = static_cast<double>(size / 2);
  std::vector<double> grid(size * size, 0.0);
  // Densify each segment so the rasterized path has no gaps.
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const double len = std::hypot(xs[i + 1] - xs[i], ys[i + 1] - ys[i]);
    const auto sub = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len * 4.0)));
    for (std::size_t s = 0; s < sub; ++s) {
      const double a = static_cast<double>(s) / static_cast<double>(sub);
      splat(grid, size, center + xs[i] + a * (xs[i + 1] - xs[i]), center + ys[i] + a * (ys[i + 1] - ys[i]),
            len / static_cast<double>(sub));
    }
  }
  splat(grid, size, center + xs.back(), center + ys.back(), 0.25);
  return normalized(size, std::move(grid));
}

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto len = static_cast<std::ptrdiff_t>(n);
  while (i < 0 || i >= len) {
    if (i < 0) i = -i;
    if (i >= len) i = 2 * (len - 1) - i;
  }
  return static_cast<std::size_t>(i);
}

}  // namespace

Kernel2D make_kernel(const KernelSpec& spec) {
  switch (spec.kind) {
    case KernelSpec::Kind::delta: return Kernel2D{};
    case KernelSpec::Kind::linear_motion:
      if (!(spec.length >= 1.0) || !std::isfinite(spec.length) || !std::isfinite(spec.angle_deg)) {
        throw ArgumentError("motion kernel: length must be >= 1, got " + std::to_string(spec.length));
      }
      return linear_motion(spec.length, spec.angle_deg);
    case KernelSpec::Kind::disk:
      if (!(spec.radius >= 0.0) || !std::isfinite(spec.radius)) {
        throw ArgumentError("disk kernel: radius must be >= 0, got " + std::to_string(spec.radius));
      }
      return disk(spec.radius);
    case KernelSpec::Kind::shake:
      if (spec.steps < 2 || spec.steps > 64) {
        throw ArgumentError("shake kernel: steps must be in [2, 64], got " + std::to_string(spec.steps));
      }
      return shake(spec.trajectory_seed, spec.steps);
  }
  throw ArgumentError("unknown kernel kind");
}

std::vector<float> rasterize_mask(const MaskSpec& m, std::size_t h, std::size_t w) {
  std::vector<float> out(h * w, 0.0f);
  if (m.height == 0 || m.width == 0) return out;
  const std::size_t bottom = std::min(h, m.top + m.height);
  const std::size_t right = std::min(w, m.left + m.width);
  const double f = static_cast<double>(m.feather);
  for (std::size_t y = m.top; y < bottom; ++y) {
    for (std::size_t x = m.left; x < right; ++x) {
      const double d = static_cast<double>(std::min({y - m.top, bottom - 1 - y, x - m.left, right - 1 - x}));
      const double v = f == 0.0 ? 1.0 : std::min(1.0, (d + 1.0) / (f + 1.0));
      out[y * w + x] = static_cast<float>(v);
    }
  }
  return out;
}

BlurSpec sample_blur_spec(BlurFamily family, std::size_t h, std::size_t w, Rng& rng) {
  BlurSpec spec;
  spec.family = family;
  switch (family) {
    case BlurFamily::global_motion:
      spec.kernel.kind = KernelSpec::Kind::linear_motion;
      spec.kernel.length = uniform(rng, 7.0, 13.0);
      spec.kernel.angle_deg = uniform(rng, 0.0, 180.0);
      break;
    case BlurFamily::local_motion: {
      spec.kernel.kind = KernelSpec::Kind::linear_motion;
      spec.kernel.length = uniform(rng, 7.0, 13.0);
      spec.kernel.angle_deg = uniform(rng, 0.0, 180.0);
      const double area = uniform(rng, 0.10, 0.40);
      const double aspect = uniform(rng, 0.6, 1.6);
      const double total = static_cast<double>(h * w) * area;
      MaskSpec m;
      m.height = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(std::sqrt(total * aspect))), 1, h);
      m.width = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(total / static_cast<double>(m.height))), 1, w);
      m.top = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(h - m.height)));
      m.left = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(w - m.width)));
      m.feather = 4;
      spec.mask = m;
      break;
    }
    case BlurFamily::defocus:
      spec.kernel.kind = KernelSpec::Kind::disk;
      spec.kernel.radius = uniform(rng, 2.0, 4.0);
      break;
    case BlurFamily::lowlight_motion:
      spec.kernel.kind = KernelSpec::Kind::linear_motion;
      spec.kernel.length = uniform(rng, 3.0, 7.0);
      spec.kernel.angle_deg = uniform(rng, 0.0, 180.0);
      spec.gain = uniform(rng, 0.1, 0.4);
      spec.gamma = uniform(rng, 1.5, 3.0);
      spec.noise_sigma = uniform(rng, 0.005, 0.015);
      break;
    case BlurFamily::mixed_motion:
      spec.kernel.kind = KernelSpec::Kind::shake;
      spec.kernel.trajectory_seed = rng();
      spec.kernel.steps = static_cast<std::uint32_t>(uniform_int(rng, 8, 24));
      spec.noise_sigma = uniform(rng, 0.025, 0.04);
      break;
  }
  return spec;
}

Tensor convolve_reflect(const Tensor& image, const Kernel2D& k) {
  const Shape& s = image.shape();
  if (k.size % 2 == 0 || k.values.size() != k.size * k.size) {
    throw ArgumentError("convolve_reflect: kernel must be square with odd size");
  }
  if (k.size == 1) {
    Tensor out(s);
    for (std::size_t i = 0; i < image.numel(); ++i) out[i] = static_cast<float>(k.values[0] * image[i]);
    return out;
  }
  const auto r = static_cast<std::ptrdiff_t>(k.size / 2);
  Tensor out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t y = 0; y < s.h; ++y) {
        for (std::size_t x = 0; x < s.w; ++x) {
          double acc = 0.0;
          for (std::ptrdiff_t ky = -r; ky <= r; ++ky) {
            const std::size_t sy = reflect(static_cast<std::ptrdiff_t>(y) - ky, s.h);
            for (std::ptrdiff_t kx = -r; kx <= r; ++kx) {
              const double kv = k.at(static_cast<std::size_t>(ky + r), static_cast<std::size_t>(kx + r));
              if (kv == 0.0) continue;
              const std::size_t sx = reflect(static_cast<std::ptrdiff_t>(x) - kx, s.w);
              acc += kv * image.at(n, c, sy, sx);
            }
          }
          out.at(n, c, y, x) = static_cast<float>(acc);
        }
      }
    }
  }
  return out;
}

Degraded degrade(const Tensor& clean, const BlurSpec& spec, std::uint64_t seed) {
  const Shape& s = clean.shape();
  if (s.c != 3 || s.n != 1) throw ShapeError("degrade: expected a (1, 3, H, W) image, got " + s.str());
  if (spec.noise_sigma < 0.0) throw ArgumentError("degrade: noise sigma must be non-negative");
  if (spec.family == BlurFamily::lowlight_motion && (!(spec.gain > 0.0) || !(spec.gamma > 0.0))) {
    throw ArgumentError("degrade: low-light gain and gamma must be positive");
  }

  Tensor x = clean;
  if (spec.family == BlurFamily::lowlight_motion && !(spec.gain == 1.0 && spec.gamma == 1.0)) {
    for (float& v : x.data()) v = static_cast<float>(spec.gain * std::pow(std::max(0.0f, v), spec.gamma));
  }
  const Kernel2D k = make_kernel(spec.kernel);
  const bool identity_kernel = k.size == 1;
  Tensor y = identity_kernel ? x : convolve_reflect(x, k);

  if (spec.family == BlurFamily::local_motion) {
    const MaskSpec m = spec.mask.value_or(MaskSpec{});
    const std::vector<float> mask = rasterize_mask(m, s.h, s.w);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t p = 0; p < s.plane(); ++p) {
        const std::size_t i = c * s.plane() + p;
        if (mask[p] == 0.0f) {
          y[i] = x[i];
        } else {
          y[i] = mask[p] * y[i] + (1.0f - mask[p]) * x[i];
        }
      }
    }
  }

  if (spec.noise_sigma > 0.0) {
    Rng rng = make_rng(seed, 0x7015e);
    for (float& v : y.data()) v += static_cast<float>(normal(rng, 0.0, spec.noise_sigma));
  }
  for (float& v : y.data()) v = std::clamp(v, 0.0f, 1.0f);
  return Degraded{std::move(y), static_cast<int>(spec.family)};
}

Tensor procedural_image(std::size_t h, std::size_t w, Rng& rng) {
  Tensor img({1, 3, h, w});
  double c0[3];
  double c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = uniform(rng, 0.15, 0.85);
    c1[c] = uniform(rng, 0.15, 0.85);
  }
  const double ang = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double gx = std::cos(ang);
  const double gy = std::sin(ang);
  const double hs = static_cast<double>(h);
  const double ws = static_cast<double>(w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double t = 0.5 + 0.5 * ((static_cast<double>(x) / ws - 0.5) * gx + (static_cast<double>(y) / hs - 0.5) * gy);
      for (std::size_t c = 0; c < 3; ++c) {
        img.at(0, c, y, x) = static_cast<float>(c0[c] + (c1[c] - c0[c]) * t);
      }
    }
  }

  auto paint = [&](auto&& inside, const double* color) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        if (!inside(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) continue;
        for (std::size_t c = 0; c < 3; ++c) img.at(0, c, y, x) = static_cast<float>(color[c]);
      }
    }
  };

  // Full-frame texture so blur leaves evidence everywhere, not only at shape
  // borders.
  const double amp = uniform(rng, 0.15, 0.3);
  const auto texture = uniform_int(rng, 0, 2);
  const double cell = static_cast<double>(uniform_int(rng, 2, 4));
  const double ta = uniform(rng, 0.0, std::numbers::pi);
  const double period = uniform(rng, 3.0, 6.0);
  std::vector<double> dots;
  if (texture == 2) {
    const std::size_t cells = (h / 2 + 1) * (w / 2 + 1);
    for (std::size_t i = 0; i < cells; ++i) dots.push_back(uniform(rng, -1.0, 1.0));
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double t = 0.0;
      if (texture == 0) {
        const auto ix = static_cast<long>(std::floor(static_cast<double>(x) / cell));
        const auto iy = static_cast<long>(std::floor(static_cast<double>(y) / cell));
        t = ((ix + iy) & 1) == 0 ? 1.0 : -1.0;
      } else if (texture == 1) {
        const double u = static_cast<double>(x) * std::cos(ta) + static_cast<double>(y) * std::sin(ta);
        t = std::fmod(u / period + 1000.0, 1.0) < 0.5 ? 1.0 : -1.0;
      } else {
        t = dots[(y / 2) * (w / 2 + 1) + x / 2];
      }
      for (std::size_t c = 0; c < 3; ++c) {
        img.at(0, c, y, x) = static_cast<float>(std::clamp(img.at(0, c, y, x) + amp * t, 0.0, 1.0));
      }
    }
  }

  const auto shapes = uniform_int(rng, 3, 6);
  for (std::int64_t i = 0; i < shapes; ++i) {
    double color[3];
    for (double& v : color) v = uniform(rng, 0.0, 1.0);
    const double cx = uniform(rng, 0.0, ws);
    const double cy = uniform(rng, 0.0, hs);
    const auto kind = uniform_int(rng, 0, 3);
    if (kind == 0) {
      const double rw = uniform(rng, 0.1, 0.4) * ws;
      const double rh = uniform(rng, 0.1, 0.4) * hs;
      paint([&](double x, double y) { return std::fabs(x - cx) < rw / 2 && std::fabs(y - cy) < rh / 2; }, color);
    } else if (kind == 1) {
      const double rad = uniform(rng, 0.06, 0.22) * std::min(ws, hs);
      paint([&](double x, double y) { return (x - cx) * (x - cx) + (y - cy) * (y - cy) < rad * rad; }, color);
    } else if (kind == 2) {
      const double rw = uniform(rng, 0.15, 0.45) * ws;
      const double rh = uniform(rng, 0.15, 0.45) * hs;
      const double cell = static_cast<double>(uniform_int(rng, 2, 4));
      paint([&](double x, double y) {
        if (std::fabs(x - cx) >= rw / 2 || std::fabs(y - cy) >= rh / 2) return false;
        const auto ix = static_cast<long>(std::floor(x / cell));
        const auto iy = static_cast<long>(std::floor(y / cell));
        return ((ix + iy) & 1) == 0;
      }, color);
    } else {
      const double a = uniform(rng, 0.0, std::numbers::pi);
      const double nx = std::cos(a);
      const double ny = std::sin(a);
      const double thick = uniform(rng, 0.8, 2.0);
      paint([&](double x, double y) { return std::fabs((x - cx) * nx + (y - cy) * ny) < thick; }, color);
    }
  }
  return img;
}

}  // namespace demoe::synth
