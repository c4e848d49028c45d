#include "demoe/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "demoe/error.hpp"

namespace demoe::ops {

namespace {

// Eight independent partial sums; fixed order, so results are reproducible.
float dot(const float* a, const float* b, std::size_t n) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
  }
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

float sum(const float* a, std::size_t n) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t k = 0; k < 8; ++k) acc[k] += a[i + k];
  }
  float tail = 0.0f;
  for (; i < n; ++i) tail += a[i];
  return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

void axpy(float alpha, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void require_same_or_alloc(Tensor* t, const Shape& s, const char* what) {
  if (t == nullptr) return;
  if (t->empty()) {
    *t = Tensor(s);
  } else if (!(t->shape() == s)) {
    throw ShapeError(std::string(what) + ": gradient buffer " + t->shape().str() +
                     " does not match " + s.str());
  }
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto len = static_cast<std::ptrdiff_t>(n);
  while (i < 0 || i >= len) {
    if (i < 0) i = -i;
    if (i >= len) i = 2 * (len - 1) - i;
  }
  return static_cast<std::size_t>(i);
}

// Gathers x[2i+a, 2j+b] into a (H/2, W/2) buffer.
void gather_strided(const float* plane, std::size_t h, std::size_t w, std::size_t a, std::size_t b,
                    float* out) {
  const std::size_t oh = h / 2;
  const std::size_t ow = w / 2;
  for (std::size_t i = 0; i < oh; ++i) {
    const float* row = plane + (2 * i + a) * w + b;
    for (std::size_t j = 0; j < ow; ++j) out[i * ow + j] = row[2 * j];
  }
}

void scatter_strided_add(const float* sub, std::size_t h, std::size_t w, std::size_t a, std::size_t b,
                         float* plane) {
  const std::size_t oh = h / 2;
  const std::size_t ow = w / 2;
  for (std::size_t i = 0; i < oh; ++i) {
    float* row = plane + (2 * i + a) * w + b;
    for (std::size_t j = 0; j < ow; ++j) row[2 * j] += sub[i * ow + j];
  }
}

// Valid output index range [lo, hi) for a tap offset d in {-1, 0, 1}.
struct TapRange {
  std::size_t lo;
  std::size_t hi;
};

TapRange tap_range(std::ptrdiff_t d, std::size_t n) {
  const std::size_t lo = d < 0 ? 1 : 0;
  const std::size_t hi = d > 0 ? (n > 0 ? n - 1 : 0) : n;
  return {lo, std::max(lo, hi)};
}

}  // namespace

std::uint64_t& conv_mac_counter() noexcept {
  thread_local std::uint64_t counter = 0;
  return counter;
}

std::uint64_t conv2d_macs(const Shape& x, std::size_t out_channels, ConvMode mode) noexcept {
  const std::uint64_t n = x.n;
  switch (mode) {
    case ConvMode::pointwise_1x1: return n * x.h * x.w * x.c * out_channels;
    case ConvMode::depthwise_3x3: return n * 9 * x.c * x.h * x.w;
    case ConvMode::strided_2x2_down: return n * (x.h / 2) * (x.w / 2) * 4 * x.c * out_channels;
  }
  return 0;
}

Shape conv2d_shape(const Shape& x, const Shape& w, const Shape& b, ConvMode mode) {
  if (x.n == 0 || x.c == 0) throw ShapeError("conv2d: empty input " + x.str());
  if (x.h == 0 || x.w == 0) throw ShapeError("conv2d: zero-extent spatial input " + x.str());
  const std::size_t b_len = b.numel();
  auto check_bias = [&](std::size_t cout) {
    if (b_len != 0 && b_len != cout) {
      throw ShapeError("conv2d: bias " + b.str() + " does not have " + std::to_string(cout) +
                       " entries");
    }
  };
  switch (mode) {
    case ConvMode::pointwise_1x1:
      if (w.c != x.c || w.h != 1 || w.w != 1 || w.n == 0) {
        throw ShapeError("conv2d pointwise: weight " + w.str() + " incompatible with input " +
                         x.str() + " (expected (Cout, " + std::to_string(x.c) + ", 1, 1))");
      }
      check_bias(w.n);
      return {x.n, w.n, x.h, x.w};
    case ConvMode::depthwise_3x3:
      if (w.n != x.c || w.c != 1 || w.h != 3 || w.w != 3) {
        throw ShapeError("conv2d depthwise: weight " + w.str() + " incompatible with input " +
                         x.str() + " (expected (" + std::to_string(x.c) + ", 1, 3, 3))");
      }
      check_bias(w.n);
      return x;
    case ConvMode::strided_2x2_down:
      if (w.c != x.c || w.h != 2 || w.w != 2 || w.n == 0) {
        throw ShapeError("conv2d down: weight " + w.str() + " incompatible with input " +
                         x.str() + " (expected (Cout, " + std::to_string(x.c) + ", 2, 2))");
      }
      if (x.h % 2 != 0 || x.w % 2 != 0) {
        throw ShapeError("conv2d down: spatial extents of " + x.str() + " must be even");
      }
      check_bias(w.n);
      return {x.n, w.n, x.h / 2, x.w / 2};
  }
  throw ShapeError("conv2d: unknown mode");
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, ConvMode mode, Padding padding) {
  const Shape os = conv2d_shape(x.shape(), w.shape(), b.shape(), mode);
  const Shape& xs = x.shape();
  conv_mac_counter() += conv2d_macs(xs, os.c, mode);
  Tensor out(os);
  const std::size_t cin = xs.c;
  const std::size_t cout = os.c;
  const std::size_t oplane = os.plane();
  const std::size_t iplane = xs.plane();

  for (std::size_t n = 0; n < xs.n; ++n) {
    float* obase = out.ptr() + n * os.sample();
    const float* xbase = x.ptr() + n * xs.sample();
    if (!b.empty()) {
      for (std::size_t co = 0; co < cout; ++co) {
        std::fill(obase + co * oplane, obase + (co + 1) * oplane, b[co]);
      }
    }
    switch (mode) {
      case ConvMode::pointwise_1x1:
        for (std::size_t co = 0; co < cout; ++co) {
          float* o = obase + co * oplane;
          const float* wr = w.ptr() + co * cin;
          for (std::size_t ci = 0; ci < cin; ++ci) axpy(wr[ci], xbase + ci * iplane, o, oplane);
        }
        break;
      case ConvMode::depthwise_3x3: {
        const std::size_t H = xs.h;
        const std::size_t W = xs.w;
        for (std::size_t c = 0; c < cin; ++c) {
          float* o = obase + c * oplane;
          const float* xi = xbase + c * iplane;
          const float* k = w.ptr() + c * 9;
          if (padding == Padding::zero) {
            for (std::ptrdiff_t di = -1; di <= 1; ++di) {
              const TapRange ri = tap_range(di, H);
              for (std::ptrdiff_t dj = -1; dj <= 1; ++dj) {
                const TapRange rj = tap_range(dj, W);
                const float kv = k[(di + 1) * 3 + (dj + 1)];
                for (std::size_t i = ri.lo; i < ri.hi; ++i) {
                  float* orow = o + i * W;
                  const float* xrow = xi + (i + di) * W;
                  for (std::size_t j = rj.lo; j < rj.hi; ++j) orow[j] += kv * xrow[j + dj];
                }
              }
            }
          } else {
            for (std::size_t i = 0; i < H; ++i) {
              for (std::size_t j = 0; j < W; ++j) {
                float acc = 0.0f;
                for (std::ptrdiff_t di = -1; di <= 1; ++di) {
                  const std::size_t si = reflect_index(static_cast<std::ptrdiff_t>(i) + di, H);
                  for (std::ptrdiff_t dj = -1; dj <= 1; ++dj) {
                    const std::size_t sj = reflect_index(static_cast<std::ptrdiff_t>(j) + dj, W);
                    acc += k[(di + 1) * 3 + (dj + 1)] * xi[si * W + sj];
                  }
                }
                o[i * W + j] += acc;
              }
            }
          }
        }
        break;
      }
      case ConvMode::strided_2x2_down: {
        std::vector<float> sub(oplane);
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t a = 0; a < 2; ++a) {
            for (std::size_t bb = 0; bb < 2; ++bb) {
              gather_strided(xbase + ci * iplane, xs.h, xs.w, a, bb, sub.data());
              for (std::size_t co = 0; co < cout; ++co) {
                const float wv = w.ptr()[((co * cin + ci) * 2 + a) * 2 + bb];
                axpy(wv, sub.data(), obase + co * oplane, oplane);
              }
            }
          }
        }
        break;
      }
    }
  }
  return out;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dout, ConvMode mode, Tensor* dx,
                     Tensor* dw, Tensor* db) {
  const Shape& xs = x.shape();
  const Shape os = conv2d_shape(xs, w.shape(), Shape{}, mode);
  if (!(dout.shape() == os)) {
    throw ShapeError("conv2d backward: upstream gradient " + dout.shape().str() +
                     " does not match output " + os.str());
  }
  require_same_or_alloc(dx, xs, "conv2d backward");
  require_same_or_alloc(dw, w.shape(), "conv2d backward");
  require_same_or_alloc(db, Shape{1, os.c, 1, 1}, "conv2d backward");
  if (db != nullptr && db->numel() != os.c) {
    throw ShapeError("conv2d backward: bias gradient has wrong length");
  }

  const std::size_t cin = xs.c;
  const std::size_t cout = os.c;
  const std::size_t oplane = os.plane();
  const std::size_t iplane = xs.plane();

  for (std::size_t n = 0; n < xs.n; ++n) {
    const float* gbase = dout.ptr() + n * os.sample();
    const float* xbase = x.ptr() + n * xs.sample();
    float* dxbase = dx != nullptr ? dx->ptr() + n * xs.sample() : nullptr;
    if (db != nullptr) {
      for (std::size_t co = 0; co < cout; ++co) (*db)[co] += sum(gbase + co * oplane, oplane);
    }
    switch (mode) {
      case ConvMode::pointwise_1x1:
        for (std::size_t co = 0; co < cout; ++co) {
          const float* g = gbase + co * oplane;
          const float* wr = w.ptr() + co * cin;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            if (dw != nullptr) dw->ptr()[co * cin + ci] += dot(g, xbase + ci * iplane, oplane);
            if (dxbase != nullptr) axpy(wr[ci], g, dxbase + ci * iplane, iplane);
          }
        }
        break;
      case ConvMode::depthwise_3x3: {
        const std::size_t H = xs.h;
        const std::size_t W = xs.w;
        for (std::size_t c = 0; c < cin; ++c) {
          const float* g = gbase + c * oplane;
          const float* xi = xbase + c * iplane;
          const float* k = w.ptr() + c * 9;
          for (std::ptrdiff_t di = -1; di <= 1; ++di) {
            const TapRange ri = tap_range(di, H);
            for (std::ptrdiff_t dj = -1; dj <= 1; ++dj) {
              const TapRange rj = tap_range(dj, W);
              const std::size_t tap = static_cast<std::size_t>((di + 1) * 3 + (dj + 1));
              const float kv = k[tap];
              float acc = 0.0f;
              for (std::size_t i = ri.lo; i < ri.hi; ++i) {
                const float* grow = g + i * W;
                const float* xrow = xi + (i + di) * W;
                if (dw != nullptr) {
                  for (std::size_t j = rj.lo; j < rj.hi; ++j) acc += grow[j] * xrow[j + dj];
                }
                if (dxbase != nullptr) {
                  float* dxrow = dxbase + c * iplane + (i + di) * W;
                  for (std::size_t j = rj.lo; j < rj.hi; ++j) dxrow[j + dj] += kv * grow[j];
                }
              }
              if (dw != nullptr) dw->ptr()[c * 9 + tap] += acc;
            }
          }
        }
        break;
      }
      case ConvMode::strided_2x2_down: {
        std::vector<float> sub(oplane);
        for (std::size_t ci = 0; ci < cin; ++ci) {
          for (std::size_t a = 0; a < 2; ++a) {
            for (std::size_t bb = 0; bb < 2; ++bb) {
              if (dw != nullptr) {
                gather_strided(xbase + ci * iplane, xs.h, xs.w, a, bb, sub.data());
                for (std::size_t co = 0; co < cout; ++co) {
                  dw->ptr()[((co * cin + ci) * 2 + a) * 2 + bb] +=
                      dot(gbase + co * oplane, sub.data(), oplane);
                }
              }
              if (dxbase != nullptr) {
                std::fill(sub.begin(), sub.end(), 0.0f);
                for (std::size_t co = 0; co < cout; ++co) {
                  const float wv = w.ptr()[((co * cin + ci) * 2 + a) * 2 + bb];
                  axpy(wv, gbase + co * oplane, sub.data(), oplane);
                }
                scatter_strided_add(sub.data(), xs.h, xs.w, a, bb, dxbase + ci * iplane);
              }
            }
          }
        }
        break;
      }
    }
  }
}

Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps,
                           LayerNormStats* stats) {
  if (!(eps > 0.0f)) throw ArgumentError("layer_norm_channels: eps must be positive");
  const Shape& s = x.shape();
  if (gamma.numel() != s.c || beta.numel() != s.c) {
    throw ShapeError("layer_norm_channels: gamma/beta lengths " + std::to_string(gamma.numel()) +
                     "/" + std::to_string(beta.numel()) + " do not match " +
                     std::to_string(s.c) + " channels of " + s.str());
  }
  const std::size_t plane = s.plane();
  const double inv_c = 1.0 / static_cast<double>(s.c);
  Tensor out(s);
  std::vector<double> mean(plane);
  std::vector<double> var(plane);
  if (stats != nullptr) {
    stats->mean.assign(s.n * plane, 0.0);
    stats->rstd.assign(s.n * plane, 0.0);
  }
  for (std::size_t n = 0; n < s.n; ++n) {
    const float* xb = x.ptr() + n * s.sample();
    float* ob = out.ptr() + n * s.sample();
    std::fill(mean.begin(), mean.end(), 0.0);
    std::fill(var.begin(), var.end(), 0.0);
    for (std::size_t c = 0; c < s.c; ++c) {
      const float* xc = xb + c * plane;
      for (std::size_t p = 0; p < plane; ++p) mean[p] += xc[p];
    }
    for (std::size_t p = 0; p < plane; ++p) mean[p] *= inv_c;
    for (std::size_t c = 0; c < s.c; ++c) {
      const float* xc = xb + c * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        const double d = xc[p] - mean[p];
        var[p] += d * d;
      }
    }
    for (std::size_t p = 0; p < plane; ++p) var[p] = 1.0 / std::sqrt(var[p] * inv_c + static_cast<double>(eps));
    for (std::size_t c = 0; c < s.c; ++c) {
      const float* xc = xb + c * plane;
      float* oc = ob + c * plane;
      const double g = gamma[c];
      const double bt = beta[c];
      for (std::size_t p = 0; p < plane; ++p) oc[p] = static_cast<float>((xc[p] - mean[p]) * var[p] * g + bt);
    }
    if (stats != nullptr) {
      std::copy(mean.begin(), mean.end(), stats->mean.begin() + static_cast<std::ptrdiff_t>(n * plane));
      std::copy(var.begin(), var.end(), stats->rstd.begin() + static_cast<std::ptrdiff_t>(n * plane));
    }
  }
  return out;
}

void layer_norm_channels_backward(const Tensor& x, const Tensor& gamma, const LayerNormStats& stats,
                                  const Tensor& dout, Tensor* dx, Tensor* dgamma, Tensor* dbeta) {
  const Shape& s = x.shape();
  if (!(dout.shape() == s)) throw ShapeError("layer_norm_channels backward: gradient shape mismatch");
  require_same_or_alloc(dx, s, "layer_norm_channels backward");
  require_same_or_alloc(dgamma, gamma.shape(), "layer_norm_channels backward");
  require_same_or_alloc(dbeta, gamma.shape(), "layer_norm_channels backward");
  const std::size_t plane = s.plane();
  const double inv_c = 1.0 / static_cast<double>(s.c);
  std::vector<double> xhat(s.sample());
  std::vector<double> mean_g(plane);
  std::vector<double> mean_gx(plane);
  for (std::size_t n = 0; n < s.n; ++n) {
    const float* xb = x.ptr() + n * s.sample();
    const float* gb = dout.ptr() + n * s.sample();
    const double* mu = stats.mean.data() + n * plane;
    const double* rs = stats.rstd.data() + n * plane;
    std::fill(mean_g.begin(), mean_g.end(), 0.0);
    std::fill(mean_gx.begin(), mean_gx.end(), 0.0);
    for (std::size_t c = 0; c < s.c; ++c) {
      const float* xc = xb + c * plane;
      const float* gc = gb + c * plane;
      double* hc = xhat.data() + c * plane;
      const double g = gamma[c];
      double dg = 0.0;
      double db = 0.0;
      for (std::size_t p = 0; p < plane; ++p) {
        hc[p] = (xc[p] - mu[p]) * rs[p];
        const double dh = gc[p] * g;
        mean_g[p] += dh;
        mean_gx[p] += dh * hc[p];
        dg += gc[p] * hc[p];
        db += gc[p];
      }
      if (dgamma != nullptr) (*dgamma)[c] += static_cast<float>(dg);
      if (dbeta != nullptr) (*dbeta)[c] += static_cast<float>(db);
    }
    if (dx == nullptr) continue;
    for (std::size_t p = 0; p < plane; ++p) {
      mean_g[p] *= inv_c;
      mean_gx[p] *= inv_c;
    }
    float* dxb = dx->ptr() + n * s.sample();
    for (std::size_t c = 0; c < s.c; ++c) {
      const float* gc = gb + c * plane;
      const double* hc = xhat.data() + c * plane;
      float* dc = dxb + c * plane;
      const double g = gamma[c];
      for (std::size_t p = 0; p < plane; ++p) {
        dc[p] += static_cast<float>(rs[p] * (gc[p] * g - mean_g[p] - hc[p] * mean_gx[p]));
      }
    }
  }
}

Tensor simple_gate(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.c % 2 != 0) {
    throw ShapeError("simple_gate: channel count " + std::to_string(s.c) + " is odd");
  }
  const std::size_t half = s.c / 2;
  const std::size_t hp = half * s.plane();
  Tensor out({s.n, half, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    const float* a = x.ptr() + n * s.sample();
    const float* b = a + hp;
    float* o = out.ptr() + n * hp;
    for (std::size_t i = 0; i < hp; ++i) o[i] = a[i] * b[i];
  }
  return out;
}

void simple_gate_backward(const Tensor& x, const Tensor& dout, Tensor& dx) {
  const Shape& s = x.shape();
  require_same_or_alloc(&dx, s, "simple_gate backward");
  const std::size_t hp = (s.c / 2) * s.plane();
  if (dout.numel() != s.n * hp) throw ShapeError("simple_gate backward: gradient shape mismatch");
  for (std::size_t n = 0; n < s.n; ++n) {
    const float* a = x.ptr() + n * s.sample();
    const float* b = a + hp;
    const float* g = dout.ptr() + n * hp;
    float* da = dx.ptr() + n * s.sample();
    float* dbp = da + hp;
    for (std::size_t i = 0; i < hp; ++i) {
      da[i] += g[i] * b[i];
      dbp[i] += g[i] * a[i];
    }
  }
}

Tensor global_avg_pool(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.plane() == 0) throw ShapeError("global_avg_pool: zero-extent spatial input " + s.str());
  Tensor out({s.n, s.c, 1, 1});
  const float inv = 1.0f / static_cast<float>(s.plane());
  for (std::size_t i = 0; i < s.n * s.c; ++i) out[i] = sum(x.ptr() + i * s.plane(), s.plane()) * inv;
  return out;
}

void global_avg_pool_backward(const Shape& x_shape, const Tensor& dout, Tensor& dx) {
  require_same_or_alloc(&dx, x_shape, "global_avg_pool backward");
  const float inv = 1.0f / static_cast<float>(x_shape.plane());
  for (std::size_t i = 0; i < x_shape.n * x_shape.c; ++i) {
    const float g = dout[i] * inv;
    float* d = dx.ptr() + i * x_shape.plane();
    for (std::size_t p = 0; p < x_shape.plane(); ++p) d[p] += g;
  }
}

bool broadcastable(const Shape& a, const Shape& b) noexcept {
  auto ok = [](std::size_t x, std::size_t y) { return x == y || y == 1; };
  return ok(a.n, b.n) && ok(a.c, b.c) && ok(a.h, b.h) && ok(a.w, b.w);
}

namespace {

struct BroadcastIndex {
  std::size_t sn, sc, sh, sw;  // strides into b; 0 on broadcast extents
  explicit BroadcastIndex(const Shape& b) {
    sw = b.w == 1 ? 0 : 1;
    sh = b.h == 1 ? 0 : b.w;
    sc = b.c == 1 ? 0 : b.h * b.w;
    sn = b.n == 1 ? 0 : b.c * b.h * b.w;
  }
};

void check_broadcast(const Shape& a, const Shape& b, const char* what) {
  if (!broadcastable(a, b)) {
    throw ShapeError(std::string(what) + ": " + b.str() + " does not broadcast to " + a.str());
  }
}

template <class F>
void for_each_broadcast(const Shape& a, const Shape& b, F&& f) {
  const BroadcastIndex bi(b);
  std::size_t ia = 0;
  for (std::size_t n = 0; n < a.n; ++n) {
    for (std::size_t c = 0; c < a.c; ++c) {
      for (std::size_t h = 0; h < a.h; ++h) {
        const std::size_t row = n * bi.sn + c * bi.sc + h * bi.sh;
        for (std::size_t w = 0; w < a.w; ++w, ++ia) f(ia, row + w * bi.sw);
      }
    }
  }
}

}  // namespace

Tensor mul_broadcast(const Tensor& a, const Tensor& b) {
  check_broadcast(a.shape(), b.shape(), "mul");
  Tensor out(a.shape());
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
  } else if (b.shape().h == 1 && b.shape().w == 1) {
    const Shape& s = a.shape();
    const BroadcastIndex bi(b.shape());
    for (std::size_t n = 0; n < s.n; ++n) {
      for (std::size_t c = 0; c < s.c; ++c) {
        const float v = b[n * bi.sn + c * bi.sc];
        const std::size_t off = (n * s.c + c) * s.plane();
        for (std::size_t p = 0; p < s.plane(); ++p) out[off + p] = a[off + p] * v;
      }
    }
  } else {
    for_each_broadcast(a.shape(), b.shape(), [&](std::size_t ia, std::size_t ib) { out[ia] = a[ia] * b[ib]; });
  }
  return out;
}

void mul_broadcast_backward(const Tensor& a, const Tensor& b, const Tensor& dout, Tensor* da,
                            Tensor* db) {
  check_broadcast(a.shape(), b.shape(), "mul backward");
  require_same_or_alloc(da, a.shape(), "mul backward");
  require_same_or_alloc(db, b.shape(), "mul backward");
  if (b.shape().h == 1 && b.shape().w == 1) {
    const Shape& s = a.shape();
    const BroadcastIndex bi(b.shape());
    for (std::size_t n = 0; n < s.n; ++n) {
      for (std::size_t c = 0; c < s.c; ++c) {
        const std::size_t ib = n * bi.sn + c * bi.sc;
        const std::size_t off = (n * s.c + c) * s.plane();
        if (da != nullptr) axpy(b[ib], dout.ptr() + off, da->ptr() + off, s.plane());
        if (db != nullptr) (*db)[ib] += dot(dout.ptr() + off, a.ptr() + off, s.plane());
      }
    }
    return;
  }
  for_each_broadcast(a.shape(), b.shape(), [&](std::size_t ia, std::size_t ib) {
    if (da != nullptr) (*da)[ia] += dout[ia] * b[ib];
    if (db != nullptr) (*db)[ib] += dout[ia] * a[ia];
  });
}

Tensor add_broadcast(const Tensor& a, const Tensor& b) {
  check_broadcast(a.shape(), b.shape(), "add");
  Tensor out(a.shape());
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
  } else {
    for_each_broadcast(a.shape(), b.shape(), [&](std::size_t ia, std::size_t ib) { out[ia] = a[ia] + b[ib]; });
  }
  return out;
}

void add_broadcast_backward(const Shape& b_shape, const Tensor& dout, Tensor* da, Tensor* db) {
  const Shape& a_shape = dout.shape();
  check_broadcast(a_shape, b_shape, "add backward");
  require_same_or_alloc(da, a_shape, "add backward");
  require_same_or_alloc(db, b_shape, "add backward");
  if (da != nullptr) {
    for (std::size_t i = 0; i < dout.numel(); ++i) (*da)[i] += dout[i];
  }
  if (db != nullptr) {
    if (a_shape == b_shape) {
      for (std::size_t i = 0; i < dout.numel(); ++i) (*db)[i] += dout[i];
    } else {
      for_each_broadcast(a_shape, b_shape, [&](std::size_t ia, std::size_t ib) { (*db)[ib] += dout[ia]; });
    }
  }
}

Tensor pixel_shuffle(const Tensor& x, ShuffleDirection direction, std::size_t r) {
  const Shape& s = x.shape();
  if (r == 0) throw ArgumentError("pixel_shuffle: factor must be positive");
  if (direction == ShuffleDirection::up) {
    if (s.c % (r * r) != 0) {
      throw ShapeError("pixel_shuffle up: channels of " + s.str() + " not divisible by " +
                       std::to_string(r * r));
    }
    const std::size_t oc = s.c / (r * r);
    Tensor out({s.n, oc, s.h * r, s.w * r});
    for (std::size_t n = 0; n < s.n; ++n) {
      for (std::size_t c = 0; c < oc; ++c) {
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < r; ++j) {
            const std::size_t ic = c * r * r + i * r + j;
            for (std::size_t h = 0; h < s.h; ++h) {
              for (std::size_t w = 0; w < s.w; ++w) {
                out.at(n, c, h * r + i, w * r + j) = x.at(n, ic, h, w);
              }
            }
          }
        }
      }
    }
    return out;
  }
  if (s.h % r != 0 || s.w % r != 0) {
    throw ShapeError("pixel_shuffle down: spatial extents of " + s.str() + " not divisible by " +
                     std::to_string(r));
  }
  const std::size_t oh = s.h / r;
  const std::size_t ow = s.w / r;
  Tensor out({s.n, s.c * r * r, oh, ow});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < r; ++j) {
          const std::size_t occ = c * r * r + i * r + j;
          for (std::size_t h = 0; h < oh; ++h) {
            for (std::size_t w = 0; w < ow; ++w) out.at(n, occ, h, w) = x.at(n, c, h * r + i, w * r + j);
          }
        }
      }
    }
  }
  return out;
}

std::vector<float> softmax(std::span<const float> logits) {
  if (logits.empty()) throw ArgumentError("softmax: empty vector");
  const float m = *std::max_element(logits.begin(), logits.end());
  std::vector<float> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    total += out[i];
  }
  const auto inv = static_cast<float>(1.0 / total);
  for (float& v : out) v *= inv;
  return out;
}

Tensor softmax_channels(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.c == 0) throw ArgumentError("softmax: empty vector");
  Tensor out(s);
  std::vector<float> v(s.c);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < s.plane(); ++p) {
      for (std::size_t c = 0; c < s.c; ++c) v[c] = x[(n * s.c + c) * s.plane() + p];
      const std::vector<float> y = softmax(v);
      for (std::size_t c = 0; c < s.c; ++c) out[(n * s.c + c) * s.plane() + p] = y[c];
    }
  }
  return out;
}

void softmax_channels_backward(const Tensor& y, const Tensor& dout, Tensor& dx) {
  const Shape& s = y.shape();
  require_same_or_alloc(&dx, s, "softmax backward");
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < s.plane(); ++p) {
      float inner = 0.0f;
      for (std::size_t c = 0; c < s.c; ++c) {
        const std::size_t i = (n * s.c + c) * s.plane() + p;
        inner += dout[i] * y[i];
      }
      for (std::size_t c = 0; c < s.c; ++c) {
        const std::size_t i = (n * s.c + c) * s.plane() + p;
        dx[i] += y[i] * (dout[i] - inner);
      }
    }
  }
}

}  // namespace demoe::ops
