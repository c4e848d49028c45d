#include "demoe/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "demoe/error.hpp"

namespace demoe::metrics {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_window() {
  std::vector<double> g(kWindow);
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Valid-mode separable filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& p, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
  const std::size_t oh = h - kWindow + 1;
  const std::size_t ow = w - kWindow + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[static_cast<std::size_t>(k)] * p[y * w + x + static_cast<std::size_t>(k)];
      rows[y * ow + x] = acc;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += g[static_cast<std::size_t>(k)] * rows[(y + static_cast<std::size_t>(k)) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, std::size_t h, std::size_t w,
                  double peak) {
  const auto g = gaussian_window();
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  std::vector<double> aa(a.size());
  std::vector<double> bb(a.size());
  std::vector<double> ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = filter_valid(a, h, w, g);
  const auto mu_b = filter_valid(b, h, w, g);
  const auto e_aa = filter_valid(aa, h, w, g);
  const auto e_bb = filter_valid(bb, h, w, g);
  const auto e_ab = filter_valid(ab, h, w, g);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

nlohmann::json json_num(double v) {
  if (std::isfinite(v)) return v;
  return num(v);
}

}  // namespace

double psnr(const Tensor& x, const Tensor& y, double peak) {
  if (!(x.shape() == y.shape())) throw ShapeError("psnr: " + x.shape().str() + " vs " + y.shape().str());
  if (x.numel() == 0) throw ArgumentError("psnr: empty images");
  if (!(peak > 0.0)) throw ArgumentError("psnr: peak must be positive");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(x.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

std::vector<double> luminance(const Tensor& image, std::size_t n) {
  const Shape& s = image.shape();
  if (s.c != 3 && s.c != 1) throw ShapeError("luminance: expected 1 or 3 channels, got " + s.str());
  std::vector<double> out(s.plane());
  const float* base = image.ptr() + n * s.sample();
  for (std::size_t p = 0; p < s.plane(); ++p) {
    if (s.c == 1) {
      out[p] = base[p];
    } else {
      out[p] = 0.299 * base[p] + 0.587 * base[s.plane() + p] + 0.114 * base[2 * s.plane() + p];
    }
  }
  return out;
}

double ssim(const Tensor& x, const Tensor& y, double peak) {
  if (!(x.shape() == y.shape())) throw ShapeError("ssim: " + x.shape().str() + " vs " + y.shape().str());
  const Shape& s = x.shape();
  if (s.h < kWindow || s.w < kWindow) {
    throw ShapeError("ssim: images must be at least 11x11, got " + s.str());
  }
  if (s.n == 0) throw ArgumentError("ssim: empty batch");
  double total = 0.0;
  for (std::size_t n = 0; n < s.n; ++n) {
    total += ssim_plane(luminance(x, n), luminance(y, n), s.h, s.w, peak);
  }
  return total / static_cast<double>(s.n);
}

double router_accuracy(std::span<const int> predictions, std::span<const int> truth) {
  if (predictions.size() != truth.size()) {
    throw ArgumentError("router_accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                        std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) throw ArgumentError("router_accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predictions[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

void aggregate(MetricRecord& r) {
  double psum = 0.0;
  std::size_t pfinite = 0;
  double ssum = 0.0;
  std::vector<int> pred;
  std::vector<int> truth;
  for (const auto& m : r.images) {
    if (std::isfinite(m.psnr)) {
      psum += m.psnr;
      ++pfinite;
    }
    ssum += m.ssim;
    if (m.predicted >= 0 && m.label >= 0) {
      pred.push_back(m.predicted);
      truth.push_back(m.label);
    }
  }
  r.mean_psnr = pfinite > 0 ? psum / static_cast<double>(pfinite)
                            : (r.images.empty() ? 0.0 : std::numeric_limits<double>::infinity());
  r.mean_ssim = r.images.empty() ? 0.0 : ssum / static_cast<double>(r.images.size());
  r.router_accuracy = pred.empty() ? -1.0 : router_accuracy(pred, truth);
}

std::string emit_report(const MetricRecord& r, ReportFormat format) {
  std::ostringstream out;
  switch (format) {
    case ReportFormat::json: {
      nlohmann::json images = nlohmann::json::array();
      for (const auto& m : r.images) {
        images.push_back({{"id", m.id},
                          {"psnr", json_num(m.psnr)},
                          {"ssim", m.ssim},
                          {"label", m.label},
                          {"predicted", m.predicted}});
      }
      nlohmann::json agg = {{"mean_psnr", json_num(r.mean_psnr)}, {"mean_ssim", r.mean_ssim}};
      agg["router_accuracy"] = r.router_accuracy >= 0.0 ? nlohmann::json(r.router_accuracy) : nlohmann::json(nullptr);
      out << nlohmann::json{{"dataset", r.dataset}, {"images", images}, {"aggregate", agg}}.dump(2) << "\n";
      break;
    }
    case ReportFormat::csv:
      out << "id,psnr,ssim,label,predicted\n";
      for (const auto& m : r.images) {
        out << m.id << ',' << num(m.psnr) << ',' << num(m.ssim) << ',' << m.label << ',' << m.predicted << '\n';
      }
      out << "MEAN," << num(r.mean_psnr) << ',' << num(r.mean_ssim) << ",,";
      if (r.router_accuracy >= 0.0) out << num(r.router_accuracy);
      out << '\n';
      break;
    case ReportFormat::table: {
      std::size_t width = 4;
      for (const auto& m : r.images) width = std::max(width, m.id.size());
      char line[512];
      std::snprintf(line, sizeof line, "%-*s  %9s  %7s  %5s  %9s\n", static_cast<int>(width), "id", "PSNR", "SSIM",
                    "label", "predicted");
      out << line;
      for (const auto& m : r.images) {
        std::snprintf(line, sizeof line, "%-*s  %9s  %7s  %5d  %9d\n", static_cast<int>(width), m.id.c_str(),
                      short_num(m.psnr).c_str(), short_num(m.ssim).c_str(), m.label, m.predicted);
        out << line;
      }
      std::snprintf(line, sizeof line, "%-*s  %9s  %7s\n", static_cast<int>(width), "MEAN",
                    short_num(r.mean_psnr).c_str(), short_num(r.mean_ssim).c_str());
      out << line;
      if (r.router_accuracy >= 0.0) out << "router accuracy: " << short_num(r.router_accuracy) << "\n";
      break;
    }
  }
  return out.str();
}

}  // namespace demoe::metrics
