#pragma once

#include <span>
#include <string>
#include <vector>

#include "demoe/tensor.hpp"

namespace demoe::metrics {

/// 10 log10(peak^2 / MSE) over all channels jointly; +infinity when the
/// images are identical.
double psnr(const Tensor& x, const Tensor& y, double peak = 1.0);

/// Mean SSIM over valid 11x11 Gaussian (sigma 1.5) windows on the
/// 0.299/0.587/0.114 luminance of RGB inputs; single-channel inputs are used
/// as is. Batched inputs return the batch mean.
double ssim(const Tensor& x, const Tensor& y, double peak = 1.0);

/// Per-image luminance plane (H*W), row-major, in double precision.
std::vector<double> luminance(const Tensor& image, std::size_t n = 0);

double router_accuracy(std::span<const int> predictions, std::span<const int> truth);

struct ImageMetrics {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  int label = -1;
  int predicted = -1;
};

struct MetricRecord {
  std::string dataset;
  std::vector<ImageMetrics> images;
  double mean_psnr = 0.0;  // over finite values; +inf when every value is infinite
  double mean_ssim = 0.0;
  double router_accuracy = -1.0;  // -1 when no predictions were recorded
};

/// Fills the aggregate fields from `images`.
void aggregate(MetricRecord& r);

enum class ReportFormat { json, csv, table };

/// Per-image rows followed by an aggregate row. Infinite PSNR prints as "inf".
std::string emit_report(const MetricRecord& r, ReportFormat format);

}  // namespace demoe::metrics
