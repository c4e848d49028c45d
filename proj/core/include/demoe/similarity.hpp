#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "demoe/checkpoint.hpp"

// Weight-space similarity between checkpoints: per-filter Pearson correlation
// and RBF-kernel CKA.
namespace demoe::sim {

using net::Taxonomy;

/// One analysable layer, filter-major: row i holds filter i's values.
struct Layer {
  std::string name;
  Taxonomy taxonomy = Taxonomy::other;
  Eigen::MatrixXd filters;
};

struct LayerGroups {
  std::vector<Layer> layers;  // checkpoint order; conv1x1, conv3x3, layernorm and sca only
  std::vector<std::string> warnings;

  std::vector<const Layer*> group(Taxonomy t) const;
};

/// Convolution weights (Cout, Cin, kh, kw) give Cout filters of Cin*kh*kw
/// values. A layer norm's gamma and beta merge into one layer of C filters
/// with 2 values each, named without the ".gamma"/".beta" suffix.
LayerGroups extract_groups(const net::Checkpoint& ckpt);

struct FilterCorr {
  double r = 0.0;
  bool skipped = false;  // a side had zero variance; r is reported as 0
};

FilterCorr pearson_filter_corr(std::span<const double> f1, std::span<const double> f2);

struct LayerCorr {
  std::optional<double> R;  // empty when every filter was skipped
  std::size_t filters = 0;
  std::size_t skipped = 0;
};

LayerCorr mean_layer_corr(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct Bandwidth {
  enum class Kind { median_heuristic, fixed };
  Kind kind = Kind::median_heuristic;
  double sigma = 1.0;

  static Bandwidth median() { return {}; }
  static Bandwidth fixed_sigma(double s) { return {Kind::fixed, s}; }
};

struct KernelMatrix {
  Eigen::MatrixXd K;
  double sigma = 1.0;
};

/// K_ij = exp(-|x_i - x_j|^2 / (2 sigma^2)) over the rows of X. The median
/// heuristic uses the median nonzero pairwise distance, or 1 when every row
/// is identical.
KernelMatrix rbf_kernel_matrix(const Eigen::MatrixXd& X, Bandwidth bw = {});

/// trace(K H L H) / (n-1)^2, evaluated as the elementwise product of the
/// double-centered matrices.
double hsic(const Eigen::MatrixXd& K, const Eigen::MatrixXd& L);

/// HSIC(K,L) / sqrt(HSIC(K,K) HSIC(L,L)); empty when either self term is 0.
std::optional<double> cka(const Eigen::MatrixXd& K, const Eigen::MatrixXd& L);

struct LayerReport {
  std::string name;
  Taxonomy taxonomy = Taxonomy::other;
  std::optional<double> R;
  std::optional<double> cka;
  std::size_t filters = 0;
  std::size_t skipped = 0;
  bool high_correlation = false;  // R > threshold

  bool operator==(const LayerReport&) const = default;
};

struct SimilarityConfig {
  Bandwidth bandwidth;
  double threshold = 0.7;
};

struct SimilarityReport {
  double threshold = 0.7;
  std::vector<LayerReport> layers;
  std::vector<std::string> warnings;

  bool operator==(const SimilarityReport&) const = default;
};

/// Throws ArgumentError naming the first layer whose name or shape differs.
SimilarityReport similarity_report(const net::Checkpoint& a, const net::Checkpoint& b,
                                   const SimilarityConfig& config = {});

nlohmann::json report_to_json(const SimilarityReport& r);
SimilarityReport report_from_json(const nlohmann::json& j);
/// Aligned-column text table with a per-taxonomy mean R summary.
std::string report_table(const SimilarityReport& r);

}  // namespace demoe::sim
