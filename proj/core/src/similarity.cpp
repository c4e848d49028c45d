#include "demoe/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "demoe/error.hpp"

namespace demoe::sim {

namespace {

bool analysed(Taxonomy t) {
  return t == Taxonomy::conv1x1 || t == Taxonomy::conv3x3 || t == Taxonomy::layernorm || t == Taxonomy::sca;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

Eigen::MatrixXd filter_major(const Tensor& t) {
  const Shape& s = t.shape();
  const std::size_t rows = s.n;
  const std::size_t cols = s.c * s.h * s.w;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t[r * cols + c];
    }
  }
  return m;
}

std::optional<double> json_opt(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

Taxonomy taxonomy_from_string(const std::string& s) {
  for (auto t : {Taxonomy::conv1x1, Taxonomy::conv3x3, Taxonomy::layernorm, Taxonomy::sca, Taxonomy::other}) {
    if (net::to_string(t) == s) return t;
  }
  throw IoError("similarity report: unknown taxonomy '" + s + "'");
}

}  // namespace

std::vector<const Layer*> LayerGroups::group(Taxonomy t) const {
  std::vector<const Layer*> out;
  for (const auto& l : layers) {
    if (l.taxonomy == t) out.push_back(&l);
  }
  return out;
}

LayerGroups extract_groups(const net::Checkpoint& ckpt) {
  LayerGroups g;
  for (const auto& rec : ckpt.records()) {
    if (rec.taxonomy == Taxonomy::untagged) {
      g.warnings.push_back("parameter '" + rec.name + "' has no taxonomy tag; treated as other");
      continue;
    }
    if (!analysed(rec.taxonomy)) continue;
    if (rec.taxonomy == Taxonomy::layernorm) {
      if (ends_with(rec.name, ".beta")) continue;  // consumed with its gamma
      if (!ends_with(rec.name, ".gamma")) {
        g.warnings.push_back("layer-norm parameter '" + rec.name + "' is not a gamma/beta pair; skipped");
        continue;
      }
      const std::string base = rec.name.substr(0, rec.name.size() - 6);
      const auto* beta = ckpt.find(base + ".beta");
      const std::size_t c = rec.value.numel();
      if (beta == nullptr || beta->value.numel() != c) {
        g.warnings.push_back("layer norm '" + base + "' lacks a matching beta; skipped");
        continue;
      }
      Eigen::MatrixXd m(static_cast<Eigen::Index>(c), 2);
      for (std::size_t i = 0; i < c; ++i) {
        m(static_cast<Eigen::Index>(i), 0) = rec.value[i];
        m(static_cast<Eigen::Index>(i), 1) = beta->value[i];
      }
      g.layers.push_back({base, Taxonomy::layernorm, std::move(m)});
      continue;
    }
    g.layers.push_back({rec.name, rec.taxonomy, filter_major(rec.value)});
  }
  return g;
}

FilterCorr pearson_filter_corr(std::span<const double> f1, std::span<const double> f2) {
  if (f1.size() != f2.size()) {
    throw ArgumentError("pearson: filter lengths differ (" + std::to_string(f1.size()) + " vs " +
                        std::to_string(f2.size()) + ")");
  }
  if (f1.size() < 2) throw ArgumentError("pearson: filters need at least 2 values");
  const auto n = static_cast<double>(f1.size());
  double m1 = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < f1.size(); ++i) {
    m1 += f1[i];
    m2 += f2[i];
  }
  m1 /= n;
  m2 /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < f1.size(); ++i) {
    const double a = f1[i] - m1;
    const double b = f2[i] - m2;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (sxx == 0.0 || syy == 0.0) return {0.0, true};
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

LayerCorr mean_layer_corr(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("mean_layer_corr: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  LayerCorr out;
  out.filters = static_cast<std::size_t>(a.rows());
  double sum = 0.0;
  std::size_t used = 0;
  std::vector<double> ra(static_cast<std::size_t>(a.cols()));
  std::vector<double> rb(ra.size());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      ra[static_cast<std::size_t>(j)] = a(i, j);
      rb[static_cast<std::size_t>(j)] = b(i, j);
    }
    const FilterCorr fc = pearson_filter_corr(ra, rb);
    if (fc.skipped) {
      ++out.skipped;
      continue;
    }
    sum += fc.r;
    ++used;
  }
  if (used > 0) out.R = sum / static_cast<double>(used);
  return out;
}

KernelMatrix rbf_kernel_matrix(const Eigen::MatrixXd& X, Bandwidth bw) {
  const Eigen::Index n = X.rows();
  if (n < 2) throw ArgumentError("rbf kernel: need at least 2 rows");
  if (bw.kind == Bandwidth::Kind::fixed && !(bw.sigma > 0.0)) {
    throw ArgumentError("rbf kernel: sigma must be positive, got " + std::to_string(bw.sigma));
  }
  Eigen::MatrixXd d2(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d2(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = (X.row(i) - X.row(j)).squaredNorm();
      d2(i, j) = v;
      d2(j, i) = v;
    }
  }
  double sigma = bw.sigma;
  if (bw.kind == Bandwidth::Kind::median_heuristic) {
    std::vector<double> dist;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        if (d2(i, j) > 0.0) dist.push_back(std::sqrt(d2(i, j)));
      }
    }
    if (dist.empty()) {
      sigma = 1.0;
    } else {
      std::sort(dist.begin(), dist.end());
      const std::size_t m = dist.size();
      sigma = m % 2 == 1 ? dist[m / 2] : 0.5 * (dist[m / 2 - 1] + dist[m / 2]);
    }
  }
  KernelMatrix out{Eigen::MatrixXd(n, n), sigma};
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.K(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = std::exp(-d2(i, j) * inv);
      out.K(i, j) = v;
      out.K(j, i) = v;
    }
  }
  return out;
}

namespace {

Eigen::MatrixXd double_center(const Eigen::MatrixXd& K) {
  const Eigen::VectorXd row = K.rowwise().mean();
  const Eigen::RowVectorXd col = K.colwise().mean();
  const double all = K.mean();
  Eigen::MatrixXd c = K;
  c.colwise() -= row;
  c.rowwise() -= col;
  c.array() += all;
  return c;
}

}  // namespace

double hsic(const Eigen::MatrixXd& K, const Eigen::MatrixXd& L) {
  if (K.rows() != K.cols() || L.rows() != L.cols() || K.rows() != L.rows()) {
    throw ShapeError("hsic: kernel matrices must be square with equal size");
  }
  const Eigen::Index n = K.rows();
  if (n < 2) throw ArgumentError("hsic: need n >= 2");
  const double nm1 = static_cast<double>(n - 1);
  // trace(K H L H) = sum_ij (HKH)_ij (HLH)_ji
  return (double_center(K).cwiseProduct(double_center(L).transpose())).sum() / (nm1 * nm1);
}

std::optional<double> cka(const Eigen::MatrixXd& K, const Eigen::MatrixXd& L) {
  const double kk = hsic(K, K);
  const double ll = hsic(L, L);
  if (!(kk > 0.0) || !(ll > 0.0)) return std::nullopt;
  return hsic(K, L) / std::sqrt(kk * ll);
}

SimilarityReport similarity_report(const net::Checkpoint& a, const net::Checkpoint& b,
                                   const SimilarityConfig& config) {
  const LayerGroups ga = extract_groups(a);
  const LayerGroups gb = extract_groups(b);
  SimilarityReport rep;
  rep.threshold = config.threshold;
  rep.warnings = ga.warnings;
  for (const auto& w : gb.warnings) rep.warnings.push_back(w);

  const std::size_t common = std::min(ga.layers.size(), gb.layers.size());
  for (std::size_t i = 0; i < common; ++i) {
    const Layer& la = ga.layers[i];
    const Layer& lb = gb.layers[i];
    if (la.name != lb.name || la.taxonomy != lb.taxonomy) {
      throw ArgumentError("similarity: architectures differ at layer '" + la.name + "' vs '" + lb.name + "'");
    }
    if (la.filters.rows() != lb.filters.rows() || la.filters.cols() != lb.filters.cols()) {
      throw ArgumentError("similarity: layer '" + la.name + "' has shape " + std::to_string(la.filters.rows()) + "x" +
                          std::to_string(la.filters.cols()) + " vs " + std::to_string(lb.filters.rows()) + "x" +
                          std::to_string(lb.filters.cols()));
    }
  }
  if (ga.layers.size() != gb.layers.size()) {
    const auto& longer = ga.layers.size() > gb.layers.size() ? ga.layers : gb.layers;
    throw ArgumentError("similarity: architectures differ at layer '" + longer[common].name +
                        "' (present in one checkpoint only)");
  }

  for (std::size_t i = 0; i < common; ++i) {
    const Layer& la = ga.layers[i];
    const Layer& lb = gb.layers[i];
    LayerReport lr;
    lr.name = la.name;
    lr.taxonomy = la.taxonomy;
    const LayerCorr corr = mean_layer_corr(la.filters, lb.filters);
    lr.R = corr.R;
    lr.filters = corr.filters;
    lr.skipped = corr.skipped;
    if (la.filters.rows() >= 2) {
      const KernelMatrix ka = rbf_kernel_matrix(la.filters, config.bandwidth);
      const KernelMatrix kb = rbf_kernel_matrix(lb.filters, config.bandwidth);
      lr.cka = cka(ka.K, kb.K);
    }
    lr.high_correlation = lr.R.has_value() && *lr.R > config.threshold;
    rep.layers.push_back(std::move(lr));
  }
  return rep;
}

nlohmann::json report_to_json(const SimilarityReport& r) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"name", l.name},
                      {"taxonomy", net::to_string(l.taxonomy)},
                      {"R", opt_json(l.R)},
                      {"cka", opt_json(l.cka)},
                      {"filters", l.filters},
                      {"skipped", l.skipped},
                      {"high_correlation", l.high_correlation}});
  }
  return {{"threshold", r.threshold}, {"layers", layers}, {"warnings", r.warnings}};
}

SimilarityReport report_from_json(const nlohmann::json& j) {
  try {
    SimilarityReport r;
    r.threshold = j.at("threshold").get<double>();
    for (const auto& l : j.at("layers")) {
      LayerReport lr;
      lr.name = l.at("name").get<std::string>();
      lr.taxonomy = taxonomy_from_string(l.at("taxonomy").get<std::string>());
      lr.R = json_opt(l.at("R"));
      lr.cka = json_opt(l.at("cka"));
      lr.filters = l.at("filters").get<std::size_t>();
      lr.skipped = l.at("skipped").get<std::size_t>();
      lr.high_correlation = l.at("high_correlation").get<bool>();
      r.layers.push_back(std::move(lr));
    }
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("similarity report: ") + e.what());
  }
}

std::string report_table(const SimilarityReport& r) {
  std::size_t width = 5;
  for (const auto& l : r.layers) width = std::max(width, l.name.size());
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("undef");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return std::string(buf);
  };
  std::ostringstream out;
  char line[512];
  std::snprintf(line, sizeof line, "%-*s  %-9s  %8s  %8s  %7s  %7s  %s\n", static_cast<int>(width), "layer", "type", "R",
                "CKA", "filters", "skipped", "R>thr");
  out << line;
  std::map<std::string, std::pair<double, std::size_t>> per_type;
  for (const auto& l : r.layers) {
    std::snprintf(line, sizeof line, "%-*s  %-9s  %8s  %8s  %7zu  %7zu  %s\n", static_cast<int>(width), l.name.c_str(),
                  net::to_string(l.taxonomy).c_str(), fmt(l.R).c_str(), fmt(l.cka).c_str(), l.filters, l.skipped,
                  l.high_correlation ? "yes" : "no");
    out << line;
    if (l.R) {
      auto& acc = per_type[net::to_string(l.taxonomy)];
      acc.first += *l.R;
      ++acc.second;
    }
  }
  out << "\nmean R by type (threshold " << r.threshold << ")\n";
  for (const auto& [name, acc] : per_type) {
    std::snprintf(line, sizeof line, "  %-9s  %.4f over %zu layers\n", name.c_str(), acc.first / acc.second, acc.second);
    out << line;
  }
  for (const auto& w : r.warnings) out << "warning: " << w << "\n";
  return out.str();
}

}  // namespace demoe::sim
