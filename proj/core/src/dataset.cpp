#include "demoe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "demoe/blur.hpp"
#include "demoe/error.hpp"
#include "demoe/image_io.hpp"
#include "demoe/rng.hpp"

namespace demoe::synth {

namespace fs = std::filesystem;

double mean_squared_error(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError("mean_squared_error: " + a.shape().str() + " vs " + b.shape().str());
  }
  if (a.numel() == 0) throw ArgumentError("mean_squared_error: empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.numel());
}

DatasetManifest generate_toy_dataset(const ToyDatasetConfig& config, const fs::path& out_dir) {
  const std::size_t div = std::size_t{1} << config.num_levels;
  if (config.size == 0 || config.size % div != 0) {
    throw ArgumentError("toy dataset: size " + std::to_string(config.size) + " not divisible by " +
                        std::to_string(div));
  }
  if (config.n_per_class == 0) throw ArgumentError("toy dataset: n_per_class must be positive");
  std::error_code ec;
  fs::create_directories(out_dir / "clean", ec);
  if (!ec) fs::create_directories(out_dir / "degraded", ec);
  if (ec) throw IoError("cannot create dataset directory '" + out_dir.string() + "': " + ec.message());

  DatasetManifest m;
  const std::size_t total = config.n_per_class * kNumFamilies;
  m.records.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    Rng rng = make_rng(config.seed, i);
    const auto family = static_cast<BlurFamily>(i % kNumFamilies);
    const Tensor clean = io::quantize8(procedural_image(config.size, config.size, rng));
    const BlurSpec spec = sample_blur_spec(family, config.size, config.size, rng);
    const Tensor degraded = io::quantize8(degrade(clean, spec, rng()).image);

    char name[32];
    std::snprintf(name, sizeof name, "%05zu.png", i);
    ManifestRecord r;
    r.clean = (fs::path("clean") / name).generic_string();
    r.degraded = (fs::path("degraded") / name).generic_string();
    r.label = static_cast<int>(family);
    r.mse = mean_squared_error(degraded, clean);
    io::write_png(out_dir / r.clean, clean);
    io::write_png(out_dir / r.degraded, degraded);
    m.records.push_back(std::move(r));
  }
  m.curation_log.push_back({{"op", "generate_toy_dataset"},
                            {"seed", config.seed},
                            {"n_per_class", config.n_per_class},
                            {"size", config.size}});
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

std::vector<double> mse_bin_edges(const DatasetManifest& m, std::size_t bins) {
  if (m.records.empty()) throw ArgumentError("mse histogram: empty manifest");
  if (bins < 2) throw ArgumentError("mse histogram: bins must be >= 2");
  double lo = m.records.front().mse;
  double hi = lo;
  for (const auto& r : m.records) {
    lo = std::min(lo, r.mse);
    hi = std::max(hi, r.mse);
  }
  std::vector<double> edges(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) {
    edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
  }
  edges.back() = hi;
  return edges;
}

DatasetManifest mse_histogram_subsample(const DatasetManifest& m, std::size_t bins, std::size_t per_bin,
                                        bool drop_sparse_tail, std::uint64_t seed) {
  const std::vector<double> edges = mse_bin_edges(m, bins);
  const double lo = edges.front();
  const double width = (edges.back() - lo) / static_cast<double>(bins);

  std::vector<std::vector<std::size_t>> members(bins);
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    std::size_t b = 0;
    if (width > 0.0) {
      b = static_cast<std::size_t>(std::floor((m.records[i].mse - lo) / width));
      b = std::min(b, bins - 1);
    }
    members[b].push_back(i);
  }

  std::vector<std::size_t> population(bins);
  for (std::size_t b = 0; b < bins; ++b) population[b] = members[b].size();
  const bool drop_top = drop_sparse_tail &&
                        static_cast<double>(members[bins - 1].size()) < 0.05 * static_cast<double>(m.records.size());

  std::vector<std::size_t> chosen;
  for (std::size_t b = 0; b < bins; ++b) {
    if (drop_top && b == bins - 1) continue;
    auto idx = members[b];
    Rng rng = make_rng(seed, b);
    shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(idx.size(), per_bin));
    chosen.insert(chosen.end(), idx.begin(), idx.end());
  }
  std::sort(chosen.begin(), chosen.end());

  DatasetManifest out;
  out.root = m.root;
  out.curation_log = m.curation_log;
  for (std::size_t i : chosen) out.records.push_back(m.records[i]);
  out.curation_log.push_back({{"op", "mse_histogram_subsample"},
                              {"seed", seed},
                              {"bins", bins},
                              {"per_bin", per_bin},
                              {"drop_sparse_tail", drop_sparse_tail},
                              {"bin_edges", edges},
                              {"bin_population", population},
                              {"dropped_top_bin", drop_top},
                              {"selected", chosen.size()}});
  return out;
}

DatasetManifest balance_dataset(const DatasetManifest& m, const std::vector<std::size_t>& targets,
                                std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(targets.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const int label = m.records[i].label;
    if (label < 0 || static_cast<std::size_t>(label) >= targets.size()) {
      throw ArgumentError("balance: record " + std::to_string(i) + " has label " + std::to_string(label) +
                          " without a target");
    }
    by_class[static_cast<std::size_t>(label)].push_back(i);
  }

  DatasetManifest out;
  out.root = m.root;
  out.curation_log = m.curation_log;
  nlohmann::json before = nlohmann::json::array();
  for (std::size_t c = 0; c < targets.size(); ++c) {
    const auto& idx = by_class[c];
    before.push_back(idx.size());
    if (targets[c] == 0) throw ArgumentError("balance: target for class " + std::to_string(c) + " must be positive");
    if (idx.empty()) throw ArgumentError("balance: class " + std::to_string(c) + " is absent from the manifest");
    Rng rng = make_rng(seed, c);
    std::vector<std::size_t> picked;
    picked.reserve(targets[c]);
    while (picked.size() < targets[c]) {
      auto cycle = idx;
      shuffle(cycle.begin(), cycle.end(), rng);
      const std::size_t take = std::min(cycle.size(), targets[c] - picked.size());
      picked.insert(picked.end(), cycle.begin(), cycle.begin() + static_cast<std::ptrdiff_t>(take));
    }
    for (std::size_t i : picked) out.records.push_back(m.records[i]);
  }
  out.curation_log.push_back(
      {{"op", "balance_dataset"}, {"seed", seed}, {"counts_before", before}, {"targets", targets}});
  return out;
}

std::vector<Sample> load_samples(const DatasetManifest& m) {
  std::vector<Sample> out;
  out.reserve(m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    Sample s{io::read_png(m.degraded_path(i)), io::read_png(m.clean_path(i)), m.records[i].label};
    if (!(s.degraded.shape() == s.clean.shape())) {
      throw ShapeError("record " + std::to_string(i) + ": degraded " + s.degraded.shape().str() + " vs clean " +
                       s.clean.shape().str());
    }
    out.push_back(std::move(s));
  }
  return out;
}

DatasetManifest index_paired_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw ManifestError(ManifestError::Code::io, "not a directory: " + root.string());
  DatasetManifest m;
  m.root = root;
  for (int label = 0; label < 5; ++label) {
    const std::string family = to_string(family_from_index(label));
    const fs::path blur = root / family / "blur";
    if (!fs::is_directory(blur)) continue;
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(blur)) {
      if (e.is_regular_file() && e.path().extension() == ".png") names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    for (const std::string& n : names) {
      ManifestRecord r{family + "/blur/" + n, family + "/sharp/" + n, label, 0.0};
      if (!fs::exists(root / r.clean)) {
        throw ManifestError(ManifestError::Code::missing_file, "no sharp image for " + (root / r.degraded).string());
      }
      r.mse = mean_squared_error(io::read_png(root / r.degraded), io::read_png(root / r.clean));
      m.records.push_back(std::move(r));
    }
  }
  return m;
}

}  // namespace demoe::synth
