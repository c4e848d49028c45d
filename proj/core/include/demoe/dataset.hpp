#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "demoe/manifest.hpp"
#include "demoe/tensor.hpp"

namespace demoe::synth {

struct ToyDatasetConfig {
  std::size_t n_per_class = 100;
  std::size_t size = 32;
  std::uint64_t seed = 0;
  std::size_t num_levels = 2;  // size must be divisible by 2^num_levels
};

/// Writes clean/ and degraded/ PNG pairs plus manifest.json under `out_dir`.
/// Record i has label i % 5 and draws all randomness from (seed, i). Stored
/// MSE is computed on the 8-bit values actually written.
DatasetManifest generate_toy_dataset(const ToyDatasetConfig& config, const std::filesystem::path& out_dir);

/// Equal-width MSE histogram over [min, max]; optionally drops the top bin
/// when it holds < 5% of the records; draws up to `per_bin` records without
/// replacement from each remaining bin. Output keeps input order.
DatasetManifest mse_histogram_subsample(const DatasetManifest& m, std::size_t bins, std::size_t per_bin,
                                        bool drop_sparse_tail, std::uint64_t seed);

/// Bin edges used by mse_histogram_subsample (bins + 1 values).
std::vector<double> mse_bin_edges(const DatasetManifest& m, std::size_t bins);

/// Resizes every class to targets[label]: repeats whole shuffled cycles and
/// then a shuffled partial cycle when short, subsamples when long. Output is
/// grouped by label.
DatasetManifest balance_dataset(const DatasetManifest& m, const std::vector<std::size_t>& targets,
                                std::uint64_t seed);

/// Indexes a paired real dataset laid out as
///
///   <root>/<family>/blur/<name>.png
///   <root>/<family>/sharp/<name>.png
///
/// where <family> is one of global_motion, local_motion, defocus,
/// lowlight_motion, mixed_motion (the label order). Missing families are
/// skipped; a blurred image without a sharp file of the same name is an
/// error. Records are sorted by family then file name; MSE is computed from
/// the PNGs.
DatasetManifest index_paired_dataset(const std::filesystem::path& root);

struct Sample {
  Tensor degraded;  // (1, 3, H, W)
  Tensor clean;
  int label = 0;
};

std::vector<Sample> load_samples(const DatasetManifest& m);

double mean_squared_error(const Tensor& a, const Tensor& b);

}  // namespace demoe::synth
