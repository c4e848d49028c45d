#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "demoe/model.hpp"
#include "util.hpp"

namespace fixtures {

using demoe::Tensor;
using demoe::net::ArchConfig;
using demoe::net::Checkpoint;

/// Fresh checkpoint with every parameter redrawn, residual scales included,
/// so no block reduces to the identity.
inline Checkpoint random_checkpoint(const ArchConfig& cfg, std::uint64_t seed, double scale = 0.5) {
  Checkpoint ck = demoe::net::init_checkpoint(cfg, seed);
  demoe::Rng rng = demoe::make_rng(seed, 77);
  for (auto& r : ck.records()) {
    for (float& v : r.value.data()) v = static_cast<float>(demoe::uniform(rng, -scale, scale));
    if (r.name.ends_with("gamma") && r.name.find("norm") != std::string::npos) {
      for (float& v : r.value.data()) v += 1.0f;
    }
  }
  return ck;
}

inline Tensor random_image(std::size_t n, std::size_t h, std::size_t w, demoe::Rng& rng) {
  return testutil::random_tensor({n, 3, h, w}, rng, 0.0, 1.0);
}

/// Brute-force gate for one sample: indices of the k largest weights (ties to
/// the lower index), renormalized by their mass, as (index, weight) pairs.
inline std::vector<std::pair<std::size_t, double>> brute_gate(const std::vector<double>& w, std::size_t k) {
  std::vector<std::pair<std::size_t, double>> out;
  std::vector<bool> taken(w.size(), false);
  for (std::size_t step = 0; step < k; ++step) {
    std::size_t best = w.size();
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (taken[i]) continue;
      if (best == w.size() || w[i] > w[best]) best = i;
    }
    taken[best] = true;
    out.emplace_back(best, w[best]);
  }
  double mass = 0.0;
  for (const auto& p : out) mass += p.second;
  for (auto& p : out) p.second /= mass;
  return out;
}

inline double max_abs_diff(const Tensor& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(static_cast<double>(a[i]) - b[i]));
  return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace fixtures
