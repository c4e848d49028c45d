#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "demoe/rng.hpp"
#include "demoe/tensor.hpp"

namespace testutil {

inline demoe::Tensor random_tensor(demoe::Shape s, demoe::Rng& rng, double lo = -1.0, double hi = 1.0) {
  demoe::Tensor t(s);
  for (float& v : t.data()) v = static_cast<float>(demoe::uniform(rng, lo, hi));
  return t;
}

inline std::size_t pick(demoe::Rng& rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(demoe::uniform_int(rng, static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("demoe-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
