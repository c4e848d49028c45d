#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace demoe::cli {

/// Collects a run's artifacts in a hidden staging directory and moves them
/// into place on commit(). Anything not committed is deleted on destruction.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir);
  ~OutputDir();
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

  const std::filesystem::path& dir() const noexcept { return dir_; }
  const std::filesystem::path& staging() const noexcept { return staging_; }

  /// Staging path for `rel`, relative to the output directory.
  std::filesystem::path file(const std::string& rel);
  /// Staging path for a file whose final location is `target`, which may lie
  /// outside the output directory.
  std::filesystem::path external(const std::filesystem::path& target);

  /// Moves staged files into place and writes produced_files.json listing
  /// every file of the run with its size.
  void commit();

 private:
  std::filesystem::path dir_;
  std::filesystem::path staging_;
  std::vector<std::pair<std::filesystem::path, std::filesystem::path>> externals_;
  bool created_ = false;
  bool committed_ = false;
};

}  // namespace demoe::cli
