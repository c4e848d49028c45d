#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "demoe/error.hpp"

namespace demoe::synth {

inline constexpr int kManifestSchemaVersion = 1;

struct ManifestRecord {
  std::string degraded;  // relative to the manifest directory
  std::string clean;
  int label = 0;
  double mse = 0.0;

  bool operator==(const ManifestRecord&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestRecord> records;
  std::vector<nlohmann::json> curation_log;
  /// Directory record paths resolve against; not serialized.
  std::filesystem::path root;

  std::filesystem::path degraded_path(std::size_t i) const { return root / records[i].degraded; }
  std::filesystem::path clean_path(std::size_t i) const { return root / records[i].clean; }

  /// Number of records per label in [0, num_classes).
  std::vector<std::size_t> class_counts(std::size_t num_classes) const;
};

class ManifestError : public IoError {
 public:
  enum class Code { io, parse, version_mismatch, schema, missing_file, bad_label };

  ManifestError(Code code, const std::string& what) : IoError(what), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

nlohmann::json manifest_to_json(const DatasetManifest& m);
/// Throws ManifestError (version_mismatch, schema) on malformed documents.
DatasetManifest manifest_from_json(const nlohmann::json& j);

std::string serialize_manifest(const DatasetManifest& m);
DatasetManifest deserialize_manifest(const std::string& text);

/// Writes JSON; the manifest's root becomes the file's directory.
void save_manifest(DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Checks labels in [0, num_classes) and that every referenced file exists.
void validate_manifest(const DatasetManifest& m, std::size_t num_classes);

}  // namespace demoe::synth
