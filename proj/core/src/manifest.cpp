#include "demoe/manifest.hpp"

#include <fstream>
#include <sstream>

namespace demoe::synth {

using nlohmann::json;

std::vector<std::size_t> DatasetManifest::class_counts(std::size_t num_classes) const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& r : records) {
    if (r.label >= 0 && static_cast<std::size_t>(r.label) < num_classes) ++counts[static_cast<std::size_t>(r.label)];
  }
  return counts;
}

json manifest_to_json(const DatasetManifest& m) {
  json records = json::array();
  for (const auto& r : m.records) {
    records.push_back({{"degraded", r.degraded}, {"clean", r.clean}, {"label", r.label}, {"mse", r.mse}});
  }
  json log = json::array();
  for (const auto& e : m.curation_log) log.push_back(e);
  return {{"schema_version", kManifestSchemaVersion}, {"records", records}, {"curation_log", log}};
}

DatasetManifest manifest_from_json(const json& j) {
  using Code = ManifestError::Code;
  if (!j.is_object()) throw ManifestError(Code::schema, "manifest: top level must be an object");
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer()) {
    throw ManifestError(Code::schema, "manifest: missing integer schema_version");
  }
  const int version = j["schema_version"].get<int>();
  if (version != kManifestSchemaVersion) {
    throw ManifestError(Code::version_mismatch, "manifest: schema_version " + std::to_string(version) +
                                                    " unsupported (expected " +
                                                    std::to_string(kManifestSchemaVersion) + ")");
  }
  if (!j.contains("records") || !j["records"].is_array()) {
    throw ManifestError(Code::schema, "manifest: missing records array");
  }
  DatasetManifest m;
  std::size_t i = 0;
  for (const auto& r : j["records"]) {
    const bool ok = r.is_object() && r.contains("degraded") && r["degraded"].is_string() && r.contains("clean") &&
                    r["clean"].is_string() && r.contains("label") && r["label"].is_number_integer() &&
                    r.contains("mse") && r["mse"].is_number();
    if (!ok) throw ManifestError(Code::schema, "manifest: record " + std::to_string(i) + " is malformed");
    m.records.push_back({r["degraded"].get<std::string>(), r["clean"].get<std::string>(), r["label"].get<int>(),
                         r["mse"].get<double>()});
    ++i;
  }
  if (j.contains("curation_log")) {
    if (!j["curation_log"].is_array()) throw ManifestError(Code::schema, "manifest: curation_log must be an array");
    for (const auto& e : j["curation_log"]) m.curation_log.push_back(e);
  }
  return m;
}

std::string serialize_manifest(const DatasetManifest& m) { return manifest_to_json(m).dump(2) + "\n"; }

DatasetManifest deserialize_manifest(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ManifestError(ManifestError::Code::parse, std::string("manifest: ") + e.what());
  }
  return manifest_from_json(j);
}

void save_manifest(DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ManifestError(ManifestError::Code::io, "cannot write manifest '" + path.string() + "'");
  out << serialize_manifest(m);
  if (!out) throw ManifestError(ManifestError::Code::io, "write failed for manifest '" + path.string() + "'");
  m.root = path.parent_path();
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError(ManifestError::Code::io, "cannot read manifest '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  DatasetManifest m = deserialize_manifest(ss.str());
  m.root = path.parent_path();
  return m;
}

void validate_manifest(const DatasetManifest& m, std::size_t num_classes) {
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    if (r.label < 0 || static_cast<std::size_t>(r.label) >= num_classes) {
      throw ManifestError(ManifestError::Code::bad_label,
                          "record " + std::to_string(i) + ": label " + std::to_string(r.label) + " outside [0, " +
                              std::to_string(num_classes) + ")");
    }
    for (const auto& p : {m.degraded_path(i), m.clean_path(i)}) {
      if (!std::filesystem::is_regular_file(p)) {
        throw ManifestError(ManifestError::Code::missing_file,
                            "record " + std::to_string(i) + ": missing file '" + p.string() + "'");
      }
    }
  }
}

}  // namespace demoe::synth
