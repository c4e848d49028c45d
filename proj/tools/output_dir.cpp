#include "output_dir.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>

#include "demoe/error.hpp"

namespace demoe::cli {

namespace fs = std::filesystem;

namespace {

void move_file(const fs::path& from, const fs::path& to) {
  if (to.has_parent_path()) fs::create_directories(to.parent_path());
  std::error_code ec;
  fs::rename(from, to, ec);
  if (ec) {
    fs::copy_file(from, to, fs::copy_options::overwrite_existing);
    fs::remove(from);
  }
}

}  // namespace

OutputDir::OutputDir(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  created_ = fs::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
  std::random_device rd;
  staging_ = dir_ / (".partial-" + std::to_string(rd()));
  fs::create_directories(staging_);
}

OutputDir::~OutputDir() {
  std::error_code ec;
  fs::remove_all(staging_, ec);
  if (!committed_ && created_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
}

fs::path OutputDir::file(const std::string& rel) {
  const fs::path p = staging_ / rel;
  fs::create_directories(p.parent_path());
  return p;
}

fs::path OutputDir::external(const fs::path& target) {
  const fs::path p = staging_ / ".external" / std::to_string(externals_.size());
  fs::create_directories(p.parent_path());
  externals_.emplace_back(p, target);
  return p;
}

void OutputDir::commit() {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& [from, to] : externals_) {
    if (!fs::exists(from)) continue;
    files.push_back({{"path", fs::absolute(to).string()}, {"bytes", fs::file_size(from)}});
    move_file(from, to);
  }
  fs::remove_all(staging_ / ".external");

  std::vector<fs::path> staged;
  for (const auto& e : fs::recursive_directory_iterator(staging_)) {
    if (e.is_regular_file()) staged.push_back(fs::relative(e.path(), staging_));
  }
  std::sort(staged.begin(), staged.end());
  for (const fs::path& rel : staged) {
    files.push_back({{"path", rel.generic_string()}, {"bytes", fs::file_size(staging_ / rel)}});
    move_file(staging_ / rel, dir_ / rel);
  }
  std::ofstream out(dir_ / "produced_files.json");
  out << nlohmann::json{{"files", files}}.dump(2) << "\n";
  if (!out) throw IoError("cannot write " + (dir_ / "produced_files.json").string());
  committed_ = true;
}

}  // namespace demoe::cli
