#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <iterator>

#include "demoe/dataset.hpp"
#include "demoe/error.hpp"
#include "demoe/image_io.hpp"
#include "support/util.hpp"

using namespace demoe;
using namespace demoe::synth;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

DatasetManifest synthetic(std::size_t n, std::uint64_t seed) {
  DatasetManifest m;
  Rng rng = make_rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    m.records.push_back({"d" + std::to_string(i), "c" + std::to_string(i), static_cast<int>(i % 3), uniform(rng, 0, 1)});
  }
  return m;
}

ManifestError::Code code_of(const std::string& text) {
  try {
    deserialize_manifest(text);
  } catch (const ManifestError& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ManifestError::Code::io;
}

}  // namespace

TEST_CASE("toy dataset: counts, determinism and stored MSE") {
  const testutil::TempDir a("toy-a");
  const testutil::TempDir b("toy-b");
  const DatasetManifest m = generate_toy_dataset({100, 32, 3, 2}, a.path());
  const DatasetManifest m2 = generate_toy_dataset({100, 32, 3, 2}, b.path());
  CHECK(m.records.size() == 500);
  CHECK(m.class_counts(5) == std::vector<std::size_t>(5, 100));
  CHECK(m.records == m2.records);
  CHECK(slurp(a.path() / "manifest.json") == slurp(b.path() / "manifest.json"));
  for (std::size_t i = 0; i < m.records.size(); i += 37) {
    CHECK(slurp(m.degraded_path(i)) == slurp(m2.degraded_path(i)));
    CHECK(slurp(m.clean_path(i)) == slurp(m2.clean_path(i)));
  }
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const double mse = mean_squared_error(io::read_png(m.degraded_path(i)), io::read_png(m.clean_path(i)));
    CHECK(std::fabs(mse - m.records[i].mse) <= 1e-9);
  }
  CHECK_NOTHROW(validate_manifest(load_manifest(a.path() / "manifest.json"), 5));
  CHECK_THROWS_AS(generate_toy_dataset({10, 30, 0, 2}, a.path() / "bad"), ArgumentError);
}

TEST_CASE("png round trip equals quantization") {
  const testutil::TempDir dir("png");
  Rng rng = make_rng(1);
  const Tensor x = testutil::random_tensor({1, 3, 9, 7}, rng, -0.1, 1.1);
  io::write_png(dir.path() / "x.png", x);
  CHECK(bitwise_equal(io::read_png(dir.path() / "x.png"), io::quantize8(x)));
  CHECK_THROWS_AS(io::read_png(dir.path() / "missing.png"), IoError);
}

TEST_CASE("histogram subsampling") {
  const DatasetManifest m = synthetic(400, 2);
  const auto edges = mse_bin_edges(m, 4);
  CHECK(edges.size() == 5);
  CHECK(std::is_sorted(edges.begin(), edges.end()));

  const DatasetManifest all = mse_histogram_subsample(m, 4, 100000, false, 1);
  CHECK(all.records == m.records);

  const DatasetManifest s1 = mse_histogram_subsample(m, 4, 20, true, 9);
  const DatasetManifest s2 = mse_histogram_subsample(m, 4, 20, true, 9);
  CHECK(s1.records == s2.records);
  CHECK(s1.records.size() == 80);
  CHECK(s1.curation_log.back()["op"] == "mse_histogram_subsample");
  std::vector<std::string> ids;
  for (const auto& r : s1.records) ids.push_back(r.degraded);
  std::sort(ids.begin(), ids.end());
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());

  DatasetManifest tail = synthetic(200, 3);
  for (auto& r : tail.records) r.mse *= 0.5;
  tail.records[0].mse = 1.0;
  const DatasetManifest dropped = mse_histogram_subsample(tail, 4, 100000, true, 1);
  CHECK(dropped.records.size() == 199);

  CHECK_THROWS_AS(mse_histogram_subsample(DatasetManifest{}, 4, 10, true, 1), ArgumentError);
  CHECK_THROWS_AS(mse_histogram_subsample(m, 1, 10, true, 1), ArgumentError);
}

TEST_CASE("class balancing") {
  const DatasetManifest m = synthetic(30, 4);
  const DatasetManifest same = balance_dataset(m, {10, 10, 10}, 2);
  auto a = m.records;
  auto b = same.records;
  const auto by_id = [](const ManifestRecord& x, const ManifestRecord& y) { return x.degraded < y.degraded; };
  std::sort(a.begin(), a.end(), by_id);
  std::sort(b.begin(), b.end(), by_id);
  CHECK(a == b);

  const DatasetManifest up = balance_dataset(m, {35, 4, 10}, 2);
  CHECK(up.class_counts(3) == std::vector<std::size_t>{35, 4, 10});
  CHECK(up.records == balance_dataset(m, {35, 4, 10}, 2).records);
  CHECK_FALSE(up.records == balance_dataset(m, {35, 4, 10}, 3).records);

  CHECK_THROWS_AS(balance_dataset(m, {10, 10, 10, 10}, 1), ArgumentError);
  CHECK_THROWS_AS(balance_dataset(m, {10, 0, 10}, 1), ArgumentError);
  CHECK_THROWS_AS(balance_dataset(m, {10, 10}, 1), ArgumentError);
}

TEST_CASE("manifest serialization and errors") {
  DatasetManifest m = synthetic(5, 5);
  m.curation_log.push_back({{"op", "x"}, {"seed", 3}});
  const DatasetManifest back = deserialize_manifest(serialize_manifest(m));
  CHECK(back.records == m.records);
  CHECK(back.curation_log == m.curation_log);

  CHECK(code_of("[1, 2") == ManifestError::Code::parse);
  CHECK(code_of(R"({"schema_version": 7, "records": []})") == ManifestError::Code::version_mismatch);
  CHECK(code_of(R"({"schema_version": 1})") == ManifestError::Code::schema);
  CHECK(code_of(R"({"schema_version": 1, "records": [{"degraded": 3}]})") == ManifestError::Code::schema);

  const testutil::TempDir dir("manifest");
  save_manifest(m, dir.path() / "m.json");
  CHECK(m.root == dir.path());
  try {
    validate_manifest(m, 5);
    FAIL("missing files accepted");
  } catch (const ManifestError& e) {
    CHECK(e.code() == ManifestError::Code::missing_file);
  }
  DatasetManifest bad = m;
  bad.records[0].label = 9;
  try {
    validate_manifest(bad, 5);
    FAIL("bad label accepted");
  } catch (const ManifestError& e) {
    CHECK(e.code() == ManifestError::Code::bad_label);
  }
  try {
    load_manifest(dir.path() / "none.json");
    FAIL("missing manifest accepted");
  } catch (const ManifestError& e) {
    CHECK(e.code() == ManifestError::Code::io);
  }
}

TEST_CASE("paired real-dataset layout") {
  const testutil::TempDir dir("paired");
  const auto put = [&](const std::string& rel, float v) {
    std::filesystem::create_directories((dir.path() / rel).parent_path());
    io::write_png(dir.path() / rel, Tensor({1, 3, 4, 4}, v));
  };
  put("defocus/blur/b.png", 0.4f);
  put("defocus/sharp/b.png", 0.6f);
  put("defocus/blur/a.png", 0.2f);
  put("defocus/sharp/a.png", 0.2f);
  put("global_motion/blur/x.png", 0.0f);
  put("global_motion/sharp/x.png", 1.0f);
  const DatasetManifest m = index_paired_dataset(dir.path());
  REQUIRE(m.records.size() == 3);
  CHECK(m.records[0].label == 0);
  CHECK(m.records[1].degraded == "defocus/blur/a.png");
  CHECK(m.records[1].label == 2);
  CHECK(m.records[1].mse == 0.0);
  CHECK(m.records[0].mse == doctest::Approx(1.0));
  CHECK_NOTHROW(validate_manifest(m, 5));

  put("mixed_motion/blur/lonely.png", 0.5f);
  CHECK_THROWS_AS(index_paired_dataset(dir.path()), ManifestError);
  CHECK_THROWS_AS(index_paired_dataset(dir.path() / "nope"), ManifestError);
}
