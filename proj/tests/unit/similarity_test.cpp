#include <doctest.h>

#include <cmath>

#include "demoe/error.hpp"
#include "demoe/model.hpp"
#include "demoe/similarity.hpp"
#include "support/fixtures.hpp"
#include "support/sim_oracle.hpp"

using namespace demoe;
using namespace demoe::sim;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = normal(rng);
  return m;
}

simoracle::Mat rows(const Eigen::MatrixXd& m) {
  simoracle::Mat out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)].push_back(m(i, j));
  return out;
}

}  // namespace

TEST_CASE("group extraction") {
  net::ArchConfig cfg = net::ArchConfig::toy();
  const net::Checkpoint ck = net::init_checkpoint(cfg, 0);
  const LayerGroups g = extract_groups(ck);
  const auto dw = g.group(Taxonomy::conv3x3);
  REQUIRE_FALSE(dw.empty());
  CHECK(dw.front()->name == "enc.0.0.conv2.weight");
  CHECK(dw.front()->filters.rows() == 16);
  CHECK(dw.front()->filters.cols() == 9);
  const auto ln = g.group(Taxonomy::layernorm);
  CHECK(ln.front()->name == "enc.0.0.norm1");
  CHECK(ln.front()->filters.cols() == 2);
  for (const Layer& l : g.layers) CHECK(l.taxonomy != Taxonomy::other);
  CHECK(g.warnings.empty());

  const LayerGroups again = extract_groups(ck);
  REQUIRE(again.layers.size() == g.layers.size());
  for (std::size_t i = 0; i < g.layers.size(); ++i) CHECK(again.layers[i].name == g.layers[i].name);

  net::Checkpoint small(cfg, net::Stage::init);
  for (int i = 0; i < 3; ++i) small.add({"pw" + std::to_string(i), Taxonomy::conv1x1, Tensor({4, 2, 1, 1}, 1.0f)});
  small.add({"odd", Taxonomy::untagged, Tensor({2, 2, 1, 1})});
  const LayerGroups sg = extract_groups(small);
  CHECK(sg.group(Taxonomy::conv1x1).size() == 3);
  CHECK(sg.warnings.size() == 1);
}

TEST_CASE("filter correlation") {
  const std::vector<double> f{0.3, -1.2, 2.0, 0.1, 0.7};
  std::vector<double> aff;
  std::vector<double> neg;
  for (double v : f) {
    aff.push_back(2 * v + 1);
    neg.push_back(-v);
  }
  CHECK(pearson_filter_corr(f, aff).r == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pearson_filter_corr(f, neg).r == doctest::Approx(-1.0).epsilon(1e-12));
  const std::vector<double> flat(5, 0.4);
  const FilterCorr skip = pearson_filter_corr(f, flat);
  CHECK(skip.skipped);
  CHECK(skip.r == 0.0);
  CHECK_THROWS_AS(pearson_filter_corr(f, std::vector<double>(4)), ArgumentError);

  Rng rng = make_rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(9);
    std::vector<double> b(9);
    for (std::size_t i = 0; i < 9; ++i) {
      a[i] = normal(rng);
      b[i] = normal(rng);
    }
    CHECK(std::fabs(pearson_filter_corr(a, b).r - simoracle::pearson(a, b)) <= 1e-9);
  }
}

TEST_CASE("layer mean correlation") {
  Eigen::MatrixXd a(3, 3);
  Eigen::MatrixXd b(3, 3);
  a << 1, 2, 3, 1, 2, 3, 1, 0, 1;
  b << 2, 4, 6, 1, 0, 1, 7, 7, 7;
  // r = 1, r = 0 (orthogonal centered vectors), third skipped
  LayerCorr lc = mean_layer_corr(a, b);
  CHECK(lc.skipped == 1);
  CHECK(*lc.R == doctest::Approx(0.5));
  Rng rng = make_rng(2);
  const Eigen::MatrixXd x = random_matrix(6, 5, rng);
  const Eigen::MatrixXd y = random_matrix(6, 5, rng);
  CHECK(*mean_layer_corr(x, y).R == doctest::Approx(*mean_layer_corr(y, x).R).epsilon(1e-15));
  CHECK(*mean_layer_corr(x, x).R == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(mean_layer_corr(Eigen::MatrixXd::Ones(3, 4), x.topRows(3).leftCols(4)).R.has_value());
  CHECK_THROWS_AS(mean_layer_corr(x, y.leftCols(4)), ShapeError);
}

TEST_CASE("mean of per-filter r values (1, 0.5, 0)") {
  Eigen::MatrixXd a(3, 4);
  Eigen::MatrixXd b(3, 4);
  a.row(0) << 1, 2, 3, 4;
  b.row(0) << 2, 4, 6, 8;
  const double h = std::sqrt(3.0) / 2.0;
  a.row(1) << 1, -1, 0, 0;
  b.row(1) << 0.5, -0.5, h, -h;
  a.row(2) << 1, -1, 1, -1;
  b.row(2) << 1, 1, -1, -1;
  CHECK(*mean_layer_corr(a, b).R == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("RBF kernel matrix") {
  Eigen::MatrixXd x(2, 2);
  x << 0, 0, 1, 1;  // distance sqrt 2
  const KernelMatrix k = rbf_kernel_matrix(x, Bandwidth::fixed_sigma(1.0));
  CHECK(k.K(0, 0) == 1.0);
  CHECK(k.K(1, 1) == 1.0);
  CHECK(k.K(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK_THROWS_AS(rbf_kernel_matrix(x, Bandwidth::fixed_sigma(0.0)), ArgumentError);
  CHECK(rbf_kernel_matrix(Eigen::MatrixXd::Ones(4, 3)).sigma == 1.0);

  Rng rng = make_rng(3);
  const Eigen::MatrixXd r = random_matrix(7, 5, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> p(5);
  p.setIdentity();
  shuffle(p.indices().data(), p.indices().data() + 5, rng);
  const KernelMatrix a = rbf_kernel_matrix(r);
  const KernelMatrix b = rbf_kernel_matrix(r * p);
  CHECK((a.K - b.K).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((a.K - a.K.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.sigma == doctest::Approx(simoracle::median_distance(rows(r))).epsilon(1e-12));
}

TEST_CASE("HSIC") {
  Rng rng = make_rng(4);
  const Eigen::MatrixXd k = rbf_kernel_matrix(random_matrix(6, 4, rng)).K;
  const Eigen::MatrixXd l = rbf_kernel_matrix(random_matrix(6, 4, rng)).K;
  CHECK(std::fabs(hsic(k, Eigen::MatrixXd::Ones(6, 6))) <= 1e-15);
  CHECK(hsic(k, k) >= 0.0);
  CHECK(hsic(k, l) == doctest::Approx(hsic(l, k)).epsilon(1e-14));

  const simoracle::Mat km = rows(k);
  const simoracle::Mat lm = rows(l);
  CHECK(std::fabs(hsic(k, l) - simoracle::hsic(km, lm)) <= 1e-9);

  // n = 2, K = L = [[1, a], [a, 1]]: HKH = (1 - a)/2 [[1, -1], [-1, 1]], trace(KHLH) = (1 - a)^2
  const double a = 0.3;
  Eigen::MatrixXd two(2, 2);
  two << 1, a, a, 1;
  CHECK(std::fabs(hsic(two, two) - (1 - a) * (1 - a)) <= 1e-12);
  CHECK_THROWS_AS(hsic(k, l.topLeftCorner(5, 5)), ShapeError);
}

TEST_CASE("CKA") {
  Rng rng = make_rng(5);
  for (int t = 0; t < 10; ++t) {
    const Eigen::MatrixXd x = random_matrix(8, 6, rng);
    const Eigen::MatrixXd y = random_matrix(8, 6, rng);
    const Eigen::MatrixXd k = rbf_kernel_matrix(x).K;
    const Eigen::MatrixXd l = rbf_kernel_matrix(y).K;
    CHECK(*cka(k, k) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*cka(k, l) == doctest::Approx(*cka(l, k)).epsilon(1e-14));
    CHECK(std::fabs(*cka(k, l) - simoracle::cka(rows(x), rows(y))) <= 1e-9);
    CHECK(*cka(k, l) >= -1e-6);
    CHECK(*cka(k, l) <= 1.0 + 1e-6);
    CHECK(std::fabs(*cka(rbf_kernel_matrix(x * 3.0).K, l) - *cka(k, l)) <= 1e-12);
  }
  CHECK_FALSE(cka(Eigen::MatrixXd::Ones(4, 4), Eigen::MatrixXd::Identity(4, 4)).has_value());
}

TEST_CASE("similarity report") {
  const net::Checkpoint a = fixtures::random_checkpoint(net::ArchConfig::toy(), 1);
  const SimilarityReport self = similarity_report(a, a);
  for (const auto& l : self.layers) {
    CHECK(*l.R == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*l.cka == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(l.high_correlation);
  }

  const net::Checkpoint i1 = net::init_checkpoint(net::ArchConfig::toy(), 1);
  const net::Checkpoint i2 = net::init_checkpoint(net::ArchConfig::toy(), 2);
  const SimilarityReport r = similarity_report(i1, i2);
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& l : r.layers) {
    CHECK(l.high_correlation == (l.R && *l.R > 0.7));
    if (l.taxonomy == Taxonomy::conv3x3) {
      sum += std::fabs(*l.R);
      ++count;
    }
  }
  CHECK(sum / static_cast<double>(count) < 0.2);

  const SimilarityReport back = report_from_json(report_to_json(r));
  CHECK(back == r);
  CHECK(report_table(r) == report_table(back));
  CHECK(report_table(r).find("conv3x3") != std::string::npos);

  net::ArchConfig other = net::ArchConfig::toy();
  other.base_width = 4;
  CHECK_THROWS_AS(similarity_report(i1, net::init_checkpoint(other, 0)), ArgumentError);
}
