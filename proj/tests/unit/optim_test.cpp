#include <doctest.h>

#include <cmath>

#include "demoe/error.hpp"
#include "demoe/optim.hpp"
#include "support/util.hpp"

using namespace demoe;

TEST_CASE("zero gradient leaves parameters unchanged") {
  Tensor p({1, 2, 3, 3}, 0.75f);
  const Tensor before = p;
  const Tensor g({1, 2, 3, 3});
  const std::vector<Shape> shapes{p.shape()};
  optim::AdamW opt({}, shapes);
  Tensor* params[] = {&p};
  const Tensor* grads[] = {&g};
  for (int i = 0; i < 3; ++i) opt.step(params, grads, 1e-3f);
  CHECK(bitwise_equal(p, before));
  CHECK(opt.steps() == 3);
}

TEST_CASE("first step moves by about lr times sign(g)") {
  Rng rng = make_rng(1);
  Tensor p = testutil::random_tensor({1, 1, 4, 4}, rng);
  const Tensor before = p;
  const Tensor g = testutil::random_tensor({1, 1, 4, 4}, rng);
  const std::vector<Shape> shapes{p.shape()};
  optim::AdamW opt({}, shapes);
  Tensor* params[] = {&p};
  const Tensor* grads[] = {&g};
  opt.step(params, grads, 0.01f);
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double expect = -0.01 * g[i] / (std::fabs(g[i]) + 1e-8);
    CHECK(p[i] - before[i] == doctest::Approx(expect).epsilon(1e-4));
  }
  CHECK(opt.first_moment(0).shape() == p.shape());
  CHECK(opt.second_moment(0).shape() == p.shape());
}

TEST_CASE("identical runs give identical parameters") {
  const auto run = [] {
    Rng rng = make_rng(2);
    Tensor p = testutil::random_tensor({2, 3, 3, 3}, rng);
    const std::vector<Shape> shapes{p.shape()};
    optim::AdamW opt({0.9f, 0.9f, 1e-8f, 0.01f}, shapes);
    for (int s = 0; s < 10; ++s) {
      const Tensor g = testutil::random_tensor(p.shape(), rng);
      Tensor* params[] = {&p};
      const Tensor* grads[] = {&g};
      opt.step(params, grads, 1e-3f);
    }
    return p;
  };
  CHECK(bitwise_equal(run(), run()));
}

TEST_CASE("optimizer validates inputs") {
  Tensor p({1, 1, 2, 2});
  const Tensor wrong({1, 1, 3, 3});
  const std::vector<Shape> shapes{p.shape()};
  optim::AdamW opt({}, shapes);
  Tensor* params[] = {&p};
  const Tensor* grads[] = {&wrong};
  CHECK_THROWS_AS(opt.step(params, grads, 1e-3f), ShapeError);
  const Tensor ok({1, 1, 2, 2});
  const Tensor* good[] = {&ok};
  CHECK_THROWS_AS(opt.step(params, good, 0.0f), ArgumentError);
}

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(optim::cosine_anneal(1e-3f, 1e-6f, 0, 100) == doctest::Approx(1e-3));
  CHECK(optim::cosine_anneal(1e-3f, 1e-6f, 100, 100) == doctest::Approx(1e-6));
  CHECK(optim::cosine_anneal(1e-3f, 1e-6f, 50, 100) == doctest::Approx((1e-3 + 1e-6) / 2));
}

TEST_CASE("gradient clipping bounds the joint norm") {
  Tensor a({1, 1, 1, 2}, std::vector<float>{3.0f, 0.0f});
  Tensor b({1, 1, 1, 1}, std::vector<float>{4.0f});
  Tensor* gs[] = {&a, &b};
  CHECK(optim::clip_grad_norm(gs, 1.0) == doctest::Approx(5.0));
  CHECK(a[0] == doctest::Approx(0.6));
  CHECK(b[0] == doctest::Approx(0.8));
  CHECK(optim::clip_grad_norm(gs, 10.0) == doctest::Approx(1.0));
  CHECK(a[0] == doctest::Approx(0.6));
}
