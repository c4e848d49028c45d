#include <doctest.h>

#include "demoe/autodiff.hpp"
#include "demoe/error.hpp"
#include "support/grad_suite.hpp"

using namespace demoe;

TEST_CASE("sum gradient is all ones") {
  ad::Tape tape;
  Rng rng = make_rng(1);
  const ad::Var x = tape.leaf(testutil::random_tensor({2, 3, 2, 2}, rng), true);
  tape.backward(ad::sum(x));
  const Tensor g1 = tape.grad_or_zero(x);
  for (float g : g1.data()) CHECK(g == 1.0f);
}

TEST_CASE("simple gate product rule") {
  ad::Tape tape;
  Rng rng = make_rng(2);
  const Tensor v = testutil::random_tensor({1, 4, 3, 3}, rng);
  const ad::Var x = tape.leaf(v, true);
  tape.backward(ad::sum(ad::simple_gate(x)));
  const Tensor g = tape.grad_or_zero(x);
  for (std::size_t i = 0; i < 18; ++i) {
    CHECK(g[i] == v[i + 18]);
    CHECK(g[i + 18] == v[i]);
  }
}

TEST_CASE("composed forward gradient matches finite differences") {
  Rng rng = make_rng(3);
  for (int t = 0; t < 5; ++t) {
    const std::vector<Tensor> in{
        testutil::random_tensor({2, 2, 4, 4}, rng),  // x
        testutil::random_tensor({4, 2, 1, 1}, rng),  // conv w
        testutil::random_tensor({1, 4, 1, 1}, rng),  // conv b
        testutil::random_tensor({1, 4, 1, 1}, rng, 0.5, 1.5),
        testutil::random_tensor({1, 4, 1, 1}, rng),
        testutil::random_tensor({2, 2, 1, 1}, rng),  // sca w
        testutil::random_tensor({1, 2, 1, 1}, rng),
        testutil::random_tensor({2, 2, 4, 4}, rng),  // target
    };
    std::vector<bool> check(in.size(), true);
    check.back() = false;
    const auto res = gradcheck::run(
        in, check,
        [](ad::Tape&, const std::vector<ad::Var>& v) {
          ad::Var y = ad::conv2d(v[0], v[1], v[2], ops::ConvMode::pointwise_1x1);
          y = ad::layer_norm_channels(y, v[3], v[4]);
          y = ad::simple_gate(y);
          y = ad::simplified_channel_attention(y, v[5], v[6]);
          return ad::l1_loss(y, v[7]);
        },
        [](const std::vector<oracle::D>& d) {
          oracle::D y = oracle::pointwise(d[0], d[1], &d[2]);
          y = oracle::layer_norm(y, d[3], d[4], 1e-6);
          y = oracle::simple_gate(y);
          y = oracle::sca(y, d[5], d[6]);
          oracle::D out({1, 1, 1, 1});
          out.v[0] = oracle::l1(y, d[7]);
          return out;
        },
        rng);
    CHECK(res.grad_rel_err <= 1e-3);
  }
}

TEST_CASE("gradient suite: every op, 20 instances") {
  for (const auto& r : gradsuite::run_all(77, 20)) {
    INFO(r.op);
    CHECK(r.instances == 20);
    CHECK(r.worst_grad_rel_err <= 1e-3);
    CHECK(r.worst_forward_abs_err <= 1e-4);
  }
}

TEST_CASE("backward rejects foreign and non-scalar losses") {
  ad::Tape a;
  ad::Tape b;
  const ad::Var x = a.leaf(Tensor({1, 1, 2, 2}, 1.0f), true);
  const ad::Var y = b.leaf(Tensor({1, 1, 1, 1}, 1.0f), true);
  CHECK_THROWS_AS(a.backward(x), ArgumentError);
  CHECK_THROWS_AS(a.backward(y), ArgumentError);
  CHECK_THROWS(ad::add(x, y));
}

TEST_CASE("parents precede children and untracked leaves get no gradient") {
  ad::Tape tape;
  const ad::Var x = tape.leaf(Tensor({1, 2, 2, 2}, 0.5f), true);
  const ad::Var c = tape.leaf(Tensor({1, 2, 1, 1}, 2.0f));
  const ad::Var y = ad::mul(ad::add(x, c), c);
  for (std::uint32_t id = 0; id < tape.size(); ++id) {
    for (std::uint32_t p : tape.parents(ad::Var{&tape, id})) CHECK(p < id);
  }
  tape.backward(ad::sum(y));
  CHECK_FALSE(tape.has_grad(c));
  const Tensor g2 = tape.grad_or_zero(x);
  for (float g : g2.data()) CHECK(g == 2.0f);
}

TEST_CASE("inference tape records no gradients") {
  ad::Tape tape(false);
  const ad::Var x = tape.leaf(Tensor({1, 2, 2, 2}, 0.5f), true);
  const ad::Var y = ad::sum(ad::simple_gate(x));
  CHECK(y.value()[0] == doctest::Approx(1.0));
  CHECK_FALSE(tape.requires_grad(y));
}

TEST_CASE("forward and backward are deterministic") {
  const auto run = [] {
    Rng rng = make_rng(9);
    ad::Tape tape;
    const ad::Var x = tape.leaf(testutil::random_tensor({2, 4, 6, 6}, rng), true);
    const ad::Var w = tape.leaf(testutil::random_tensor({4, 1, 3, 3}, rng), true);
    const ad::Var y = ad::conv2d(x, w, ops::ConvMode::depthwise_3x3);
    tape.backward(ad::sum(ad::mul(y, y)));
    return std::pair{tape.grad_or_zero(x), tape.grad_or_zero(w)};
  };
  const auto a = run();
  const auto b = run();
  CHECK(bitwise_equal(a.first, b.first));
  CHECK(bitwise_equal(a.second, b.second));
}

TEST_CASE("gated sum with one selected gate of 1 reproduces the expert bitwise") {
  Rng rng = make_rng(10);
  ad::Tape tape(false);
  const Tensor e1 = testutil::random_tensor({2, 3, 4, 4}, rng);
  const std::vector<ad::Var> experts{tape.leaf(testutil::random_tensor({2, 3, 4, 4}, rng)), tape.leaf(e1)};
  Tensor g({2, 2, 1, 1});
  g[1] = g[3] = 1.0f;
  const ad::Var out = ad::gated_sum(experts, tape.leaf(g), {{false, true}, {false, true}});
  CHECK(bitwise_equal(out.value(), e1));
}
