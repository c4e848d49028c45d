#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "demoe/error.hpp"
#include "demoe/model.hpp"
#include "demoe/training.hpp"
#include "support/fixtures.hpp"

using namespace demoe;
using namespace demoe::train;

namespace {

std::vector<synth::Sample> tiny_data(std::size_t per_class, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<synth::Sample> out;
  for (std::size_t i = 0; i < 5 * per_class; ++i) {
    synth::Sample s;
    s.clean = fixtures::random_image(1, 16, 16, rng);
    s.degraded = s.clean;
    for (float& v : s.degraded.data()) v = 0.5f * v + 0.1f * static_cast<float>(i % 5);
    s.label = static_cast<int>(i % 5);
    out.push_back(std::move(s));
  }
  return out;
}

TrainConfig tiny_config() {
  TrainConfig c = TrainConfig::toy();
  c.patch = 16;
  c.batch = 5;
  c.epochs = 4;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("loss closed forms") {
  const Tensor a({1, 3, 4, 4}, 0.5f);
  const Tensor b({1, 3, 4, 4}, 0.6f);
  CHECK(pixel_loss(a, a) == 0.0);
  CHECK(pixel_loss(a, b) == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(pixel_loss(a, b) == pixel_loss(b, a));
  CHECK_THROWS_AS(pixel_loss(a, Tensor({1, 3, 4, 5})), ShapeError);

  const std::vector<float> onehot{0, 0, 1, 0, 0};
  const std::vector<float> uniform(5, 0.2f);
  const std::vector<float> half{0.5f, 0.5f, 0, 0, 0};
  CHECK(class_loss(onehot, 2) == 0.0);
  CHECK(class_loss(uniform, 4) == doctest::Approx(std::log(5.0)).epsilon(1e-6));
  CHECK(class_loss(half, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(std::isfinite(class_loss(onehot, 0)));
  CHECK_THROWS_AS(class_loss(uniform, 5), ArgumentError);

  CHECK(combined_loss(a, b, uniform, 0) == doctest::Approx(0.1 + 0.001 * std::log(5.0)).epsilon(1e-6));
  CHECK(combined_loss(a, b, uniform, 0, {1.0f, 0.0f}) == doctest::Approx(0.1).epsilon(1e-6));
  CHECK_THROWS_AS(combined_loss(a, b, uniform, 0, {-1.0f, 0.0f}), ArgumentError);
}

TEST_CASE("augmentation flips both images together") {
  Rng rng = make_rng(1);
  const Tensor x = fixtures::random_image(1, 6, 5, rng);
  CHECK(bitwise_equal(flip_horizontal(flip_horizontal(x)), x));
  CHECK(bitwise_equal(flip_vertical(flip_vertical(x)), x));
  CHECK(flip_horizontal(x)[0] == x[4]);
  CHECK(flip_vertical(x)[0] == x[25]);

  for (int t = 0; t < 20; ++t) {
    const PatchPair p = augment({x, x}, {}, rng);
    CHECK(bitwise_equal(p.degraded, p.clean));
    std::vector<float> a(p.degraded.data().begin(), p.degraded.data().end());
    std::vector<float> b(x.data().begin(), x.data().end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
  const PatchPair none = augment({x, x}, {false, false}, rng);
  CHECK(bitwise_equal(none.degraded, x));
  CHECK_THROWS_AS(augment({x, fixtures::random_image(1, 5, 5, rng)}, {}, rng), ShapeError);
}

TEST_CASE("training configuration validation") {
  CHECK_NOTHROW(TrainConfig::toy().validate());
  CHECK_NOTHROW(TrainConfig::full_reference().validate());
  TrainConfig c = TrainConfig::toy();
  c.batch = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = TrainConfig::toy();
  c.patch = 30;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = TrainConfig::toy();
  c.lr_min = 1.0f;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = TrainConfig::toy();
  c.loss.lambda_class = -0.1f;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("stage 1 decreases the loss and is reproducible") {
  const auto data = tiny_data(2, 4);
  std::vector<EpochStats> seen;
  TrainConfig c = tiny_config();
  c.on_epoch = [&](const EpochStats& s) { seen.push_back(s); };
  const TrainResult a = stage1_train(data, c);
  CHECK(a.checkpoint.stage() == net::Stage::stage1);
  REQUIRE(a.curve.size() == 4);
  CHECK(seen.size() == 4);
  CHECK(a.curve.back().loss < a.curve.front().loss);
  CHECK(a.curve.front().lr == doctest::Approx(1e-3f));
  CHECK(a.curve.back().lr < a.curve.front().lr);

  const TrainResult b = stage1_train(data, tiny_config());
  CHECK(net::bitwise_equal(a.checkpoint, b.checkpoint));
  TrainConfig other = tiny_config();
  other.seed = 4;
  CHECK_FALSE(net::bitwise_equal(a.checkpoint, stage1_train(data, other).checkpoint));

  const Evaluation e = evaluate(a.checkpoint, data, 1, -1, 3);
  CHECK(e.psnr.size() == data.size());
  CHECK(e.router_accuracy >= 0.0);
  CHECK(e.router_accuracy <= 1.0);
}

TEST_CASE("stage 2 freezes encoder and router") {
  const auto data = tiny_data(2, 5);
  TrainConfig c = tiny_config();
  c.epochs = 2;
  const net::Checkpoint s1 = stage1_train(data, c).checkpoint;
  const net::Checkpoint s2 = stage2_finetune(s1, data, c).checkpoint;
  CHECK(s2.stage() == net::Stage::stage2);
  bool decoder_moved = false;
  for (const auto& r : s2.records()) {
    if (net::is_encoder_param(r.name) || net::is_router_param(r.name)) {
      CHECK(bitwise_equal(r.value, s1.at(r.name).value));
    } else if (r.name.rfind("dec.", 0) == 0 && !bitwise_equal(r.value, net::replicate_experts(s1, 5).at(r.name).value)) {
      decoder_moved = true;
    }
  }
  CHECK(decoder_moved);
  CHECK_THROWS_AS(stage2_finetune(net::init_checkpoint(c.arch, 0), data, c), ArgumentError);
}

TEST_CASE("training inputs are validated") {
  TrainConfig c = tiny_config();
  CHECK_THROWS_AS(stage1_train(std::vector<synth::Sample>{}, c), ArgumentError);
  auto data = tiny_data(1, 6);
  data.erase(data.begin() + 3);
  CHECK_THROWS_AS(stage1_train(data, c), ArgumentError);
  auto small = tiny_data(1, 7);
  c.patch = 32;
  CHECK_THROWS_AS(stage1_train(small, c), ArgumentError);
}
