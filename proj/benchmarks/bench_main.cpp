#include <benchmark/benchmark.h>

#include "demoe/model.hpp"
#include "demoe/ops.hpp"
#include "demoe/rng.hpp"
#include "demoe/similarity.hpp"

using namespace demoe;

namespace {

Tensor random_tensor(Shape s, Rng& rng) {
  Tensor t(s);
  for (float& v : t.data()) v = static_cast<float>(uniform(rng, -1.0, 1.0));
  return t;
}

void BM_Conv(benchmark::State& state, ops::ConvMode mode) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  Rng rng = make_rng(1);
  const Tensor x = random_tensor({1, c, hw, hw}, rng);
  Shape ws{c, c, 1, 1};
  if (mode == ops::ConvMode::depthwise_3x3) ws = {c, 1, 3, 3};
  if (mode == ops::ConvMode::strided_2x2_down) ws = {2 * c, c, 2, 2};
  const Tensor w = random_tensor(ws, rng);
  const Tensor b(Shape{1, ws.n, 1, 1});
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, mode));
}

void BM_Pointwise(benchmark::State& s) { BM_Conv(s, ops::ConvMode::pointwise_1x1); }
void BM_Depthwise(benchmark::State& s) { BM_Conv(s, ops::ConvMode::depthwise_3x3); }
void BM_Strided(benchmark::State& s) { BM_Conv(s, ops::ConvMode::strided_2x2_down); }

BENCHMARK(BM_Pointwise)->Args({32, 64})->Args({64, 128});
BENCHMARK(BM_Depthwise)->Args({32, 64})->Args({64, 128});
BENCHMARK(BM_Strided)->Args({32, 64})->Args({64, 128});

void BM_NafBlock(benchmark::State& state) {
  net::ArchConfig cfg = net::ArchConfig::toy();
  cfg.base_width = static_cast<std::uint32_t>(state.range(0));
  const net::Checkpoint ck = net::init_checkpoint(cfg, 0);
  Rng rng = make_rng(2);
  const Tensor x = random_tensor({1, cfg.base_width, 64, 64}, rng);
  for (auto _ : state) {
    ad::Tape tape(false);
    const net::ParamBinder params(tape, ck);
    benchmark::DoNotOptimize(net::naf_block_forward(tape.leaf(x), params, "enc.0.0").value());
  }
}
BENCHMARK(BM_NafBlock)->Arg(8)->Arg(32);

void BM_Inference(benchmark::State& state) {
  const net::Checkpoint ck = net::init_checkpoint(net::ArchConfig::toy(), 0);
  Rng rng = make_rng(3);
  const Tensor x = random_tensor({1, 3, 64, 64}, rng);
  const auto k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(net::demoe_infer(ck, x, k).restored);
}
BENCHMARK(BM_Inference)->Arg(1)->Arg(5);

void BM_Hsic(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng = make_rng(4);
  Eigen::MatrixXd x(n, 9);
  Eigen::MatrixXd y(n, 9);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x(i) = normal(rng);
    y(i) = normal(rng);
  }
  const Eigen::MatrixXd k = sim::rbf_kernel_matrix(x).K;
  const Eigen::MatrixXd l = sim::rbf_kernel_matrix(y).K;
  for (auto _ : state) benchmark::DoNotOptimize(sim::hsic(k, l));
}
BENCHMARK(BM_Hsic)->Arg(64)->Arg(256);

}  // namespace
BENCHMARK_MAIN();
