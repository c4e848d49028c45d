// Acceptance runner: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "demoe/checkpoint.hpp"
#include "demoe/dataset.hpp"
#include "demoe/macs.hpp"
#include "demoe/manifest.hpp"
#include "demoe/metrics.hpp"
#include "demoe/model.hpp"
#include "demoe/similarity.hpp"
#include "demoe/training.hpp"
#include "../support/fixtures.hpp"
#include "../support/grad_suite.hpp"
#include "../support/sim_oracle.hpp"

namespace {

using namespace demoe;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto reports = gradsuite::run_all(2024, 20);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_op;
  bool counts = true;
  for (const auto& r : reports) {
    if (r.worst_grad_rel_err >= worst) {
      worst = r.worst_grad_rel_err;
      worst_op = r.op;
    }
    counts = counts && r.instances >= 20;
  }
  const bool ok = worst <= 1e-3 && counts && secs < 120.0;
  return {ok, fmt("%zu ops x 20 instances, worst rel err %.2e (%s), %.1fs", reports.size(), worst,
                  worst_op.c_str(), secs)};
}

Outcome gating_oracle() {
  const net::ArchConfig cfg = net::ArchConfig::toy();
  const net::Checkpoint ck = fixtures::random_checkpoint(cfg, 11);
  Rng rng = make_rng(5, 0);
  const std::vector<double> skewed_w{0.5, 0.3, 0.1, 0.07, 0.03};
  double worst = 0.0;
  bool renorm_ok = true;
  for (int t = 0; t < 100; ++t) {
    const std::size_t level = testutil::pick(rng, 0, 1);
    const std::size_t c = cfg.width(static_cast<std::uint32_t>(level));
    const std::size_t n = testutil::pick(rng, 1, 3);
    const std::size_t hw = testutil::pick(rng, 2, 6);
    const std::size_t k = t % 4 == 0 ? 2 : testutil::pick(rng, 1, 5);
    const auto fusion = static_cast<net::FusionMode>(t % 3);
    const Tensor h = testutil::random_tensor({n, c, hw, hw}, rng);
    Tensor probs({n, 5, 1, 1});
    for (std::size_t s = 0; s < n; ++s) {
      double z = 0.0;
      std::vector<double> w(5);
      for (auto& v : w) z += v = std::exp(normal(rng, 0.0, 1.5));
      for (std::size_t i = 0; i < 5; ++i) probs[s * 5 + i] = static_cast<float>(w[i] / z);
      if (t % 4 == 0 && s == 0) {
        for (std::size_t i = 0; i < 5; ++i) probs[i] = static_cast<float>(skewed_w[i]);
      }
    }
    const std::string prefix = "dec." + std::to_string(level) + ".0";
    const net::GateBatch gb = net::make_gates(probs, net::Gating::top(k), 5);

    ad::Tape tape(false);
    const net::ParamBinder p(tape, ck);
    const ad::Var hv = tape.leaf(h);
    const ad::Var out =
        net::moe_block_forward(hv, tape.leaf(gb.gates), gb.mask, p, prefix, 5, fusion);

    std::vector<Tensor> experts;
    for (std::size_t i = 0; i < 5; ++i) {
      experts.push_back(net::naf_block_forward(hv, p, prefix + ".expert." + std::to_string(i)).value());
    }
    const std::size_t per = h.shape().sample();
    std::vector<double> ref(h.numel(), 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      std::vector<double> w(5);
      for (std::size_t i = 0; i < 5; ++i) w[i] = probs[s * 5 + i];
      const auto gate = fixtures::brute_gate(w, k);
      if (t % 4 == 0 && s == 0) {
        renorm_ok = renorm_ok && gate.size() == 2 && gate[0].first == 0 && gate[1].first == 1 &&
                    std::fabs(gate[0].second - 0.625) < 1e-6 && std::fabs(gate[1].second - 0.375) < 1e-6;
      }
      for (std::size_t q = 0; q < per; ++q) {
        double acc = 0.0;
        for (const auto& [i, g] : gate) acc += g * experts[i][s * per + q];
        const double hq = h[s * per + q];
        if (fusion == net::FusionMode::addition_residual) acc += hq;
        if (fusion == net::FusionMode::attention_connection) acc *= hq;
        ref[s * per + q] = acc;
      }
    }
    double scale = 1.0;
    for (double v : ref) scale = std::max(scale, std::fabs(v));
    worst = std::max(worst, fixtures::max_abs_diff(out.value(), ref) / scale);
  }
  return {worst <= 1e-6 && renorm_ok,
          fmt("100 cases, worst scaled abs err %.2e, k=2 renormalization (0.625, 0.375) %s", worst,
              renorm_ok ? "ok" : "wrong")};
}

Outcome manual_override() {
  const net::Checkpoint ck = fixtures::random_checkpoint(net::ArchConfig::toy(), 3, 0.3);
  std::vector<net::Checkpoint> baselines;
  for (std::size_t j = 0; j < 5; ++j) baselines.push_back(net::extract_expert(ck, j));
  Rng rng = make_rng(9, 0);
  int equal = 0;
  for (int i = 0; i < 20; ++i) {
    const Tensor x = fixtures::random_image(1, 16, 16, rng);
    const std::size_t j = static_cast<std::size_t>(i) % 5;
    const Tensor a = net::demoe_infer(ck, x, 1, j).restored;
    const Tensor b = net::demoe_infer(baselines[j], x, 1).restored;
    equal += bitwise_equal(a, b) ? 1 : 0;
  }
  return {equal == 20, fmt("%d/20 inputs bitwise equal", equal)};
}

Outcome mac_identity() {
  std::string detail;
  bool ok = true;
  const std::vector<std::pair<const char*, std::pair<net::ArchConfig, Shape>>> presets{
      {"toy", {net::ArchConfig::toy(), Shape{1, 3, 32, 32}}},
      {"full", {net::ArchConfig::full(), Shape{1, 3, 256, 256}}}};
  for (const auto& [name, pc] : presets) {
    const auto& [cfg, shape] = pc;
    net::ArchConfig base = cfg;
    base.router = false;
    base.expert_slots = 1;
    const auto moe = net::count_params_macs(cfg, shape, 1);
    const auto bl = net::count_params_macs(base, shape, 1);
    const bool eq = moe.macs - moe.breakdown.router == bl.macs;
    ok = ok && eq && moe.breakdown.router > 0;
    detail += fmt("%s: %llu - %llu = %llu vs baseline %llu; ", name, static_cast<unsigned long long>(moe.macs),
                  static_cast<unsigned long long>(moe.breakdown.router),
                  static_cast<unsigned long long>(moe.macs - moe.breakdown.router),
                  static_cast<unsigned long long>(bl.macs));
  }
  // Analytic count agrees with the MACs executed by a toy forward pass.
  const net::Checkpoint ck = net::init_checkpoint(net::ArchConfig::toy(), 1);
  Rng rng = make_rng(1, 1);
  const Tensor x = fixtures::random_image(1, 32, 32, rng);
  ops::conv_mac_counter() = 0;
  net::demoe_infer(ck, x, 1);
  const std::uint64_t measured = ops::conv_mac_counter();
  const std::uint64_t analytic = net::count_params_macs(ck, x.shape(), 1).macs;
  ok = ok && measured == analytic;
  detail += fmt("toy measured %llu vs analytic %llu", static_cast<unsigned long long>(measured),
                static_cast<unsigned long long>(analytic));
  return {ok, detail};
}

struct ToyRun {
  bool ok = false;
  std::string error;
  net::Checkpoint stage1;
  net::Checkpoint stage2;
  train::Evaluation eval1;
  train::Evaluation eval2;
  std::vector<synth::Sample> test;
  double seconds = 0.0;
};

const ToyRun& toy_run() {
  static std::optional<ToyRun> cached;
  if (cached) return *cached;
  cached.emplace();
  ToyRun& run = *cached;
  const testutil::TempDir dir("accept");
  const auto t0 = Clock::now();
  try {
    const auto train_m = synth::generate_toy_dataset({100, 32, 1, 2}, dir.path() / "train");
    const auto test_m = synth::generate_toy_dataset({20, 32, 2, 2}, dir.path() / "test");
    const auto train_s = synth::load_samples(train_m);
    run.test = synth::load_samples(test_m);
    const train::TrainConfig cfg = train::TrainConfig::toy();
    run.stage1 = train::stage1_train(train_s, cfg).checkpoint;
    run.eval1 = train::evaluate(run.stage1, run.test);
    run.stage2 = train::stage2_finetune(run.stage1, train_s, cfg).checkpoint;
    run.eval2 = train::evaluate(run.stage2, run.test);
    run.ok = true;
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  run.seconds = seconds_since(t0);
  return run;
}

Outcome toy_end_to_end() {
  const ToyRun& run = toy_run();
  if (!run.ok) return {false, "toy run failed: " + run.error};
  const double acc = run.eval1.router_accuracy;
  const double gain = run.eval2.mean_psnr - run.eval2.mean_degraded_psnr;
  const bool acc_ok = acc >= 0.95;
  const bool psnr_ok = gain >= 2.0;
  const bool time_ok = run.seconds <= 1800.0;
  return {acc_ok && psnr_ok && time_ok,
          fmt("router acc %.3f (>= 0.95 %s); stage-2 PSNR %.2f vs degraded %.2f, +%.2f dB (>= 2 %s); "
              "stage-1 PSNR %.2f; %.0fs (<= 1800 %s)",
              acc, acc_ok ? "ok" : "MISSED", run.eval2.mean_psnr, run.eval2.mean_degraded_psnr, gain,
              psnr_ok ? "ok" : "MISSED", run.eval1.mean_psnr, run.seconds, time_ok ? "ok" : "MISSED")};
}

Outcome stage2_contracts() {
  const ToyRun& run = toy_run();
  if (!run.ok) return {false, "toy run failed: " + run.error};
  std::size_t frozen = 0;
  std::size_t changed = 0;
  for (const auto& r : run.stage1.records()) {
    if (!net::is_encoder_param(r.name) && !net::is_router_param(r.name)) continue;
    ++frozen;
    if (!bitwise_equal(r.value, run.stage2.at(r.name).value)) ++changed;
  }
  const net::Checkpoint rep = net::replicate_experts(run.stage1, 5);
  std::vector<Tensor> xs;
  for (std::size_t i = 0; i < 10; ++i) xs.push_back(run.test[i].degraded);
  const Tensor x = concat_batch(xs);
  const auto forward = [&x](const net::Checkpoint& ck) {
    ad::Tape tape(false);
    const net::ParamBinder p(tape, ck);
    return net::demoe_forward(tape.leaf(x), p, net::Gating::soft()).restored.value();
  };
  const double diff = fixtures::max_abs_diff(forward(rep), forward(run.stage1));
  return {changed == 0 && frozen > 0 && diff <= 1e-6,
          fmt("%zu/%zu frozen tensors changed; replicated-init max diff %.2e", changed, frozen, diff)};
}

Outcome similarity() {
  const net::Checkpoint a = fixtures::random_checkpoint(net::ArchConfig::toy(), 21);
  const net::Checkpoint b = fixtures::random_checkpoint(net::ArchConfig::toy(), 22);
  bool ok = true;
  std::string detail;

  const auto self = sim::similarity_report(a, a);
  double self_dev = 0.0;
  for (const auto& l : self.layers) {
    if (!l.R || !l.cka) {
      ok = false;
      continue;
    }
    self_dev = std::max({self_dev, std::fabs(*l.R - 1.0), std::fabs(*l.cka - 1.0)});
  }
  ok = ok && self_dev <= 1e-9;
  detail += fmt("self-report max |R-1|,|CKA-1| %.1e; ", self_dev);

  const auto rep = sim::similarity_report(a, b);
  const auto ga = sim::extract_groups(a);
  const auto gb = sim::extract_groups(b);
  const auto rows = [](const Eigen::MatrixXd& m) {
    simoracle::Mat out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)].push_back(m(i, j));
    return out;
  };
  double r_err = 0.0;
  double cka_err = 0.0;
  for (std::size_t i = 0; i < rep.layers.size(); ++i) {
    const auto xa = rows(ga.layers[i].filters);
    const auto xb = rows(gb.layers[i].filters);
    double mean = 0.0;
    for (std::size_t f = 0; f < xa.size(); ++f) mean += simoracle::pearson(xa[f], xb[f]);
    mean /= static_cast<double>(xa.size());
    r_err = std::max(r_err, std::fabs(mean - rep.layers[i].R.value_or(1e9)));
    cka_err = std::max(cka_err, std::fabs(simoracle::cka(xa, xb) - rep.layers[i].cka.value_or(1e9)));
  }
  ok = ok && r_err <= 1e-9 && cka_err <= 1e-9;
  detail += fmt("%zu layers, Pearson err %.1e, CKA err %.1e; ", rep.layers.size(), r_err, cka_err);

  // Invariances on random filter matrices.
  Rng rng = make_rng(31, 0);
  Eigen::MatrixXd x(12, 9);
  Eigen::MatrixXd y(12, 9);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x(i) = normal(rng);
    y(i) = normal(rng);
  }
  Eigen::MatrixXd y_aff = y;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    y_aff.row(i) = y.row(i) * uniform(rng, 0.5, 3.0) + Eigen::RowVectorXd::Constant(9, uniform(rng, -2, 2));
  }
  const double pearson_inv =
      std::fabs(*sim::mean_layer_corr(x, y).R - *sim::mean_layer_corr(x, y_aff).R);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd::Random(9, 9)).householderQ();
  const auto cka_of = [](const Eigen::MatrixXd& m1, const Eigen::MatrixXd& m2) {
    return *sim::cka(sim::rbf_kernel_matrix(m1).K, sim::rbf_kernel_matrix(m2).K);
  };
  const double base = cka_of(x, y);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(12);
  perm.setIdentity();
  shuffle(perm.indices().data(), perm.indices().data() + 12, rng);
  const double cka_inv = std::max({std::fabs(base - cka_of(x * q, y)), std::fabs(base - cka_of(x * 4.5, y)),
                                   std::fabs(base - cka_of(perm * x, perm * y)),
                                   std::fabs(base - cka_of(y, x))});
  ok = ok && pearson_inv <= 1e-12 && cka_inv <= 1e-12;
  detail += fmt("invariance dev Pearson %.1e, CKA %.1e", pearson_inv, cka_inv);
  return {ok, detail};
}

synth::DatasetManifest pool(const std::vector<std::pair<int, std::size_t>>& label_counts,
                            const std::vector<std::pair<std::pair<double, double>, std::size_t>>& mse_bands,
                            std::uint64_t seed) {
  synth::DatasetManifest m;
  Rng rng = make_rng(seed, 0);
  std::size_t id = 0;
  for (const auto& [label, count] : label_counts) {
    for (std::size_t i = 0; i < count; ++i, ++id) {
      m.records.push_back({"d/" + std::to_string(id) + ".png", "c/" + std::to_string(id) + ".png", label, 0.0});
    }
  }
  std::size_t r = 0;
  for (const auto& [band, count] : mse_bands) {
    for (std::size_t i = 0; i < count && r < m.records.size(); ++i) m.records[r++].mse = uniform(rng, band.first, band.second);
  }
  return m;
}

Outcome curation() {
  // Low-light-like pool: three dense MSE bands and a sparse high tail.
  const auto lol = pool({{3, 9900}},
                        {{{0.0, 0.01}, 3200}, {{0.0101, 0.02}, 3200}, {{0.0201, 0.03}, 3200}, {{0.0301, 0.04}, 300}},
                        7);
  const auto sel = synth::mse_histogram_subsample(lol, 4, 1400, true, 42);
  const auto sel_again = synth::mse_histogram_subsample(lol, 4, 1400, true, 42);
  std::set<std::string> unique;
  for (const auto& r : sel.records) unique.insert(r.degraded);

  const auto small = pool({{0, 350}, {1, 2010}}, {{{0.0, 1.0}, 2360}}, 8);
  const auto bal = synth::balance_dataset(small, {3850, 4018}, 5);
  const auto bal_again = synth::balance_dataset(small, {3850, 4018}, 5);
  const auto counts = bal.class_counts(2);
  std::map<std::string, std::size_t> reps;
  for (const auto& r : bal.records) ++reps[r.degraded];
  std::map<int, std::pair<std::size_t, std::size_t>> spread;
  for (const auto& r : bal.records) {
    auto& [lo, hi] = spread.try_emplace(r.label, SIZE_MAX, 0).first->second;
    lo = std::min(lo, reps[r.degraded]);
    hi = std::max(hi, reps[r.degraded]);
  }
  const bool spread_ok = spread[0].first == 11 && spread[0].second == 11 && spread[1].second - spread[1].first <= 1;

  const bool ok = sel.records.size() == 4200 && unique.size() == 4200 && counts[0] == 3850 && counts[1] == 4018 &&
                  spread_ok && sel.records == sel_again.records && bal.records == bal_again.records;
  return {ok, fmt("histogram selection %zu (unique %zu); balance 350->%zu, 2010->%zu; repetition spread %s; "
                  "deterministic %s",
                  sel.records.size(), unique.size(), counts[0], counts[1], spread_ok ? "ok" : "bad",
                  sel.records == sel_again.records && bal.records == bal_again.records ? "yes" : "no")};
}

Outcome metric_closed_forms() {
  Rng rng = make_rng(4, 0);
  const double psnr20 = metrics::psnr(Tensor({1, 3, 8, 8}, 0.0f), Tensor({1, 3, 8, 8}, 0.1f));
  const double err20 = std::fabs(psnr20 - 20.0);

  const Tensor zero({1, 1, 4, 4}, 0.0f);
  double worst_step = 0.0;
  double prev = 0.0;
  for (int i = 0; i < 6; ++i) {
    const float amp = 0.01f * static_cast<float>(1 << i);
    const double p = metrics::psnr(zero, Tensor({1, 1, 4, 4}, amp));
    if (i > 0) worst_step = std::max(worst_step, std::fabs((prev - p) - 20.0 * std::log10(2.0)));
    prev = p;
  }
  const Tensor a = testutil::random_tensor({1, 3, 32, 32}, rng, 0.0, 1.0);
  const Tensor b = testutil::random_tensor({1, 3, 32, 32}, rng, 0.0, 1.0);
  const double self = std::fabs(metrics::ssim(a, a) - 1.0);
  const double sym = std::fabs(metrics::ssim(a, b) - metrics::ssim(b, a));
  const bool ok = err20 <= 1e-6 && worst_step <= 1e-6 && self <= 1e-9 && sym <= 1e-12;
  return {ok, fmt("PSNR at MSE 0.01: %.9f dB; doubling step dev %.1e; |SSIM(x,x)-1| %.1e; SSIM asymmetry %.1e",
                  psnr20, worst_step, self, sym)};
}

Outcome round_trips() {
  bool ok = true;
  std::string detail;
  const net::Checkpoint ck = fixtures::random_checkpoint(net::ArchConfig::toy(), 8);
  const testutil::TempDir dir("rt");
  net::save_checkpoint(ck, dir.path() / "a.dmoe");
  const net::Checkpoint back = net::load_checkpoint(dir.path() / "a.dmoe");
  const bool ck_rt = net::bitwise_equal(ck, back) && back.config() == ck.config() && back.stage() == ck.stage();
  const auto bytes = net::serialize_checkpoint(ck);
  ok = ok && ck_rt && net::serialize_checkpoint(back) == bytes;

  const auto code_of = [](const std::vector<std::uint8_t>& b) -> std::optional<net::CheckpointError::Code> {
    try {
      net::deserialize_checkpoint(b);
    } catch (const net::CheckpointError& e) {
      return e.code();
    }
    return std::nullopt;
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  auto bad_version = bytes;
  bad_version[4] = static_cast<std::uint8_t>(net::kCheckpointVersion + 1);
  const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2));
  const std::vector<std::uint8_t> tiny(bytes.begin(), bytes.begin() + 6);
  const bool ck_err = code_of(bad_magic) == net::CheckpointError::Code::bad_magic &&
                      code_of(bad_version) == net::CheckpointError::Code::version_mismatch &&
                      code_of(truncated) == net::CheckpointError::Code::truncated &&
                      code_of(tiny) == net::CheckpointError::Code::truncated;
  ok = ok && ck_err;
  detail += fmt("checkpoint round trip %s, error classes %s; ", ck_rt ? "bitwise" : "LOSSY", ck_err ? "ok" : "wrong");

  synth::DatasetManifest m = pool({{0, 3}, {4, 2}}, {{{0.0, 0.5}, 5}}, 3);
  m.curation_log.push_back({{"op", "test"}, {"value", 0.1 + 0.2}});
  synth::save_manifest(m, dir.path() / "m.json");
  const auto mb = synth::load_manifest(dir.path() / "m.json");
  std::ifstream f1(dir.path() / "m.json");
  const std::string text((std::istreambuf_iterator<char>(f1)), {});
  const bool m_rt = mb.records == m.records && mb.curation_log == m.curation_log &&
                    synth::serialize_manifest(mb) == text;
  const auto mcode = [](const std::string& s) -> std::optional<synth::ManifestError::Code> {
    try {
      synth::deserialize_manifest(s);
    } catch (const synth::ManifestError& e) {
      return e.code();
    }
    return std::nullopt;
  };
  std::string v2 = text;
  v2.replace(v2.find("\"schema_version\": 1"), 19, "\"schema_version\": 2");
  const bool m_err = mcode("{ not json") == synth::ManifestError::Code::parse &&
                     mcode(v2) == synth::ManifestError::Code::version_mismatch &&
                     mcode("{\"schema_version\": 1}") == synth::ManifestError::Code::schema;
  bool missing_ok = false;
  try {
    synth::validate_manifest(mb, 5);
  } catch (const synth::ManifestError& e) {
    missing_ok = e.code() == synth::ManifestError::Code::missing_file;
  }
  ok = ok && m_rt && m_err && missing_ok;
  detail += fmt("manifest round trip %s, error classes %s", m_rt ? "lossless" : "LOSSY",
                m_err && missing_ok ? "ok" : "wrong");
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"gating oracle", gating_oracle},
      {"manual override = extracted baseline", manual_override},
      {"active-MAC identity", mac_identity},
      {"toy end-to-end", toy_end_to_end},
      {"stage-2 freeze and replicated init", stage2_contracts},
      {"similarity oracles and invariances", similarity},
      {"curation counts", curation},
      {"metric closed forms", metric_closed_forms},
      {"checkpoint and manifest round trips", round_trips},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
