#include "demoe/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>

#include "demoe/autodiff.hpp"
#include "demoe/error.hpp"
#include "demoe/metrics.hpp"
#include "demoe/model.hpp"

namespace demoe::train {

using net::Checkpoint;
using synth::Sample;

void LossConfig::validate() const {
  if (!(lambda_pixel >= 0.0f) || !(lambda_class >= 0.0f)) {
    throw ArgumentError("loss weights must be non-negative (pixel " + std::to_string(lambda_pixel) + ", class " +
                        std::to_string(lambda_class) + ")");
  }
}

double pixel_loss(const Tensor& pred, const Tensor& gt) {
  if (!(pred.shape() == gt.shape())) throw ShapeError("pixel_loss: " + pred.shape().str() + " vs " + gt.shape().str());
  if (pred.numel() == 0) throw ArgumentError("pixel_loss: empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) acc += std::fabs(static_cast<double>(pred[i]) - gt[i]);
  return acc / static_cast<double>(pred.numel());
}

double class_loss(std::span<const float> w, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= w.size()) {
    throw ArgumentError("class_loss: label " + std::to_string(label) + " outside [0, " + std::to_string(w.size()) + ")");
  }
  return -std::log(std::max(static_cast<double>(w[static_cast<std::size_t>(label)]), 1e-12));
}

double combined_loss(const Tensor& pred, const Tensor& gt, std::span<const float> w, int label,
                     const LossConfig& cfg) {
  cfg.validate();
  const double p = pixel_loss(pred, gt);
  return cfg.lambda_pixel * p + cfg.lambda_class * class_loss(w, label);
}

Tensor flip_horizontal(const Tensor& t) {
  const Shape& s = t.shape();
  Tensor out(s);
  for (std::size_t p = 0; p < s.n * s.c; ++p) {
    for (std::size_t y = 0; y < s.h; ++y) {
      const float* src = t.ptr() + p * s.plane() + y * s.w;
      float* dst = out.ptr() + p * s.plane() + y * s.w;
      for (std::size_t x = 0; x < s.w; ++x) dst[x] = src[s.w - 1 - x];
    }
  }
  return out;
}

Tensor flip_vertical(const Tensor& t) {
  const Shape& s = t.shape();
  Tensor out(s);
  for (std::size_t p = 0; p < s.n * s.c; ++p) {
    for (std::size_t y = 0; y < s.h; ++y) {
      const float* src = t.ptr() + p * s.plane() + (s.h - 1 - y) * s.w;
      std::copy(src, src + s.w, out.ptr() + p * s.plane() + y * s.w);
    }
  }
  return out;
}

PatchPair augment(PatchPair pair, AugmentFlags flags, Rng& rng) {
  if (!(pair.degraded.shape() == pair.clean.shape())) {
    throw ShapeError("augment: " + pair.degraded.shape().str() + " vs " + pair.clean.shape().str());
  }
  if (flags.hflip && uniform_int(rng, 0, 1) == 1) {
    pair.degraded = flip_horizontal(pair.degraded);
    pair.clean = flip_horizontal(pair.clean);
  }
  if (flags.vflip && uniform_int(rng, 0, 1) == 1) {
    pair.degraded = flip_vertical(pair.degraded);
    pair.clean = flip_vertical(pair.clean);
  }
  return pair;
}

void TrainConfig::validate() const {
  arch.validate();
  loss.validate();
  const std::size_t div = std::size_t{1} << arch.num_levels;
  if (patch == 0 || patch % div != 0) {
    throw ArgumentError("patch size " + std::to_string(patch) + " must be a positive multiple of " +
                        std::to_string(div));
  }
  if (batch == 0) throw ArgumentError("batch size must be positive");
  if (epochs == 0) throw ArgumentError("epochs must be positive");
  if (!(lr0 > 0.0f) || !(lr_min >= 0.0f) || lr_min > lr0) {
    throw ArgumentError("learning rate schedule must satisfy 0 <= lr_min <= lr0, lr0 > 0");
  }
  if (clip_norm < 0.0) throw ArgumentError("clip_norm must be non-negative");
  if (router_noise < 0.0) throw ArgumentError("router_noise must be non-negative");
}

TrainConfig TrainConfig::toy() { return TrainConfig{}; }

TrainConfig TrainConfig::full_reference() {
  TrainConfig c;
  c.arch = net::ArchConfig::full();
  c.patch = 384;
  c.batch = 32;
  c.lr_min = 1e-7f;
  return c;
}

namespace {

std::size_t check_data(const std::vector<Sample>& data, const TrainConfig& cfg) {
  if (data.empty()) throw ArgumentError("training: empty dataset");
  const std::size_t classes = cfg.arch.num_experts;
  std::vector<std::size_t> counts(classes, 0);
  for (const auto& s : data) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= classes) {
      throw ArgumentError("training: label " + std::to_string(s.label) + " outside [0, " + std::to_string(classes) +
                          ")");
    }
    if (s.degraded.shape().h < cfg.patch || s.degraded.shape().w < cfg.patch) {
      throw ArgumentError("training: image " + s.degraded.shape().str() + " smaller than patch " +
                          std::to_string(cfg.patch));
    }
    ++counts[static_cast<std::size_t>(s.label)];
  }
  std::size_t most = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) throw ArgumentError("training: class " + std::to_string(c) + " has no samples");
    most = std::max(most, counts[c]);
  }
  return most * classes;
}

// Every class repeated in shuffled cycles up to the largest class count, then
// the whole list shuffled.
std::vector<std::size_t> balanced_epoch(const std::vector<Sample>& data, std::size_t classes, Rng& rng) {
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data[i].label)].push_back(i);
  std::size_t most = 0;
  for (const auto& v : by_class) most = std::max(most, v.size());
  std::vector<std::size_t> order;
  order.reserve(most * classes);
  for (const auto& members : by_class) {
    std::size_t taken = 0;
    while (taken < most) {
      auto cycle = members;
      shuffle(cycle.begin(), cycle.end(), rng);
      const std::size_t n = std::min(cycle.size(), most - taken);
      order.insert(order.end(), cycle.begin(), cycle.begin() + static_cast<std::ptrdiff_t>(n));
      taken += n;
    }
  }
  shuffle(order.begin(), order.end(), rng);
  return order;
}

Tensor crop(const Tensor& img, std::size_t top, std::size_t left, std::size_t size) {
  const Shape& s = img.shape();
  if (top == 0 && left == 0 && s.h == size && s.w == size) return img;
  Tensor out({1, s.c, size, size});
  for (std::size_t c = 0; c < s.c; ++c) {
    for (std::size_t y = 0; y < size; ++y) {
      const float* src = img.ptr() + c * s.plane() + (top + y) * s.w + left;
      std::copy(src, src + size, out.ptr() + c * size * size + y * size);
    }
  }
  return out;
}

struct Batch {
  Tensor degraded;
  Tensor clean;
  std::vector<int> labels;
};

Batch make_batch(const std::vector<Sample>& data, std::span<const std::size_t> idx, const TrainConfig& cfg,
                 Rng& rng) {
  std::vector<Tensor> deg;
  std::vector<Tensor> cln;
  Batch b;
  for (std::size_t i : idx) {
    const Sample& s = data[i];
    const std::size_t top = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(s.degraded.shape().h - cfg.patch)));
    const std::size_t left = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(s.degraded.shape().w - cfg.patch)));
    PatchPair p{crop(s.degraded, top, left, cfg.patch), crop(s.clean, top, left, cfg.patch)};
    p = augment(std::move(p), cfg.augment, rng);
    deg.push_back(std::move(p.degraded));
    cln.push_back(std::move(p.clean));
    b.labels.push_back(s.label);
  }
  b.degraded = concat_batch(deg);
  b.clean = concat_batch(cln);
  return b;
}

TrainResult run_stage(Checkpoint ckpt, const std::vector<Sample>& data, const TrainConfig& cfg, int stage,
                      const net::ParamBinder::Predicate& trainable) {
  const std::size_t per_epoch = check_data(data, cfg);
  const std::size_t batches = (per_epoch + cfg.batch - 1) / cfg.batch;
  const auto total = static_cast<std::int64_t>(batches * cfg.epochs);

  std::vector<std::size_t> train_idx;
  std::vector<Shape> shapes;
  for (std::size_t i = 0; i < ckpt.size(); ++i) {
    if (trainable(ckpt.records()[i].name)) {
      train_idx.push_back(i);
      shapes.push_back(ckpt.records()[i].value.shape());
    }
  }
  optim::AdamW opt(cfg.adam, shapes);
  const std::size_t classes = cfg.arch.num_experts;

  TrainResult result;
  std::int64_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = make_rng(cfg.seed, (static_cast<std::uint64_t>(stage) << 32) | epoch);
    const std::vector<std::size_t> order = balanced_epoch(data, classes, rng);
    EpochStats stats;
    stats.stage = stage;
    stats.epoch = epoch;
    stats.lr = optim::cosine_anneal(cfg.lr0, cfg.lr_min, step, total);
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t first = b * cfg.batch;
      const std::size_t count = std::min(cfg.batch, order.size() - first);
      const Batch batch = make_batch(data, std::span(order).subspan(first, count), cfg, rng);

      ad::Tape tape(true);
      const net::ParamBinder params(tape, ckpt, trainable);
      const ad::Var x = tape.leaf(batch.degraded);
      const ad::Var y = tape.leaf(batch.clean);
      Tensor noise;
      if (cfg.router_noise > 0.0) {
        noise = Tensor({count, classes, 1, 1});
        for (float& v : noise.data()) v = static_cast<float>(normal(rng, 0.0, cfg.router_noise));
      }
      const net::ForwardResult fr =
          net::demoe_forward(x, params, net::Gating::soft(), cfg.router_noise > 0.0 ? &noise : nullptr);
      const ad::Var lp = ad::l1_loss(fr.restored, y);
      ad::Var loss = lp;
      double lc_value = 0.0;
      if (stage == 1) {
        const ad::Var lc = ad::cross_entropy_from_probs(*fr.router, batch.labels);
        lc_value = lc.value()[0];
        const ad::Var terms[] = {lp, lc};
        const float weights[] = {cfg.loss.lambda_pixel, cfg.loss.lambda_class};
        loss = ad::weighted_sum(terms, weights);
      }
      tape.backward(loss);

      std::vector<Tensor> grads;
      grads.reserve(train_idx.size());
      for (std::size_t i : train_idx) grads.push_back(tape.grad_or_zero(params.vars()[i]));
      std::vector<Tensor*> gptr;
      std::vector<const Tensor*> cgptr;
      std::vector<Tensor*> pptr;
      for (std::size_t j = 0; j < train_idx.size(); ++j) {
        gptr.push_back(&grads[j]);
        cgptr.push_back(&grads[j]);
        pptr.push_back(&ckpt.records()[train_idx[j]].value);
      }
      if (cfg.clip_norm > 0.0) optim::clip_grad_norm(gptr, cfg.clip_norm);
      opt.step(pptr, cgptr, optim::cosine_anneal(cfg.lr0, cfg.lr_min, step, total));
      ++step;

      stats.loss += loss.value()[0];
      stats.pixel += lp.value()[0];
      stats.classification += lc_value;
    }
    stats.loss /= static_cast<double>(batches);
    stats.pixel /= static_cast<double>(batches);
    stats.classification /= static_cast<double>(batches);
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cfg.on_epoch) cfg.on_epoch(stats);
    result.curve.push_back(stats);
  }
  result.checkpoint = std::move(ckpt);
  return result;
}

}  // namespace

TrainResult stage1_train(const std::vector<Sample>& data, const TrainConfig& cfg) {
  cfg.validate();
  net::ArchConfig arch = cfg.arch;
  arch.expert_slots = 1;
  arch.router = true;
  Checkpoint ckpt = net::init_checkpoint(arch, cfg.seed);
  TrainConfig c = cfg;
  c.arch = arch;
  TrainResult r = run_stage(std::move(ckpt), data, c, 1, [](const std::string&) { return true; });
  r.checkpoint.set_stage(net::Stage::stage1);
  return r;
}

TrainResult stage1_train(const synth::DatasetManifest& manifest, const TrainConfig& cfg) {
  return stage1_train(synth::load_samples(manifest), cfg);
}

TrainResult stage2_finetune(const Checkpoint& stage1, const std::vector<Sample>& data, const TrainConfig& cfg) {
  if (stage1.stage() != net::Stage::stage1) {
    throw ArgumentError("stage 2 needs a stage1 checkpoint, got one tagged " + net::to_string(stage1.stage()));
  }
  net::check_architecture(stage1);
  Checkpoint ckpt = net::replicate_experts(stage1, stage1.config().num_experts);
  ckpt.set_stage(net::Stage::stage2);
  TrainConfig c = cfg;
  c.arch = ckpt.config();
  c.validate();
  auto trainable = [](const std::string& name) { return !net::is_encoder_param(name) && !net::is_router_param(name); };
  TrainResult r = run_stage(std::move(ckpt), data, c, 2, trainable);
  r.checkpoint.set_stage(net::Stage::stage2);
  return r;
}

TrainResult stage2_finetune(const Checkpoint& stage1, const synth::DatasetManifest& manifest,
                            const TrainConfig& cfg) {
  return stage2_finetune(stage1, synth::load_samples(manifest), cfg);
}

Evaluation evaluate(const Checkpoint& ckpt, const std::vector<Sample>& data, std::size_t k, int expert,
                    std::size_t batch) {
  if (data.empty()) throw ArgumentError("evaluate: empty dataset");
  if (batch == 0) throw ArgumentError("evaluate: batch must be positive");
  Evaluation ev;
  std::optional<std::size_t> override_expert;
  if (expert >= 0) override_expert = static_cast<std::size_t>(expert);
  for (std::size_t first = 0; first < data.size();) {
    // Batch only same-shaped neighbours.
    std::size_t last = first + 1;
    while (last < data.size() && last - first < batch && data[last].degraded.shape() == data[first].degraded.shape()) {
      ++last;
    }
    std::vector<Tensor> imgs;
    for (std::size_t i = first; i < last; ++i) imgs.push_back(data[i].degraded);
    const net::Inference inf = net::demoe_infer(ckpt, concat_batch(imgs), k, override_expert);
    for (std::size_t i = first; i < last; ++i) {
      const Tensor restored = inf.restored.slice_batch(i - first, 1);
      ev.psnr.push_back(metrics::psnr(restored, data[i].clean));
      ev.degraded_psnr.push_back(metrics::psnr(data[i].degraded, data[i].clean));
      const Shape& s = restored.shape();
      ev.ssim.push_back(s.h >= 11 && s.w >= 11 ? metrics::ssim(restored, data[i].clean) : 0.0);
      int pred = -1;
      if (!inf.weights.empty()) {
        const auto& w = inf.weights[i - first].w;
        pred = static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
      }
      ev.predicted.push_back(pred);
      ev.labels.push_back(data[i].label);
    }
    first = last;
  }
  auto finite_mean = [](const std::vector<double>& v) {
    double s = 0.0;
    std::size_t n = 0;
    for (double x : v) {
      if (std::isfinite(x)) {
        s += x;
        ++n;
      }
    }
    return n > 0 ? s / static_cast<double>(n) : std::numeric_limits<double>::infinity();
  };
  ev.mean_psnr = finite_mean(ev.psnr);
  ev.mean_degraded_psnr = finite_mean(ev.degraded_psnr);
  ev.mean_ssim = finite_mean(ev.ssim);
  if (ev.predicted.front() >= 0) ev.router_accuracy = metrics::router_accuracy(ev.predicted, ev.labels);
  return ev;
}

}  // namespace demoe::train
