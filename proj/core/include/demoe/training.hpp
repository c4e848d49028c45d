#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "demoe/arch.hpp"
#include "demoe/checkpoint.hpp"
#include "demoe/dataset.hpp"
#include "demoe/optim.hpp"
#include "demoe/rng.hpp"

namespace demoe::train {

struct LossConfig {
  float lambda_pixel = 1.0f;
  float lambda_class = 0.001f;

  /// Throws ArgumentError on a negative weight.
  void validate() const;
};

/// Mean absolute error over all elements.
double pixel_loss(const Tensor& pred, const Tensor& gt);
/// -log(max(w[label], 1e-12)).
double class_loss(std::span<const float> w, int label);
double combined_loss(const Tensor& pred, const Tensor& gt, std::span<const float> w, int label,
                     const LossConfig& cfg = {});

struct AugmentFlags {
  bool hflip = true;
  bool vflip = true;
};

struct PatchPair {
  Tensor degraded;
  Tensor clean;
};

/// Draws one coin per enabled flip and applies the same flips to both images.
PatchPair augment(PatchPair pair, AugmentFlags flags, Rng& rng);
Tensor flip_horizontal(const Tensor& t);
Tensor flip_vertical(const Tensor& t);

struct EpochStats {
  int stage = 1;
  std::size_t epoch = 0;
  double loss = 0.0;        // mean combined loss over the epoch's batches
  double pixel = 0.0;
  double classification = 0.0;
  float lr = 0.0f;          // learning rate of the epoch's first step
  double seconds = 0.0;
};

struct TrainConfig {
  net::ArchConfig arch = net::ArchConfig::toy();
  std::size_t patch = 32;
  std::size_t batch = 8;
  std::size_t epochs = 30;  // per stage
  std::uint64_t seed = 0;
  AugmentFlags augment;
  float lr0 = 1e-3f;
  float lr_min = 1e-6f;
  optim::AdamWConfig adam;
  LossConfig loss;
  double clip_norm = 0.0;     // 0 disables clipping
  double router_noise = 0.0;  // std of Gaussian noise added to router logits, 0 disables
  std::function<void(const EpochStats&)> on_epoch;

  /// Throws ArgumentError on inconsistent settings.
  void validate() const;

  /// 32x32 patches, batch 8, 30 epochs per stage, lr 1e-3 to 1e-6.
  static TrainConfig toy();
  /// 384x384 patches, batch 32, lr 1e-3 to 1e-7 on the full architecture.
  static TrainConfig full_reference();
};

struct TrainResult {
  net::Checkpoint checkpoint;
  std::vector<EpochStats> curve;
};

/// Encoder, single-slot decoder and router trained with the combined loss.
/// Result is tagged stage1.
TrainResult stage1_train(const std::vector<synth::Sample>& data, const TrainConfig& cfg);
TrainResult stage1_train(const synth::DatasetManifest& manifest, const TrainConfig& cfg);

/// Replicates the stage-1 decoder into every expert, freezes encoder and
/// router, and finetunes the decoder with the pixel loss under soft gating.
/// Result is tagged stage2.
TrainResult stage2_finetune(const net::Checkpoint& stage1, const std::vector<synth::Sample>& data,
                            const TrainConfig& cfg);
TrainResult stage2_finetune(const net::Checkpoint& stage1, const synth::DatasetManifest& manifest,
                            const TrainConfig& cfg);

struct Evaluation {
  std::vector<double> psnr;           // restored vs clean
  std::vector<double> degraded_psnr;  // degraded input vs clean
  std::vector<double> ssim;
  std::vector<int> predicted;         // router argmax, -1 without a router
  std::vector<int> labels;
  double mean_psnr = 0.0;
  double mean_degraded_psnr = 0.0;
  double mean_ssim = 0.0;
  double router_accuracy = -1.0;
};

/// Top-k inference over `data`, or a forced expert when `expert` >= 0.
Evaluation evaluate(const net::Checkpoint& ckpt, const std::vector<synth::Sample>& data, std::size_t k = 1,
                    int expert = -1, std::size_t batch = 16);

}  // namespace demoe::train
