// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "basislens/dataset.hpp"
#include "basislens/model.hpp"
#include "basislens/objectives.hpp"

namespace basislens {

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
  std::uint64_t seed = 1;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double momentum = 0.9;  // SGD
  double beta1 = 0.9;     // Adam
  double beta2 = 0.999;
  std::size_t batch_size = 8;
  std::size_t max_epochs = 30;
  std::size_t patience = 5;  // epochs without validation-CC improvement
  int stage = 1;
  LossWeights loss;
  NssWeighting nss_weighting = NssWeighting::Density;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_nss = 0.0;
  double val_cc = 0.0;
  double val_kld = 0.0;
  double wall_seconds = 0.0;
  std::filesystem::path checkpoint;
};

// Epoch 0 is the state before any update.
struct TrainLog {
  int stage = 1;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::filesystem::path best_checkpoint;

  const EpochRecord& best() const;
};

struct TrainResult {
  SaliencyModel model;  // best-validation-CC parameters
  TrainLog log;
};

// Trains backbone, bases and W^f end to end through the factorized head.
// Writes epoch_NNN.ckpt per epoch, best.ckpt and train_log.csv into out_dir.
TrainResult train_stage1(const Corpus& corpus, const BackboneConfig& backbone, const TrainConfig& config,
                         const std::filesystem::path& out_dir);

inline constexpr double kStage2InitialBias = 1.0;

// Freezes everything from a stage-1 checkpoint, zeroes W^sal, sets its bias to
// kStage2InitialBias, and fits only those two on the rerouted head.
TrainResult train_stage2_reroute(const std::filesystem::path& stage1_checkpoint, const Corpus& corpus,
                                 const TrainConfig& config, const std::filesystem::path& out_dir);

inline constexpr long long kBestEpoch = -1;

// Checkpoint paths for the requested epochs; kBestEpoch selects the retained
// best one.
std::vector<std::filesystem::path> snapshot_epochs(const TrainLog& log, std::span<const long long> epochs);

// CSV: epoch,train_loss,val_nss,val_cc,val_kld,checkpoint,best,stage. Wall times
// are kept out so reruns produce identical files.
void write_train_log(const TrainLog& log, const std::filesystem::path& csv);
TrainLog read_train_log(const std::filesystem::path& csv);

struct ImageMetrics {
  std::string image_id;
  double nss = 0.0;
  double cc = 0.0;
  double kld = 0.0;
};

struct EvalResult {
  std::vector<ImageMetrics> images;
  ImageMetrics mean;  // image_id "mean"
};

// Metrics at stimulus resolution: predictions are bilinearly upsampled, NSS
// uses the discrete fixations, CC and KLD the density map.
EvalResult evaluate(const SaliencyModel& model, const Corpus& corpus, std::span<const std::size_t> indices,
                    Head head);
ImageMetrics evaluate_map(const SaliencyMap& grid_map, std::size_t grid_h, std::size_t grid_w,
                          const AnnotatedImage& image);
void write_metrics_csv(const EvalResult& result, const std::filesystem::path& csv);

}  // namespace basislens
