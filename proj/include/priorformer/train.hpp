#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "priorformer/config.hpp"
#include "priorformer/dataio.hpp"
#include "priorformer/params.hpp"

namespace priorformer {

enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
  std::size_t epochs = 100;
  double lr = 1e-4;
  std::size_t batch_size = 8;  // videos per step
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double split_ratio = 0.8;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_plcc;
  std::optional<double> val_srcc;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TrainResult {
  ModelParams params;  // last finite state
  std::vector<EpochStats> history;
  bool diverged = false;
  std::string message;
};

struct DatasetSplit {
  std::vector<FeatureSequence> train;
  std::vector<FeatureSequence> test;
};

// Seeded shuffle, then the first round(ratio * n) videos (at least one, at
// most n - 1) go to train.
DatasetSplit split_dataset(const std::vector<FeatureSequence>& videos, double ratio, std::uint64_t seed);

struct VideoGradient {
  double prediction = 0.0;
  double loss = 0.0;  // |Q - MOS|
  ModelParams grads;
};

// L1 loss of one labelled video and its gradient w.r.t. every parameter.
VideoGradient video_gradient(const FeatureSequence& video, const ModelParams& params, const ModelConfig& config);

// Minibatch training of the L1 video-score loss, gradients averaged over each
// batch. Starts from init_model(config, config.seed) unless `initial` is given.
// A non-finite loss or value stops training; the result then holds the
// parameters from before the failing step and diverged = true.
TrainResult train(const std::vector<FeatureSequence>& train_set, const ModelConfig& config, const TrainConfig& tc,
                  const std::vector<FeatureSequence>* validation = nullptr,
                  std::optional<ModelParams> initial = std::nullopt);

struct EvalReport {
  double plcc = 0.0;
  double srcc = 0.0;
  std::vector<std::string> ids;
  std::vector<double> predictions;
  std::vector<double> mos;
  std::string ablation;
};

// Predicts every video under config (including its ablation switches). Throws
// ContractError on an unlabelled video and UndefinedCorrelation when the
// predictions (or labels) are constant.
EvalReport evaluate(const ModelParams& params, const ModelConfig& config, const std::vector<FeatureSequence>& videos,
                    std::size_t threads = 1);

// One "metric<TAB>value<TAB>ablation" line each for plcc, srcc and n.
std::string format_report(const EvalReport& report);

}  // namespace priorformer
