#pragma once

#include "toc3d/mqts.hpp"
#include "toc3d/scene_sim.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace toc3d::mqts {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 1;
  double lr = 1e-4;
  double momentum = 0.9;
  double loss_weight = 5.0;
  double alpha = kFocalAlpha;
  double beta = kFocalBeta;
  double grad_clip = 35.0;  // global L2 norm; <= 0 disables
  std::uint64_t seed = 0;   // shuffling order
};

struct TrainResult {
  ScorerParams params;
  std::vector<double> epoch_loss;  // mean focal loss (unweighted) per epoch
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Momentum SGD over the focal loss, one shuffled pass per epoch.
TrainResult train_scorer(std::span<const sim::SimSample> dataset, const ScorerParams& init,
                         const TrainConfig& config);

struct RecallStats {
  long long foreground = 0;
  long long recalled = 0;
  double recall() const { return foreground ? static_cast<double>(recalled) / foreground : 1.0; }
};

/// Fraction of tokens with target >= threshold that land in the salient set
/// when splitting by the scorer at keeping ratio rho.
RecallStats foreground_recall(std::span<const sim::SimSample> samples, const ScorerParams& params, double rho,
                              double threshold = 0.8);

/// Recall of one partition against one heatmap.
RecallStats partition_recall(const TokenPartition& part, const HeatmapTarget& target, double threshold = 0.8);

}  // namespace toc3d::mqts
