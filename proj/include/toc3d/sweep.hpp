#pragma once

// Keeping-ratio x N_q grids: analytic cost, measured time and scorer recall
// per cell. A failing cell is recorded and the sweep moves on.

#include "toc3d/bench.hpp"
#include "toc3d/flops.hpp"
#include "toc3d/run_config.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace toc3d::prof {

struct SweepRow {
  std::vector<int> update_layers;
  std::vector<double> ratios;
  int n_q = 0;
  FlopReport flops;
  std::optional<BenchComparison> bench;
  std::optional<double> recall;  // mean per-stage foreground recall on held-out frames
  std::string error;             // empty when the cell succeeded

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepOptions {
  bool run_bench = true;
  bool measure_recall = true;
  /// Trained scorers by N_q; missing entries are trained on demand and cached here.
  std::map<int, mqts::ScorerParams>* scorer_cache = nullptr;
};

/// The schedule used for a ratio set: cfg's update layers when the lengths
/// agree, otherwise evenly spaced quarter-depth stages.
mqts::CompressionSchedule schedule_for(const RunConfig& cfg, const std::vector<double>& ratios);

/// Trains a scorer with cfg.train on cfg.train_samples simulated frames.
mqts::TrainResult train_for(const RunConfig& cfg, int n_q);

/// Mean over held-out frames and schedule stages of the fraction of
/// foreground cells (target >= 0.8) that the backbone kept salient.
double backbone_recall(const RunConfig& cfg, const mqts::CompressionSchedule& schedule,
                       const mqts::ScorerParams& scorer);

std::vector<SweepRow> sweep(const RunConfig& cfg, const std::vector<std::vector<double>>& ratio_sets,
                            const std::vector<int>& nq_set, const SweepOptions& options = {});

}  // namespace toc3d::prof
