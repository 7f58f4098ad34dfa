#pragma once

// Wall-clock benchmarking of the plain and compressed backbones on identical
// inputs. Timing uses steady_clock; baseline and compressed samples are
// interleaved, and each sample batches enough forwards to sit well above the
// clock resolution.

#include "toc3d/mqts.hpp"
#include "toc3d/run_config.hpp"

#include <functional>
#include <optional>
#include <string>

namespace toc3d::prof {

struct BenchResult {
  double mean_ms = 0.0;  // per forward
  double std_ms = 0.0;   // sample standard deviation across timed samples
  int iterations = 0;    // timed samples
  int warmup = 0;
  int batch = 1;         // forwards per timed sample
  std::string digest;    // config + seed
  int threads = 1;       // parallelism used by the kernels
  int cores = 1;         // hardware threads on the host

  friend bool operator==(const BenchResult&, const BenchResult&) = default;
};

struct BenchComparison {
  BenchResult baseline;
  BenchResult compressed;
  double separation_sigma = 0.0;  // (baseline - compressed) / SE of the difference
  std::optional<double> max_abs_diff;  // only for all-ones schedules
  std::string output_hash_baseline;
  std::string output_hash_compressed;

  double ratio() const { return compressed.mean_ms / baseline.mean_ms; }
  friend bool operator==(const BenchComparison&, const BenchComparison&) = default;
};

/// Smallest observable steady_clock increment, in milliseconds.
double clock_resolution_ms();

/// Times `a` and `b` alternately: warmup calls each, then `iterations`
/// samples each of `batch` calls. The batch is raised until one sample of
/// the faster callable lasts at least max(min_sample_ms, 1000 ticks).
std::pair<BenchResult, BenchResult> time_pair(const std::function<void()>& a, const std::function<void()>& b,
                                              const BenchConfig& cfg);

/// Builds the sample, weights and (unless given) an untrained scorer from
/// cfg.seed, then times encode_plain against forward_backbone.
BenchComparison benchmark(const RunConfig& cfg, const std::optional<mqts::ScorerParams>& scorer = std::nullopt);

/// FNV-1a over the raw bytes of a matrix, 16 hex digits.
template <typename T>
std::string tensor_hash(const MatrixT<T>& m);

}  // namespace toc3d::prof
