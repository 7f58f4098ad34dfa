#pragma once

// Closed-form MAC accounting for the backbone. One MAC is one
// multiply-accumulate; FLOPs are reported as 2 x MACs. Patch embedding and
// normalization layers are left out of every count.

#include "toc3d/encoder.hpp"
#include "toc3d/mqts.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace toc3d::prof {

struct LayerCost {
  int layer = 0;
  std::int64_t tokens = 0;           // rows through the block (bridge included)
  std::int64_t attention_macs = 0;
  std::int64_t mlp_macs = 0;
  std::int64_t mqts_macs = 0;        // scorer cost charged before this layer
  std::int64_t baseline_macs = 0;    // same layer with every token present

  std::int64_t backbone_macs() const { return attention_macs + mlp_macs; }
  friend bool operator==(const LayerCost&, const LayerCost&) = default;
};

struct FlopReport {
  std::vector<LayerCost> layers;
  std::int64_t baseline_macs = 0;
  std::int64_t compressed_macs = 0;  // attention + MLP, scorer excluded
  std::int64_t mqts_macs = 0;
  double reduction = 0.0;                // 1 - compressed / baseline
  double reduction_with_overhead = 0.0;  // scorer MACs added to the compressed side
  std::int64_t memory_bytes = 0;         // weights plus peak per-layer activations

  static std::int64_t flops(std::int64_t macs) { return 2 * macs; }
  /// One line describing what is and is not counted.
  static std::string convention();
  friend bool operator==(const FlopReport&, const FlopReport&) = default;
};

struct CostShape {
  std::int64_t n_tokens = 0;
  std::int64_t window_tokens = 0;  // w: keys per window
  int n_q = 256;
  int c_q = 256;
  int bytes_per_element = 4;
};

/// attention = 4 m C^2 + (2 m w C | 2 m^2 C), MLP = 2 m C (r C),
/// MQTS = N C C_q + N N_q C_q + N N_q once per update layer.
FlopReport count_macs(const router::EncoderConfig& enc, const mqts::CompressionSchedule& schedule,
                      const CostShape& shape);

/// Window term taken from the lattice: min(ws, rows) * min(ws, cols).
FlopReport count_macs(const router::EncoderConfig& enc, const mqts::CompressionSchedule& schedule,
                      const TokenLattice& lattice, int n_q, int c_q = 256);

std::int64_t attention_macs(std::int64_t m, std::int64_t c, std::int64_t w, bool global);
std::int64_t mlp_macs(std::int64_t m, std::int64_t c, double mlp_ratio);

}  // namespace toc3d::prof
