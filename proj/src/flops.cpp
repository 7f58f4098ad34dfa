#include "toc3d/flops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace toc3d::prof {

std::string FlopReport::convention() {
  return "MAC = multiply-accumulate, FLOPs = 2 x MACs; QKV/output projections, attention products and MLP "
         "counted per layer; patch embedding, layer norms, softmax and GELU excluded; compressed segments count "
         "N_s + 1 tokens (bridge); scorer MACs reported separately";
}

std::int64_t attention_macs(std::int64_t m, std::int64_t c, std::int64_t w, bool global) {
  const std::int64_t keys = global ? m : w;
  return 4 * m * c * c + 2 * m * keys * c;
}

std::int64_t mlp_macs(std::int64_t m, std::int64_t c, double mlp_ratio) {
  const auto hidden = static_cast<std::int64_t>(std::llround(mlp_ratio * static_cast<double>(c)));
  return 2 * m * c * hidden;
}

namespace {

std::int64_t activation_bytes(std::int64_t m, std::int64_t c, std::int64_t hidden, std::int64_t keys, int heads,
                              int bytes) {
  // input, qkv, attention output, one head's score block, MLP hidden
  return bytes * (m * c + 3 * m * c + m * c + m * keys * heads + m * hidden);
}

}  // namespace

FlopReport count_macs(const router::EncoderConfig& enc, const mqts::CompressionSchedule& schedule,
                      const CostShape& shape) {
  enc.validate();
  if (shape.n_tokens <= 0) throw std::invalid_argument("count_macs: need at least one token");
  const auto plan = mqts::plan_updates(schedule, enc.layers);
  const std::int64_t n = shape.n_tokens;
  const std::int64_t c = enc.dim;
  const std::int64_t hidden = enc.hidden_dim();
  const std::int64_t w = std::min(shape.window_tokens, n);

  FlopReport r;
  std::int64_t peak_act = 0;
  for (const auto& seg : plan) {
    std::int64_t m = n;
    if (seg.update_scores) {
      const std::int64_t n_s = mqts::salient_count(static_cast<int>(n), seg.rho);
      m = n_s < n ? n_s + 1 : n;
    }
    for (int l = seg.begin; l < seg.end; ++l) {
      const bool global = enc.kind(l) == router::AttentionKind::global;
      LayerCost lc;
      lc.layer = l;
      lc.tokens = m;
      lc.attention_macs = attention_macs(m, c, std::min(w, m), global);
      lc.mlp_macs = mlp_macs(m, c, enc.mlp_ratio);
      lc.baseline_macs = attention_macs(n, c, w, global) + mlp_macs(n, c, enc.mlp_ratio);
      if (seg.update_scores && l == seg.begin) {
        lc.mqts_macs = n * c * shape.c_q + n * shape.n_q * shape.c_q + n * shape.n_q;
      }
      r.baseline_macs += lc.baseline_macs;
      r.compressed_macs += lc.backbone_macs();
      r.mqts_macs += lc.mqts_macs;
      peak_act = std::max(peak_act, activation_bytes(m, c, hidden, global ? m : std::min(w, m), 1,
                                                     shape.bytes_per_element));
      r.layers.push_back(lc);
    }
  }
  const std::int64_t weights_per_layer = 4 * c * c + 4 * c + 2 * c * hidden + hidden + c + 4 * c;
  r.memory_bytes = shape.bytes_per_element * weights_per_layer * enc.layers + peak_act;
  const auto base = static_cast<double>(r.baseline_macs);
  r.reduction = 1.0 - static_cast<double>(r.compressed_macs) / base;
  r.reduction_with_overhead = 1.0 - static_cast<double>(r.compressed_macs + r.mqts_macs) / base;
  return r;
}

FlopReport count_macs(const router::EncoderConfig& enc, const mqts::CompressionSchedule& schedule,
                      const TokenLattice& lattice, int n_q, int c_q) {
  CostShape shape;
  shape.n_tokens = lattice.size();
  shape.window_tokens = static_cast<std::int64_t>(std::min(enc.window_size, lattice.rows)) *
                        std::min(enc.window_size, lattice.cols);
  shape.n_q = n_q;
  shape.c_q = c_q;
  return count_macs(enc, schedule, shape);
}

}  // namespace toc3d::prof
