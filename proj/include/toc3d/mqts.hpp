#pragma once

// Motion query-guided token selection: confidence-based query sampling,
// token/query attention scoring, top-k splitting, score-update planning and
// the focal-loss supervision used to train the scorer.

#include "toc3d/motion_encoding.hpp"
#include "toc3d/numerics.hpp"
#include "toc3d/types.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace toc3d::mqts {

/// Top-n_q rows by confidence, descending; ties keep the lower original index.
HistoryQuerySet sample_history_queries(const HistoryQuerySet& queries, int n_q);

struct ImportanceScore {
  std::vector<double> scores;  // N values in [0, 1]
  Matrix attention;            // N x N_q, kept for inspection
  int computed_at_layer = -1;
};

struct TokenPartition {
  std::vector<int> salient;    // ascending original indices
  std::vector<int> redundant;  // ascending original indices
  double rho = 1.0;

  int size() const { return static_cast<int>(salient.size() + redundant.size()); }
};

/// Number of salient tokens for a keeping ratio: max(1, round(rho * n)).
int salient_count(int n, double rho);

TokenPartition split_tokens(std::span<const double> scores, double rho);

struct CompressionSchedule {
  std::vector<int> update_layers;  // strictly increasing
  std::vector<double> ratios;      // keeping ratio per stage, in (0, 1]

  std::size_t size() const { return update_layers.size(); }
  bool empty() const { return update_layers.empty(); }
  void validate(int total_layers) const;

  /// Stages at a quarter, half and three quarters of the depth.
  static CompressionSchedule at_quarters(int total_layers, double r0, double r1, double r2);
  static CompressionSchedule fast(int total_layers) { return at_quarters(total_layers, 0.7, 0.5, 0.5); }
  static CompressionSchedule faster(int total_layers) { return at_quarters(total_layers, 0.5, 0.4, 0.3); }
};

struct SegmentSpec {
  int begin = 0;  // first layer
  int end = 0;    // one past the last layer
  double rho = 1.0;
  bool update_scores = false;
};

/// Tiles [0, total_layers); layers before the first update run uncompressed.
std::vector<SegmentSpec> plan_updates(const CompressionSchedule& schedule, int total_layers);

struct ScorerParams {
  LinearLayer token_proj;  // C -> C_q
  LinearLayer score_head;  // N_q -> 1
  motion::MotionWeights motion;
  std::uint64_t revision = 0;  // bumped on every in-place update

  int token_dim() const { return static_cast<int>(token_proj.in_dim()); }
  int content_dim() const { return static_cast<int>(token_proj.out_dim()); }
  int n_q() const { return static_cast<int>(score_head.in_dim()); }
  void validate() const;

  static ScorerParams init(int token_dim, int c_q, int n_q, Rng& rng);
  /// Same shapes and motion configuration, every tensor zero.
  static ScorerParams zeros_like(const ScorerParams& p);
};

/// Visits every learned tensor in a fixed order. The callback receives the
/// tensor name, its storage, and its (rows, cols) shape.
template <typename Params, typename F>
void for_each_tensor(Params& p, F&& fn) {
  auto linear = [&](std::string_view name, auto& layer) {
    fn(std::string(name) + ".weight",
       std::span(layer.weight.data(), static_cast<std::size_t>(layer.weight.size())), layer.weight.rows(),
       layer.weight.cols());
    fn(std::string(name) + ".bias", std::span(layer.bias.data(), static_cast<std::size_t>(layer.bias.size())),
       layer.bias.size(), Eigen::Index{1});
  };
  linear("token_proj", p.token_proj);
  linear("score_head", p.score_head);
  linear("motion.w_gamma", p.motion.w_gamma);
  linear("motion.w_beta", p.motion.w_beta);
  linear("motion.ref_mlp.fc1", p.motion.ref_mlp.fc1);
  linear("motion.ref_mlp.fc2", p.motion.ref_mlp.fc2);
}

std::size_t parameter_count(const ScorerParams& p);

/// S = sigmoid(score_head(T~ Q~^T / sqrt(C_q))) with T~ = token_proj(T).
ImportanceScore compute_importance(const Matrix& tokens, const motion::AlignedQueries& queries,
                                   const ScorerParams& params);

class StaleCacheError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Everything the reverse pass needs from one scorer forward.
struct ScorerTrace {
  const ScorerParams* params = nullptr;
  std::uint64_t revision = 0;
  Matrix tokens;
  RefpointMatrix aligned_ref;
  motion::MotionContext motion;
  motion::ConditionalLnTrace ln;
  motion::AlignedQueries queries;
  Matrix projected;  // T~
  Matrix attention;  // A
  std::vector<double> scores;
};

/// Forward through motion encoding and scoring with `sampled` already
/// reduced to params.n_q() queries.
ScorerTrace scorer_forward(const Matrix& tokens, const HistoryQuerySet& sampled, const ScorerParams& params);

/// Samples the top params.n_q() queries, then scores.
ImportanceScore score_tokens(const Matrix& tokens, const HistoryQuerySet& queries, const ScorerParams& params);

/// Gradients of sum_i grad_s[i] * S_i with respect to every scorer tensor.
/// Throws StaleCacheError if `params` is not the object (and revision) the
/// trace was recorded with.
ScorerParams scorer_backward(const ScorerTrace& trace, const ScorerParams& params,
                             std::span<const double> grad_s);

struct FocalLoss {
  double loss = 0.0;
  std::vector<double> grad;  // dL/ds
};

inline constexpr double kFocalAlpha = 2.0;
inline constexpr double kFocalBeta = 4.0;
inline constexpr double kFocalClamp = 1e-6;

/// Penalty-reduced focal loss over a Gaussian heatmap. Positives are cells
/// whose target is exactly 1; scores are clamped to [1e-6, 1 - 1e-6].
FocalLoss gaussian_focal_loss(std::span<const double> scores, std::span<const double> target,
                              double alpha = kFocalAlpha, double beta = kFocalBeta);

}  // namespace toc3d::mqts
