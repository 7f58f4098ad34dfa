#pragma once

// Dynamic router: salient tokens plus one bridge token take the regular
// (transformer) path, redundant tokens take the identity path and receive
// the bridge token's update, then everything is scattered back in place.

#include "toc3d/encoder.hpp"
#include "toc3d/mqts.hpp"

#include <optional>
#include <span>
#include <vector>

namespace toc3d::router {

template <typename T>
using RowVectorT = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <typename T>
struct BridgeToken {
  RowVectorT<T> value;
  bool uniform_fallback = false;  // scores summed to zero; plain mean used
};

/// Score-weighted mean of the redundant tokens. Requires at least one row.
template <typename T>
BridgeToken<T> make_bridge(const MatrixT<T>& redundant, std::span<const double> scores);

template <typename T>
struct RegularPathOutput {
  MatrixT<T> salient;
  std::optional<RowVectorT<T>> bridge;
};

/// Runs layers [begin, end) of `weights` over [salient; bridge]. The bridge
/// (when present) rides as the last row and is split back off afterwards.
template <typename T>
RegularPathOutput<T> regular_path(const MatrixT<T>& salient, const std::optional<RowVectorT<T>>& bridge,
                                  std::span<const TokenCoord> coords, const EncoderWeights<T>& weights, int begin,
                                  int end);

/// Adds `bridge_update` to every redundant row.
template <typename T>
MatrixT<T> free_path_update(const MatrixT<T>& redundant, const RowVectorT<T>& bridge_update);

/// Scatters rows back to their original indices. Throws if the partition
/// does not cover every index exactly once or if row counts disagree.
template <typename T>
MatrixT<T> rearrange(const mqts::TokenPartition& partition, const MatrixT<T>& salient, const MatrixT<T>& redundant);

/// Same scatter for per-token labels (used to track provenance).
std::vector<int> rearrange_labels(const mqts::TokenPartition& partition, std::span<const int> salient,
                                  std::span<const int> redundant);

struct StageRecord {
  int layer = 0;
  double rho = 1.0;
  mqts::TokenPartition partition;
  std::vector<double> scores;
  int regular_width = 0;  // rows through the regular path, bridge included
};

struct ForwardStats {
  int importance_calls = 0;
  long long regular_token_layers = 0;  // sum over layers of rows processed by blocks
  int bridge_fallbacks = 0;
  std::vector<int> segment_widths;     // rows through blocks, per planned segment
};

template <typename T>
struct ForwardResult {
  MatrixT<T> tokens;          // N x C in original order
  std::vector<int> origin;    // origin[i] = input index that row i descends from
  std::vector<StageRecord> stages;
  ForwardStats stats;
};

/// Full compressed backbone. At each update layer the current features are
/// scored against the motion-aligned history queries, split by the stage's
/// keeping ratio, routed, and rearranged at the end of the segment.
template <typename T>
ForwardResult<T> forward_backbone(const MatrixT<T>& tokens, const TokenLattice& lattice,
                                  const HistoryQuerySet& queries, const mqts::CompressionSchedule& schedule,
                                  const mqts::ScorerParams& scorer, const EncoderWeights<T>& weights);

}  // namespace toc3d::router
