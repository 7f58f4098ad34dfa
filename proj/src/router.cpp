#include "toc3d/router.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

namespace toc3d::router {

template <typename T>
BridgeToken<T> make_bridge(const MatrixT<T>& redundant, std::span<const double> scores) {
  if (redundant.rows() == 0) throw std::invalid_argument("make_bridge: no redundant tokens");
  if (static_cast<Eigen::Index>(scores.size()) != redundant.rows()) {
    throw ShapeError("make_bridge: " + std::to_string(scores.size()) + " scores for " +
                     std::to_string(redundant.rows()) + " tokens");
  }
  BridgeToken<T> out;
  double total = 0.0;
  for (double s : scores) total += s;
  if (total > 0.0) {
    RowVectorT<double> acc = RowVectorT<double>::Zero(redundant.cols());
    for (Eigen::Index i = 0; i < redundant.rows(); ++i) {
      acc += scores[i] * redundant.row(i).template cast<double>();
    }
    out.value = (acc / total).template cast<T>();
  } else {
    out.value = redundant.colwise().mean();
    out.uniform_fallback = true;
  }
  return out;
}

template <typename T>
RegularPathOutput<T> regular_path(const MatrixT<T>& salient, const std::optional<RowVectorT<T>>& bridge,
                                  std::span<const TokenCoord> coords, const EncoderWeights<T>& weights, int begin,
                                  int end) {
  const EncoderConfig& cfg = weights.config;
  if (begin < 0 || end > cfg.layers || begin > end) throw std::invalid_argument("regular_path: bad layer range");
  const bool has_bridge = bridge.has_value();
  MatrixT<T> x(salient.rows() + (has_bridge ? 1 : 0), salient.cols());
  x.topRows(salient.rows()) = salient;
  if (has_bridge) x.row(salient.rows()) = *bridge;
  for (int l = begin; l < end; ++l) {
    x = encoder_block<T>(x, weights.blocks[l], cfg.kind(l), coords, has_bridge, cfg.window_size, cfg.heads);
  }
  RegularPathOutput<T> out;
  out.salient = x.topRows(salient.rows());
  if (has_bridge) out.bridge = x.row(salient.rows());
  return out;
}

template <typename T>
MatrixT<T> free_path_update(const MatrixT<T>& redundant, const RowVectorT<T>& bridge_update) {
  if (redundant.rows() > 0 && bridge_update.cols() != redundant.cols()) {
    throw ShapeError("free_path_update: bridge width " + std::to_string(bridge_update.cols()) + " vs tokens " +
                     std::to_string(redundant.cols()));
  }
  MatrixT<T> out = redundant;
  out.rowwise() += bridge_update;
  return out;
}

namespace {

void check_partition(const mqts::TokenPartition& p, std::size_t n_salient, std::size_t n_redundant) {
  if (p.salient.size() != n_salient || p.redundant.size() != n_redundant) {
    throw ShapeError("rearrange: partition sizes " + std::to_string(p.salient.size()) + "/" +
                     std::to_string(p.redundant.size()) + " vs rows " + std::to_string(n_salient) + "/" +
                     std::to_string(n_redundant));
  }
  const std::size_t n = n_salient + n_redundant;
  std::vector<char> seen(n, 0);
  auto mark = [&](int idx) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= n || seen[idx]) {
      throw std::invalid_argument("rearrange: index " + std::to_string(idx) + " collides or is out of range");
    }
    seen[idx] = 1;
  };
  for (int i : p.salient) mark(i);
  for (int i : p.redundant) mark(i);
}

}  // namespace

template <typename T>
MatrixT<T> rearrange(const mqts::TokenPartition& partition, const MatrixT<T>& salient, const MatrixT<T>& redundant) {
  check_partition(partition, salient.rows(), redundant.rows());
  const Eigen::Index cols = salient.rows() > 0 ? salient.cols() : redundant.cols();
  if (redundant.rows() > 0 && salient.rows() > 0 && redundant.cols() != salient.cols()) {
    throw ShapeError("rearrange: salient and redundant widths differ");
  }
  MatrixT<T> out(salient.rows() + redundant.rows(), cols);
  for (std::size_t i = 0; i < partition.salient.size(); ++i) out.row(partition.salient[i]) = salient.row(i);
  for (std::size_t i = 0; i < partition.redundant.size(); ++i) out.row(partition.redundant[i]) = redundant.row(i);
  return out;
}

std::vector<int> rearrange_labels(const mqts::TokenPartition& partition, std::span<const int> salient,
                                  std::span<const int> redundant) {
  check_partition(partition, salient.size(), redundant.size());
  std::vector<int> out(salient.size() + redundant.size());
  for (std::size_t i = 0; i < salient.size(); ++i) out[partition.salient[i]] = salient[i];
  for (std::size_t i = 0; i < redundant.size(); ++i) out[partition.redundant[i]] = redundant[i];
  return out;
}

template <typename T>
ForwardResult<T> forward_backbone(const MatrixT<T>& tokens, const TokenLattice& lattice,
                                  const HistoryQuerySet& queries, const mqts::CompressionSchedule& schedule,
                                  const mqts::ScorerParams& scorer, const EncoderWeights<T>& weights) {
  const EncoderConfig& cfg = weights.config;
  if (tokens.rows() != lattice.size()) throw ShapeError("forward_backbone: token count does not match lattice");
  if (tokens.cols() != cfg.dim) throw ShapeError("forward_backbone: token width does not match encoder");
  const auto plan = mqts::plan_updates(schedule, cfg.layers);
  const auto coords = lattice.coords();
  const int n = lattice.size();

  ForwardResult<T> result;
  result.tokens = tokens;
  result.origin.resize(n);
  std::iota(result.origin.begin(), result.origin.end(), 0);

  std::optional<motion::AlignedQueries> aligned;
  if (!schedule.empty()) {
    aligned = motion::prepare_queries(mqts::sample_history_queries(queries, scorer.n_q()), scorer.motion);
  }

  for (const mqts::SegmentSpec& seg : plan) {
    MatrixT<T>& x = result.tokens;
    if (!seg.update_scores) {
      for (int l = seg.begin; l < seg.end; ++l) {
        x = encoder_block<T>(x, weights.blocks[l], cfg.kind(l), coords, false, cfg.window_size, cfg.heads);
      }
      result.stats.segment_widths.push_back(n);
      result.stats.regular_token_layers += static_cast<long long>(n) * (seg.end - seg.begin);
      continue;
    }

    mqts::ImportanceScore score;
    if constexpr (std::is_same_v<T, double>) {
      score = mqts::compute_importance(x, *aligned, scorer);
    } else {
      score = mqts::compute_importance(x.template cast<double>(), *aligned, scorer);
    }
    score.computed_at_layer = seg.begin;
    ++result.stats.importance_calls;
    mqts::TokenPartition part = mqts::split_tokens(score.scores, seg.rho);

    const auto n_s = static_cast<Eigen::Index>(part.salient.size());
    const auto n_r = static_cast<Eigen::Index>(part.redundant.size());
    MatrixT<T> salient(n_s, x.cols());
    MatrixT<T> redundant(n_r, x.cols());
    std::vector<TokenCoord> salient_coords(n_s);
    std::vector<int> salient_origin(n_s), redundant_origin(n_r);
    std::vector<double> redundant_scores(n_r);
    for (Eigen::Index i = 0; i < n_s; ++i) {
      const int idx = part.salient[i];
      salient.row(i) = x.row(idx);
      salient_coords[i] = coords[idx];
      salient_origin[i] = result.origin[idx];
    }
    for (Eigen::Index i = 0; i < n_r; ++i) {
      const int idx = part.redundant[i];
      redundant.row(i) = x.row(idx);
      redundant_scores[i] = score.scores[idx];
      redundant_origin[i] = result.origin[idx];
    }

    std::optional<RowVectorT<T>> bridge;
    if (n_r > 0) {
      BridgeToken<T> b = make_bridge<T>(redundant, redundant_scores);
      result.stats.bridge_fallbacks += b.uniform_fallback;
      bridge = std::move(b.value);
    }
    RegularPathOutput<T> reg = regular_path<T>(salient, bridge, salient_coords, weights, seg.begin, seg.end);
    if (bridge) redundant = free_path_update<T>(redundant, *reg.bridge - *bridge);

    const int width = static_cast<int>(n_s + (bridge ? 1 : 0));
    result.stats.segment_widths.push_back(width);
    result.stats.regular_token_layers += static_cast<long long>(width) * (seg.end - seg.begin);
    x = rearrange<T>(part, reg.salient, redundant);
    result.origin = rearrange_labels(part, salient_origin, redundant_origin);
    result.stages.push_back({seg.begin, seg.rho, std::move(part), std::move(score.scores), width});
  }
  return result;
}

#define TOC3D_INSTANTIATE(T)                                                                                       \
  template BridgeToken<T> make_bridge<T>(const MatrixT<T>&, std::span<const double>);                            \
  template RegularPathOutput<T> regular_path<T>(const MatrixT<T>&, const std::optional<RowVectorT<T>>&,          \
                                                std::span<const TokenCoord>, const EncoderWeights<T>&, int, int); \
  template MatrixT<T> free_path_update<T>(const MatrixT<T>&, const RowVectorT<T>&);                              \
  template MatrixT<T> rearrange<T>(const mqts::TokenPartition&, const MatrixT<T>&, const MatrixT<T>&);           \
  template ForwardResult<T> forward_backbone<T>(const MatrixT<T>&, const TokenLattice&, const HistoryQuerySet&,  \
                                                const mqts::CompressionSchedule&, const mqts::ScorerParams&,     \
                                                const EncoderWeights<T>&);

TOC3D_INSTANTIATE(double)
TOC3D_INSTANTIATE(float)

#undef TOC3D_INSTANTIATE

}  // namespace toc3d::router
