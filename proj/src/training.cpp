#include "toc3d/training.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace toc3d::mqts {

namespace {

double squared_norm(const ScorerParams& g) {
  double acc = 0.0;
  for_each_tensor(g, [&](const std::string&, std::span<const double> d, Eigen::Index, Eigen::Index) {
    for (double v : d) acc += v * v;
  });
  return acc;
}

void axpy(ScorerParams& y, double a, const ScorerParams& x) {
  std::vector<std::span<const double>> src;
  for_each_tensor(x, [&](const std::string&, std::span<const double> d, Eigen::Index, Eigen::Index) {
    src.push_back(d);
  });
  std::size_t k = 0;
  for_each_tensor(y, [&](const std::string&, std::span<double> d, Eigen::Index, Eigen::Index) {
    const auto s = src[k++];
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += a * s[i];
  });
}

void scale(ScorerParams& y, double a) {
  for_each_tensor(y, [&](const std::string&, std::span<double> d, Eigen::Index, Eigen::Index) {
    for (double& v : d) v *= a;
  });
}

}  // namespace

TrainResult train_scorer(std::span<const sim::SimSample> dataset, const ScorerParams& init,
                         const TrainConfig& config) {
  if (dataset.empty()) throw std::invalid_argument("train_scorer: empty dataset");
  if (config.epochs < 1 || config.batch_size < 1) throw std::invalid_argument("train_scorer: bad epoch/batch");
  init.validate();

  std::vector<HistoryQuerySet> sampled;
  sampled.reserve(dataset.size());
  for (const auto& s : dataset) sampled.push_back(sample_history_queries(s.queries, init.n_q()));

  TrainResult result;
  result.params = init;
  ScorerParams& params = result.params;
  ScorerParams velocity = ScorerParams::zeros_like(params);
  Rng rng(config.seed);
  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      ScorerParams grad = ScorerParams::zeros_like(params);
      for (std::size_t b = start; b < stop; ++b) {
        const auto& sample = dataset[order[b]];
        const ScorerTrace trace = scorer_forward(sample.tokens.tokens, sampled[order[b]], params);
        FocalLoss fl = gaussian_focal_loss(trace.scores, sample.target.values, config.alpha, config.beta);
        if (!std::isfinite(fl.loss)) {
          throw TrainingDiverged("train_scorer: loss became " + std::to_string(fl.loss) + " at epoch " +
                                 std::to_string(epoch + 1) + ", sample " + std::to_string(order[b]) +
                                 "; lower lr (currently " + std::to_string(config.lr) + ")");
        }
        epoch_loss += fl.loss;
        for (double& v : fl.grad) v *= config.loss_weight;
        axpy(grad, 1.0, scorer_backward(trace, params, fl.grad));
      }
      scale(grad, 1.0 / static_cast<double>(stop - start));
      if (config.grad_clip > 0.0) {
        const double norm = std::sqrt(squared_norm(grad));
        if (norm > config.grad_clip) scale(grad, config.grad_clip / norm);
      }
      scale(velocity, config.momentum);
      axpy(velocity, 1.0, grad);
      axpy(params, -config.lr, velocity);
      ++params.revision;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(dataset.size()));
  }
  return result;
}

RecallStats partition_recall(const TokenPartition& part, const HeatmapTarget& target, double threshold) {
  RecallStats stats;
  std::vector<char> salient(target.values.size(), 0);
  for (int i : part.salient) salient[i] = 1;
  for (std::size_t i = 0; i < target.values.size(); ++i) {
    if (target.values[i] >= threshold) {
      ++stats.foreground;
      stats.recalled += salient[i];
    }
  }
  return stats;
}

RecallStats foreground_recall(std::span<const sim::SimSample> samples, const ScorerParams& params, double rho,
                              double threshold) {
  RecallStats total;
  for (const auto& s : samples) {
    const ImportanceScore score = score_tokens(s.tokens.tokens, s.queries, params);
    const RecallStats r = partition_recall(split_tokens(score.scores, rho), s.target, threshold);
    total.foreground += r.foreground;
    total.recalled += r.recalled;
  }
  return total;
}

}  // namespace toc3d::mqts
