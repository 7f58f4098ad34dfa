#include "toc3d/mqts.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace toc3d::mqts {

HistoryQuerySet sample_history_queries(const HistoryQuerySet& queries, int n_q) {
  if (n_q < 1) throw std::invalid_argument("sample_history_queries: n_q must be >= 1");
  std::vector<int> order(queries.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return queries.confidences[a] > queries.confidences[b];
  });
  if (static_cast<int>(order.size()) > n_q) order.resize(n_q);
  return queries.select(order);
}

int salient_count(int n, double rho) {
  return std::max(1, static_cast<int>(std::lround(rho * n)));
}

TokenPartition split_tokens(std::span<const double> scores, double rho) {
  if (!(rho > 0.0) || rho > 1.0) {
    throw std::invalid_argument("split_tokens: keeping ratio " + std::to_string(rho) + " outside (0, 1]");
  }
  const int n = static_cast<int>(scores.size());
  if (n == 0) throw std::invalid_argument("split_tokens: no tokens");
  for (double s : scores) {
    if (std::isnan(s)) throw std::invalid_argument("split_tokens: NaN score");
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores[a] > scores[b]; });
  const int n_s = std::min(n, salient_count(n, rho));

  TokenPartition part;
  part.rho = rho;
  part.salient.assign(order.begin(), order.begin() + n_s);
  part.redundant.assign(order.begin() + n_s, order.end());
  std::sort(part.salient.begin(), part.salient.end());
  std::sort(part.redundant.begin(), part.redundant.end());
  return part;
}

void CompressionSchedule::validate(int total_layers) const {
  if (update_layers.size() != ratios.size()) {
    throw std::invalid_argument("schedule: " + std::to_string(update_layers.size()) + " update layers but " +
                                std::to_string(ratios.size()) + " ratios");
  }
  for (std::size_t i = 0; i < update_layers.size(); ++i) {
    const int layer = update_layers[i];
    if (layer < 0 || layer >= total_layers) {
      throw std::invalid_argument("schedule: update layer " + std::to_string(layer) + " outside [0, " +
                                  std::to_string(total_layers) + ")");
    }
    if (i > 0 && layer <= update_layers[i - 1]) {
      throw std::invalid_argument("schedule: update layers must be strictly increasing");
    }
    if (!(ratios[i] > 0.0) || ratios[i] > 1.0) {
      throw std::invalid_argument("schedule: keeping ratio " + std::to_string(ratios[i]) + " outside (0, 1]");
    }
  }
}

CompressionSchedule CompressionSchedule::at_quarters(int total_layers, double r0, double r1, double r2) {
  return {{total_layers / 4, total_layers / 2, 3 * total_layers / 4}, {r0, r1, r2}};
}

std::vector<SegmentSpec> plan_updates(const CompressionSchedule& schedule, int total_layers) {
  if (total_layers <= 0) throw std::invalid_argument("plan_updates: no layers");
  schedule.validate(total_layers);
  std::vector<SegmentSpec> plan;
  int cursor = 0;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const int layer = schedule.update_layers[i];
    if (layer > cursor) plan.push_back({cursor, layer, 1.0, false});
    const int end = i + 1 < schedule.size() ? schedule.update_layers[i + 1] : total_layers;
    plan.push_back({layer, end, schedule.ratios[i], true});
    cursor = end;
  }
  if (cursor < total_layers) plan.push_back({cursor, total_layers, 1.0, false});
  return plan;
}

FocalLoss gaussian_focal_loss(std::span<const double> scores, std::span<const double> target,
                              double alpha, double beta) {
  if (scores.size() != target.size()) {
    throw ShapeError("gaussian_focal_loss: " + std::to_string(scores.size()) + " scores vs " +
                     std::to_string(target.size()) + " targets");
  }
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (double y : target) n_pos += (y == 1.0);
  const double norm = 1.0 / static_cast<double>(std::max<std::size_t>(1, n_pos));

  FocalLoss out;
  out.grad.assign(n, 0.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double raw = scores[i];
    const bool clamped = raw < kFocalClamp || raw > 1.0 - kFocalClamp;
    const double s = std::clamp(raw, kFocalClamp, 1.0 - kFocalClamp);
    const double y = target[i];
    double term = 0.0;
    double dterm = 0.0;
    if (y == 1.0) {
      const double one_minus = 1.0 - s;
      term = std::pow(one_minus, alpha) * std::log(s);
      dterm = -alpha * std::pow(one_minus, alpha - 1.0) * std::log(s) + std::pow(one_minus, alpha) / s;
    } else {
      const double weight = std::pow(1.0 - y, beta);
      term = weight * std::pow(s, alpha) * std::log(1.0 - s);
      dterm = weight * (alpha * std::pow(s, alpha - 1.0) * std::log(1.0 - s) - std::pow(s, alpha) / (1.0 - s));
    }
    acc += term;
    out.grad[i] = clamped ? 0.0 : -norm * dterm;
  }
  out.loss = -norm * acc;
  return out;
}

}  // namespace toc3d::mqts
