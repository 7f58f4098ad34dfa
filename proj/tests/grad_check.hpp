#pragma once

// Finite-difference checks for the focal loss and the scorer reverse pass.

#include "test_support.hpp"

#include "toc3d/mqts.hpp"

#include <cstdio>
#include <string>
#include <vector>

namespace toc3d::test {

inline constexpr double kGradStep = 1e-5;
inline constexpr double kGradRelTol = 1e-4;
inline constexpr double kGradFloor = 1e-5;

inline std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct GradCheck {
  double worst = 0.0;
  std::string worst_at;
  long checked = 0;

  void record(double analytic, double numeric, const std::string& where) {
    const double e = rel_err(analytic, numeric, kGradFloor);
    ++checked;
    if (e > worst) {
      worst = e;
      worst_at = where + " analytic=" + fmt_g(analytic) + " numeric=" + fmt_g(numeric);
    }
  }
  bool ok() const { return worst <= kGradRelTol; }
};

/// Heatmap-like target with at least one exact positive.
inline std::vector<double> random_target(Rng& rng, int n) {
  std::vector<double> y(n);
  for (double& v : y) v = rng.uniform() < 0.3 ? rng.uniform(0.0, 0.99) : 0.0;
  y[rng.uniform_int(0, n - 1)] = 1.0;
  return y;
}

inline void check_focal(Rng& rng, int n, GradCheck& out) {
  std::vector<double> s(n);
  for (double& v : s) v = rng.uniform(0.02, 0.98);
  const std::vector<double> y = random_target(rng, n);
  const mqts::FocalLoss fl = mqts::gaussian_focal_loss(s, y);
  for (int i = 0; i < n; ++i) {
    const double keep = s[i];
    s[i] = keep + kGradStep;
    const double up = mqts::gaussian_focal_loss(s, y).loss;
    s[i] = keep - kGradStep;
    const double down = mqts::gaussian_focal_loss(s, y).loss;
    s[i] = keep;
    out.record(fl.grad[i], (up - down) / (2 * kGradStep), "focal[" + std::to_string(i) + "]");
  }
}

struct ScorerInstance {
  Matrix tokens;
  HistoryQuerySet queries;  // already n_q rows
  std::vector<double> target;
  mqts::ScorerParams params;
};

inline ScorerInstance random_scorer_instance(Rng& rng, int n, int c, int c_q, int n_q, int pe_bands) {
  ScorerInstance inst;
  inst.tokens = random_matrix(rng, n, c);
  Rng init_rng(rng.next_u64());
  inst.params = mqts::ScorerParams::init(c, c_q, n_q, init_rng);
  if (pe_bands != inst.params.motion.pe.bands) {
    inst.params.motion = motion::MotionWeights::init(c_q, init_rng, {pe_bands, true});
  }
  // Fan-in scaled so scores stay away from sigmoid saturation.
  mqts::for_each_tensor(inst.params, [&](const std::string&, std::span<double> data, Eigen::Index, Eigen::Index cols) {
    const double sd = 0.5 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(cols, 1)));
    for (double& v : data) v = rng.normal(0.0, sd);
  });
  HistoryQuerySet& q = inst.queries;
  q.contents = random_matrix(rng, n_q, c_q);
  q.refpoints.resize(n_q, 4);
  q.velocities = random_matrix(rng, n_q, 3, 3.0);
  for (int i = 0; i < n_q; ++i) {
    q.refpoints.row(i) << rng.normal(0, 2), rng.normal(0, 2), rng.normal(), 1.0;
    q.confidences.push_back(rng.uniform());
    q.dt.push_back(rng.uniform(0.2, 0.8));
    q.object_ids.push_back(-1);
  }
  const double a = rng.uniform(-0.5, 0.5);
  q.ego_transform = Mat4::Identity();
  q.ego_transform(0, 0) = q.ego_transform(1, 1) = std::cos(a);
  q.ego_transform(0, 1) = -std::sin(a);
  q.ego_transform(1, 0) = std::sin(a);
  q.ego_transform(0, 3) = rng.normal();
  inst.target = random_target(rng, n);
  return inst;
}

inline double scorer_loss(const ScorerInstance& inst, const mqts::ScorerParams& p) {
  const mqts::ScorerTrace t = mqts::scorer_forward(inst.tokens, inst.queries, p);
  return mqts::gaussian_focal_loss(t.scores, inst.target).loss;
}

/// Focal loss composed with the scorer: every parameter entry (or a random
/// subset of at most `per_tensor` entries per tensor when positive).
inline void check_scorer(Rng& rng, ScorerInstance& inst, GradCheck& out, int per_tensor = 0) {
  const mqts::ScorerTrace trace = mqts::scorer_forward(inst.tokens, inst.queries, inst.params);
  const mqts::FocalLoss fl = mqts::gaussian_focal_loss(trace.scores, inst.target);
  mqts::ScorerParams grads = mqts::scorer_backward(trace, inst.params, fl.grad);

  std::vector<std::span<double>> grad_tensors;
  mqts::for_each_tensor(grads, [&](const std::string&, std::span<double> d, Eigen::Index, Eigen::Index) {
    grad_tensors.push_back(d);
  });
  mqts::ScorerParams probe = inst.params;
  std::size_t t = 0;
  mqts::for_each_tensor(probe, [&](const std::string& name, std::span<double> d, Eigen::Index, Eigen::Index) {
    const std::span<double> g = grad_tensors[t++];
    std::vector<std::size_t> picks;
    if (per_tensor <= 0 || d.size() <= static_cast<std::size_t>(per_tensor)) {
      for (std::size_t i = 0; i < d.size(); ++i) picks.push_back(i);
    } else {
      for (int k = 0; k < per_tensor; ++k) picks.push_back(rng.uniform_int(0, static_cast<int>(d.size()) - 1));
    }
    for (std::size_t i : picks) {
      const double keep = d[i];
      d[i] = keep + kGradStep;
      const double up = scorer_loss(inst, probe);
      d[i] = keep - kGradStep;
      const double down = scorer_loss(inst, probe);
      d[i] = keep;
      out.record(g[i], (up - down) / (2 * kGradStep), name + "[" + std::to_string(i) + "]");
    }
  });
}

}  // namespace toc3d::test
