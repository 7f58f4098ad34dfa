#include "toc3d/mqts.hpp"

#include <cmath>
#include <string>

namespace toc3d::mqts {

namespace {

// Reverse pass of affine-free row-wise layer norm given its input and output.
Matrix layer_norm_backward(const Matrix& x, const Matrix& y, const Matrix& gy, double eps) {
  Matrix gx(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().sum() / n;
    const double inv_std = 1.0 / std::sqrt(var + eps);
    const double mean_g = gy.row(r).mean();
    const double mean_gy = gy.row(r).dot(y.row(r)) / n;
    gx.row(r) = inv_std * (gy.row(r).array() - mean_g - y.row(r).array() * mean_gy).matrix();
  }
  return gx;
}

void accumulate_linear(LinearLayer& grad, const Matrix& grad_out, const Matrix& input) {
  grad.weight.noalias() += grad_out.transpose() * input;
  grad.bias += grad_out.colwise().sum().transpose();
}

void check_scorer_inputs(const Matrix& tokens, Eigen::Index n_queries, const ScorerParams& params) {
  if (tokens.cols() != params.token_dim()) {
    throw ShapeError("scorer: tokens have width " + std::to_string(tokens.cols()) + ", token_proj expects " +
                     std::to_string(params.token_dim()));
  }
  if (n_queries != params.n_q()) {
    throw ShapeError("scorer: " + std::to_string(n_queries) + " queries but score head expects N_q = " +
                     std::to_string(params.n_q()));
  }
}

}  // namespace

void ScorerParams::validate() const {
  token_proj.validate();
  score_head.validate();
  motion.w_gamma.validate();
  motion.w_beta.validate();
  motion.ref_mlp.fc1.validate();
  motion.ref_mlp.fc2.validate();
  const int c_q = content_dim();
  if (score_head.out_dim() != 1) throw ShapeError("scorer: score head must have one output");
  if (motion.content_dim() != c_q || motion.w_beta.out_dim() != c_q || motion.ref_mlp.fc2.out_dim() != c_q ||
      motion.ref_mlp.fc1.in_dim() != 4) {
    throw ShapeError("scorer: motion weights inconsistent with C_q = " + std::to_string(c_q));
  }
}

ScorerParams ScorerParams::init(int token_dim, int c_q, int n_q, Rng& rng) {
  ScorerParams p;
  p.token_proj = init_linear(c_q, token_dim, rng);
  p.score_head = init_linear(1, n_q, rng);
  p.motion = motion::MotionWeights::init(c_q, rng);
  return p;
}

ScorerParams ScorerParams::zeros_like(const ScorerParams& p) {
  ScorerParams z = p;
  z.revision = 0;
  for_each_tensor(z, [](const std::string&, std::span<double> data, Eigen::Index, Eigen::Index) {
    std::fill(data.begin(), data.end(), 0.0);
  });
  return z;
}

std::size_t parameter_count(const ScorerParams& p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](const std::string&, std::span<const double> data, Eigen::Index, Eigen::Index) {
    n += data.size();
  });
  return n;
}

ImportanceScore compute_importance(const Matrix& tokens, const motion::AlignedQueries& queries,
                                   const ScorerParams& params) {
  check_scorer_inputs(tokens, queries.fused.rows(), params);
  if (queries.fused.cols() != params.content_dim()) {
    throw ShapeError("compute_importance: query width " + std::to_string(queries.fused.cols()) +
                     " != C_q " + std::to_string(params.content_dim()));
  }
  const Matrix projected = params.token_proj.forward(tokens);
  ImportanceScore out;
  out.attention.noalias() = projected * queries.fused.transpose();
  out.attention /= std::sqrt(static_cast<double>(params.content_dim()));
  const Matrix logits = params.score_head.forward(out.attention);
  out.scores.resize(tokens.rows());
  for (Eigen::Index i = 0; i < tokens.rows(); ++i) out.scores[i] = sigmoid(logits(i, 0));
  return out;
}

ScorerTrace scorer_forward(const Matrix& tokens, const HistoryQuerySet& sampled, const ScorerParams& params) {
  check_scorer_inputs(tokens, sampled.size(), params);
  ScorerTrace t;
  t.params = &params;
  t.revision = params.revision;
  t.tokens = tokens;
  t.queries = motion::prepare_queries(sampled, params.motion, &t.motion, &t.ln, &t.aligned_ref);
  t.projected = params.token_proj.forward(tokens);
  t.attention.noalias() = t.projected * t.queries.fused.transpose();
  t.attention /= std::sqrt(static_cast<double>(params.content_dim()));
  const Matrix logits = params.score_head.forward(t.attention);
  t.scores.resize(tokens.rows());
  for (Eigen::Index i = 0; i < tokens.rows(); ++i) t.scores[i] = sigmoid(logits(i, 0));
  return t;
}

ImportanceScore score_tokens(const Matrix& tokens, const HistoryQuerySet& queries, const ScorerParams& params) {
  const HistoryQuerySet sampled = sample_history_queries(queries, params.n_q());
  const motion::AlignedQueries aligned = motion::prepare_queries(sampled, params.motion);
  return compute_importance(tokens, aligned, params);
}

ScorerParams scorer_backward(const ScorerTrace& trace, const ScorerParams& params,
                             std::span<const double> grad_s) {
  if (trace.params != &params || trace.revision != params.revision) {
    throw StaleCacheError("scorer_backward: trace was recorded with different or since-updated parameters");
  }
  const Eigen::Index n = trace.tokens.rows();
  if (static_cast<Eigen::Index>(grad_s.size()) != n) {
    throw ShapeError("scorer_backward: " + std::to_string(grad_s.size()) + " score gradients for " +
                     std::to_string(n) + " tokens");
  }
  const double inv_sqrt_cq = 1.0 / std::sqrt(static_cast<double>(params.content_dim()));
  ScorerParams g = ScorerParams::zeros_like(params);

  Matrix grad_logit(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = trace.scores[i];
    grad_logit(i, 0) = grad_s[i] * s * (1.0 - s);
  }
  accumulate_linear(g.score_head, grad_logit, trace.attention);

  const Matrix grad_attn = grad_logit * params.score_head.weight;  // N x N_q
  const Matrix grad_proj = inv_sqrt_cq * (grad_attn * trace.queries.fused);
  const Matrix grad_fused = inv_sqrt_cq * (grad_attn.transpose() * trace.projected);
  accumulate_linear(g.token_proj, grad_proj, trace.tokens);

  // fused = gamma * (ref_normed + content_normed) + 2 beta
  const Matrix normed_sum = trace.ln.ref_normed + trace.ln.content_normed;
  const Matrix grad_gamma = grad_fused.cwiseProduct(normed_sum);
  const Matrix grad_beta = 2.0 * grad_fused;
  accumulate_linear(g.motion.w_gamma, grad_gamma, trace.motion.v_m);
  accumulate_linear(g.motion.w_beta, grad_beta, trace.motion.v_m);

  const Matrix grad_ref_normed = grad_fused.cwiseProduct(trace.motion.gamma);
  const Matrix grad_mlp_out =
      layer_norm_backward(trace.ln.mlp_out, trace.ln.ref_normed, grad_ref_normed, params.motion.ln_eps);
  accumulate_linear(g.motion.ref_mlp.fc2, grad_mlp_out, trace.ln.mlp_hidden);
  Matrix grad_hidden = grad_mlp_out * params.motion.ref_mlp.fc2.weight;
  grad_hidden = grad_hidden.cwiseProduct(trace.ln.mlp_hidden_pre.unaryExpr([](double v) { return gelu_grad(v); }));
  accumulate_linear(g.motion.ref_mlp.fc1, grad_hidden, Matrix(trace.aligned_ref));
  return g;
}

}  // namespace toc3d::mqts
