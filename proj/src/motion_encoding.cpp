#include "toc3d/motion_encoding.hpp"

#include <cmath>
#include <stdexcept>

namespace toc3d::motion {

EgoTransform::EgoTransform(const Mat4& m) : matrix_(m) {
  if (!is_rigid(m, 1e-9)) throw std::invalid_argument("ego transform is not a rigid SE(3) matrix");
}

Vector positional_encode(const Vector& x, const PEConfig& cfg) {
  const Eigen::Index d = x.size();
  Vector out(cfg.output_dim(static_cast<int>(d)));
  Eigen::Index o = 0;
  if (cfg.include_input) {
    out.segment(0, d) = x;
    o = d;
  }
  double freq = M_PI;
  for (int k = 0; k < cfg.bands; ++k, freq *= 2.0) {
    for (Eigen::Index i = 0; i < d; ++i) out[o + i] = std::sin(freq * x[i]);
    o += d;
    for (Eigen::Index i = 0; i < d; ++i) out[o + i] = std::cos(freq * x[i]);
    o += d;
  }
  return out;
}

RefpointMatrix align_refpoints(const RefpointMatrix& refpoints, const EgoTransform& e) {
  for (Eigen::Index i = 0; i < refpoints.rows(); ++i) {
    if (refpoints(i, 3) != 1.0) {
      throw std::invalid_argument("align_refpoints: row " + std::to_string(i) + " is not homogeneous");
    }
  }
  RefpointMatrix out = refpoints * e.matrix().transpose();
  out.col(3).setOnes();
  return out;
}

Matrix motion_vectors(const HistoryQuerySet& queries, const MotionNormalization& norm) {
  const int n = queries.size();
  Matrix m(n, kMotionRawDim);
  Eigen::Matrix<double, 1, 16> ego;
  for (int r = 0; r < 4; ++r) ego.segment<4>(4 * r) = queries.ego_transform.row(r);
  for (int i = 0; i < n; ++i) {
    m.block<1, 3>(i, 0) = queries.velocities.row(i) / norm.v_max;
    m(i, 3) = queries.dt[i] / norm.horizon;
    m.block<1, 16>(i, 4) = ego;
  }
  return m;
}

MotionContext encode_motion(const HistoryQuerySet& queries, const PEConfig& cfg,
                            const MotionNormalization& norm, const LinearLayer& w_gamma,
                            const LinearLayer& w_beta) {
  const int d_m = cfg.output_dim(kMotionRawDim);
  if (w_gamma.in_dim() != d_m || w_beta.in_dim() != d_m) {
    throw ShapeError("encode_motion: heads expect input " + std::to_string(w_gamma.in_dim()) + "/" +
                     std::to_string(w_beta.in_dim()) + ", encoded motion has " + std::to_string(d_m));
  }
  if (w_gamma.out_dim() != w_beta.out_dim()) throw ShapeError("encode_motion: gamma/beta widths differ");
  const Matrix raw = motion_vectors(queries, norm);
  MotionContext ctx;
  ctx.v_m.resize(raw.rows(), d_m);
  for (Eigen::Index i = 0; i < raw.rows(); ++i) {
    ctx.v_m.row(i) = positional_encode(raw.row(i).transpose(), cfg).transpose();
  }
  ctx.gamma = w_gamma.forward(ctx.v_m);
  ctx.beta = w_beta.forward(ctx.v_m);
  return ctx;
}

Matrix RefpointMlp::forward(const Matrix& x) const {
  Matrix h = fc1.forward(x);
  gelu_inplace(h);
  return fc2.forward(h);
}

RefpointMlp RefpointMlp::init(int c_q, Rng& rng) {
  return {init_linear(c_q, 4, rng), init_linear(c_q, c_q, rng)};
}

AlignedQueries conditional_layernorm(const HistoryQuerySet& queries, const RefpointMatrix& aligned_ref,
                                     const MotionContext& ctx, const RefpointMlp& ref_mlp, double eps,
                                     ConditionalLnTrace* trace) {
  const Eigen::Index n = queries.contents.rows();
  const Eigen::Index c_q = queries.contents.cols();
  if (ref_mlp.fc2.out_dim() != c_q || ctx.gamma.cols() != c_q || ctx.beta.cols() != c_q) {
    throw ShapeError("conditional_layernorm: embedding width mismatch (C_q = " + std::to_string(c_q) + ")");
  }
  if (aligned_ref.rows() != n || ctx.gamma.rows() != n || ctx.beta.rows() != n) {
    throw ShapeError("conditional_layernorm: query count mismatch");
  }
  const Vector none;
  Matrix pre = ref_mlp.fc1.forward(Matrix(aligned_ref));
  Matrix hidden = pre;
  gelu_inplace(hidden);
  Matrix mlp_out = ref_mlp.fc2.forward(hidden);
  Matrix ref_normed = mlp_out;
  layer_norm_rows(ref_normed, none, none, eps);
  Matrix content_normed = queries.contents;
  layer_norm_rows(content_normed, none, none, eps);

  AlignedQueries out;
  out.refpoint_emb = ctx.gamma.cwiseProduct(ref_normed) + ctx.beta;
  out.content_emb = ctx.gamma.cwiseProduct(content_normed) + ctx.beta;
  out.fused = out.refpoint_emb + out.content_emb;
  if (trace) {
    trace->mlp_hidden_pre = std::move(pre);
    trace->mlp_hidden = std::move(hidden);
    trace->mlp_out = std::move(mlp_out);
    trace->ref_normed = std::move(ref_normed);
    trace->content_normed = std::move(content_normed);
  }
  return out;
}

MotionWeights MotionWeights::init(int c_q, Rng& rng, PEConfig pe, MotionNormalization norm) {
  MotionWeights w;
  w.pe = pe;
  w.norm = norm;
  const int d_m = pe.output_dim(kMotionRawDim);
  w.w_gamma = init_linear(c_q, d_m, rng);
  w.w_beta = init_linear(c_q, d_m, rng);
  w.ref_mlp = RefpointMlp::init(c_q, rng);
  return w;
}

AlignedQueries prepare_queries(const HistoryQuerySet& queries, const MotionWeights& weights,
                               MotionContext* ctx_out, ConditionalLnTrace* trace,
                               RefpointMatrix* aligned_out) {
  const RefpointMatrix aligned = align_refpoints(queries.refpoints, EgoTransform(queries.ego_transform));
  MotionContext ctx = encode_motion(queries, weights.pe, weights.norm, weights.w_gamma, weights.w_beta);
  AlignedQueries out = conditional_layernorm(queries, aligned, ctx, weights.ref_mlp, weights.ln_eps, trace);
  if (ctx_out) *ctx_out = std::move(ctx);
  if (aligned_out) *aligned_out = aligned;
  return out;
}

}  // namespace toc3d::motion
