#pragma once

// Temporal alignment and motion-conditioned normalization of history queries.

#include "toc3d/numerics.hpp"
#include "toc3d/types.hpp"

namespace toc3d::motion {

/// Rigid history->current ego transform. Construction rejects non-rigid input.
class EgoTransform {
 public:
  explicit EgoTransform(const Mat4& m);
  static EgoTransform identity() { return EgoTransform(Mat4::Identity()); }
  const Mat4& matrix() const { return matrix_; }

 private:
  Mat4 matrix_;
};

struct PEConfig {
  int bands = 10;
  bool include_input = true;

  int output_dim(int input_dim) const { return input_dim * (2 * bands + (include_input ? 1 : 0)); }
};

/// Scales applied to the motion vector before encoding so that the
/// arguments of the sinusoids stay O(1).
struct MotionNormalization {
  double v_max = 15.0;   // m/s
  double horizon = 1.0;  // seconds
};

inline constexpr int kMotionRawDim = 3 + 1 + 16;

/// [x?, sin(2^k pi x), cos(2^k pi x) for k in 0..L) per component, band-major.
Vector positional_encode(const Vector& x, const PEConfig& cfg);

RefpointMatrix align_refpoints(const RefpointMatrix& refpoints, const EgoTransform& e);

/// Per query: [v / v_max, dt / horizon, row-major E_h]. N_q x 20.
Matrix motion_vectors(const HistoryQuerySet& queries, const MotionNormalization& norm);

struct MotionContext {
  Matrix v_m;    // N_q x d_m
  Matrix gamma;  // N_q x C_q
  Matrix beta;   // N_q x C_q
};

MotionContext encode_motion(const HistoryQuerySet& queries, const PEConfig& cfg,
                            const MotionNormalization& norm, const LinearLayer& w_gamma,
                            const LinearLayer& w_beta);

/// Two linear layers with a GELU between them: 4 -> C_q -> C_q.
struct RefpointMlp {
  LinearLayer fc1;
  LinearLayer fc2;

  Matrix forward(const Matrix& x) const;
  static RefpointMlp init(int c_q, Rng& rng);
};

struct AlignedQueries {
  Matrix content_emb;   // N_q x C_q
  Matrix refpoint_emb;  // N_q x C_q
  Matrix fused;         // content_emb + refpoint_emb
};

/// Intermediates kept for the scorer's reverse pass.
struct ConditionalLnTrace {
  Matrix mlp_hidden_pre;   // fc1 output before GELU
  Matrix mlp_hidden;       // after GELU
  Matrix mlp_out;          // fc2 output
  Matrix ref_normed;       // LN(mlp_out)
  Matrix content_normed;   // LN(contents)
};

AlignedQueries conditional_layernorm(const HistoryQuerySet& queries, const RefpointMatrix& aligned_ref,
                                     const MotionContext& ctx, const RefpointMlp& ref_mlp,
                                     double eps = kLayerNormEps, ConditionalLnTrace* trace = nullptr);

/// Every learned piece of the motion path, shared with the scorer.
struct MotionWeights {
  PEConfig pe;
  MotionNormalization norm;
  double ln_eps = kLayerNormEps;
  LinearLayer w_gamma;  // d_m -> C_q
  LinearLayer w_beta;   // d_m -> C_q
  RefpointMlp ref_mlp;

  int content_dim() const { return static_cast<int>(w_gamma.out_dim()); }
  static MotionWeights init(int c_q, Rng& rng, PEConfig pe = {}, MotionNormalization norm = {});
};

/// Full query preparation: align, encode motion, conditional layer norm.
AlignedQueries prepare_queries(const HistoryQuerySet& queries, const MotionWeights& weights,
                               MotionContext* ctx_out = nullptr, ConditionalLnTrace* trace = nullptr,
                               RefpointMatrix* aligned_out = nullptr);

}  // namespace toc3d::motion
