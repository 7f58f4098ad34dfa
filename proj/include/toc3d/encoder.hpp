#pragma once

// Pre-norm ViT encoder blocks with lattice-window or global attention over a
// variable set of tokens, optionally followed by one coordinate-free bridge
// token that joins every attention group.

#include "toc3d/numerics.hpp"
#include "toc3d/types.hpp"

#include <span>
#include <vector>

namespace toc3d::router {

enum class AttentionKind { window, global };

struct EncoderConfig {
  int layers = 12;
  int dim = 256;
  int heads = 8;
  double mlp_ratio = 4.0;
  int window_size = 7;  // tokens per window side
  std::vector<int> global_attn_layers = {2, 5, 8, 11};
  int patch = 16;

  int hidden_dim() const;
  AttentionKind kind(int layer) const;
  void validate() const;

  /// 12 layers, C = 256, 8 heads, 7x7 windows, global every third layer.
  static EncoderConfig desk();
  /// ViT-L: 24 layers, C = 1024, 16 heads, 16x16 windows, global at 5/11/17/23.
  static EncoderConfig vit_large();
};

template <typename T>
struct BlockWeights {
  VectorT<T> ln1_gamma, ln1_beta;
  BasicLinear<T> qkv;   // C -> 3C, rows ordered [q; k; v]
  BasicLinear<T> proj;  // C -> C
  VectorT<T> ln2_gamma, ln2_beta;
  BasicLinear<T> fc1;   // C -> hidden
  BasicLinear<T> fc2;   // hidden -> C

  template <typename U>
  BlockWeights<U> cast() const {
    return {ln1_gamma.template cast<U>(), ln1_beta.template cast<U>(), qkv.template cast<U>(),
            proj.template cast<U>(), ln2_gamma.template cast<U>(), ln2_beta.template cast<U>(),
            fc1.template cast<U>(), fc2.template cast<U>()};
  }
};

template <typename T>
struct EncoderWeights {
  EncoderConfig config;
  std::vector<BlockWeights<T>> blocks;

  template <typename U>
  EncoderWeights<U> cast() const {
    EncoderWeights<U> out{config, {}};
    for (const auto& b : blocks) out.blocks.push_back(b.template cast<U>());
    return out;
  }
};

/// Truncated-normal(0.02) linear weights, zero biases, unit LN scale.
EncoderWeights<double> init_encoder(const EncoderConfig& config, Rng& rng);
/// Attention and MLP weights all zero (LN stays identity-affine).
EncoderWeights<double> zero_encoder(const EncoderConfig& config);

/// One pre-norm block: x + Attn(LN(x)), then + MLP(LN(.)).
/// `coords` describes the first rows of x; when `has_bridge` is set the last
/// row is the bridge token, which attends to every token and is a key/value
/// in every window. Window kind groups tokens by (view, row / ws, col / ws);
/// global kind attends jointly over all tokens.
template <typename T>
MatrixT<T> encoder_block(const MatrixT<T>& x, const BlockWeights<T>& weights, AttentionKind kind,
                         std::span<const TokenCoord> coords, bool has_bridge, int window_size, int heads);

/// All layers over all tokens in lattice order; the reference path.
template <typename T>
MatrixT<T> encode_plain(const MatrixT<T>& tokens, const TokenLattice& lattice, const EncoderWeights<T>& weights);

}  // namespace toc3d::router
