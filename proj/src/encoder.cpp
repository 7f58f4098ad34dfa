#include "toc3d/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>

namespace toc3d::router {

int EncoderConfig::hidden_dim() const { return static_cast<int>(std::lround(mlp_ratio * dim)); }

AttentionKind EncoderConfig::kind(int layer) const {
  return std::find(global_attn_layers.begin(), global_attn_layers.end(), layer) != global_attn_layers.end()
             ? AttentionKind::global
             : AttentionKind::window;
}

void EncoderConfig::validate() const {
  if (layers <= 0 || dim <= 0 || heads <= 0) throw std::invalid_argument("encoder config: nonpositive size");
  if (dim % heads != 0) {
    throw std::invalid_argument("encoder config: dim " + std::to_string(dim) + " not divisible by " +
                                std::to_string(heads) + " heads");
  }
  if (window_size <= 0) throw std::invalid_argument("encoder config: window size must be positive");
  if (hidden_dim() <= 0) throw std::invalid_argument("encoder config: MLP ratio gives empty hidden layer");
  for (int l : global_attn_layers) {
    if (l < 0 || l >= layers) throw std::invalid_argument("encoder config: global layer out of range");
  }
}

EncoderConfig EncoderConfig::desk() { return {}; }

EncoderConfig EncoderConfig::vit_large() {
  EncoderConfig c;
  c.layers = 24;
  c.dim = 1024;
  c.heads = 16;
  c.mlp_ratio = 4.0;
  c.window_size = 16;
  c.global_attn_layers = {5, 11, 17, 23};
  c.patch = 16;
  return c;
}

EncoderWeights<double> init_encoder(const EncoderConfig& config, Rng& rng) {
  config.validate();
  EncoderWeights<double> w{config, {}};
  const int c = config.dim;
  const int h = config.hidden_dim();
  for (int l = 0; l < config.layers; ++l) {
    BlockWeights<double> b;
    b.ln1_gamma = Vector::Ones(c);
    b.ln1_beta = Vector::Zero(c);
    b.qkv = init_linear(3 * c, c, rng);
    b.proj = init_linear(c, c, rng);
    b.ln2_gamma = Vector::Ones(c);
    b.ln2_beta = Vector::Zero(c);
    b.fc1 = init_linear(h, c, rng);
    b.fc2 = init_linear(c, h, rng);
    w.blocks.push_back(std::move(b));
  }
  return w;
}

EncoderWeights<double> zero_encoder(const EncoderConfig& config) {
  config.validate();
  EncoderWeights<double> w{config, {}};
  const int c = config.dim;
  const int h = config.hidden_dim();
  for (int l = 0; l < config.layers; ++l) {
    w.blocks.push_back({Vector::Ones(c), Vector::Zero(c), LinearLayer::zeros(3 * c, c), LinearLayer::zeros(c, c),
                        Vector::Ones(c), Vector::Zero(c), LinearLayer::zeros(h, c), LinearLayer::zeros(c, h)});
  }
  return w;
}

namespace {

template <typename T>
void softmax_rows(MatrixT<T>& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    auto row = s.row(r);
    const T mx = row.maxCoeff();
    row = (row.array() - mx).exp().matrix();
    row /= row.sum();
  }
}

// Attention of `queries` rows over `keys` rows of the packed qkv matrix,
// accumulated into out for the queried rows.
template <typename T>
void attend(const MatrixT<T>& qkv, const std::vector<int>& queries, const std::vector<int>& keys, int heads,
            MatrixT<T>& out) {
  const Eigen::Index c = out.cols();
  const Eigen::Index dh = c / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const auto nq = static_cast<Eigen::Index>(queries.size());
  const auto nk = static_cast<Eigen::Index>(keys.size());
  MatrixT<T> q(nq, c), k(nk, c), v(nk, c);
  for (Eigen::Index i = 0; i < nq; ++i) q.row(i) = qkv.row(queries[i]).head(c);
  for (Eigen::Index i = 0; i < nk; ++i) {
    k.row(i) = qkv.row(keys[i]).segment(c, c);
    v.row(i) = qkv.row(keys[i]).tail(c);
  }
  MatrixT<T> scores(nq, nk);
  MatrixT<T> head_out(nq, dh);
  for (int h = 0; h < heads; ++h) {
    scores.noalias() = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose();
    scores *= scale;
    softmax_rows(scores);
    head_out.noalias() = scores * v.middleCols(h * dh, dh);
    for (Eigen::Index i = 0; i < nq; ++i) out.row(queries[i]).segment(h * dh, dh) = head_out.row(i);
  }
}

}  // namespace

template <typename T>
MatrixT<T> encoder_block(const MatrixT<T>& x, const BlockWeights<T>& weights, AttentionKind kind,
                         std::span<const TokenCoord> coords, bool has_bridge, int window_size, int heads) {
  const Eigen::Index m = x.rows();
  const Eigen::Index c = x.cols();
  const Eigen::Index n_tok = m - (has_bridge ? 1 : 0);
  if (n_tok < 0) throw ShapeError("encoder_block: bridge flagged on an empty input");
  if (c % heads != 0) throw ShapeError("encoder_block: width " + std::to_string(c) + " not divisible by heads");
  if (weights.qkv.in_dim() != c) throw ShapeError("encoder_block: weights sized for a different width");
  if (kind == AttentionKind::window && static_cast<Eigen::Index>(coords.size()) != n_tok) {
    throw std::invalid_argument("encoder_block: window attention needs a lattice coordinate for each of the " +
                                std::to_string(n_tok) + " non-bridge tokens, got " +
                                std::to_string(coords.size()));
  }

  MatrixT<T> h = x;
  layer_norm_rows(h, weights.ln1_gamma, weights.ln1_beta);
  const MatrixT<T> qkv = weights.qkv.forward(h);
  MatrixT<T> attn = MatrixT<T>::Zero(m, c);

  std::vector<int> all(m);
  for (Eigen::Index i = 0; i < m; ++i) all[i] = static_cast<int>(i);
  if (kind == AttentionKind::global) {
    attend(qkv, all, all, heads, attn);
  } else {
    std::map<std::tuple<int, int, int>, std::vector<int>> groups;
    for (Eigen::Index i = 0; i < n_tok; ++i) {
      const TokenCoord& tc = coords[i];
      groups[{tc.view, tc.row / window_size, tc.col / window_size}].push_back(static_cast<int>(i));
    }
    for (auto& [key, members] : groups) {
      std::vector<int> keys = members;
      if (has_bridge) keys.push_back(static_cast<int>(m - 1));
      attend(qkv, members, keys, heads, attn);
    }
    if (has_bridge) attend(qkv, std::vector<int>{static_cast<int>(m - 1)}, all, heads, attn);
  }

  MatrixT<T> y = x + weights.proj.forward(attn);
  MatrixT<T> h2 = y;
  layer_norm_rows(h2, weights.ln2_gamma, weights.ln2_beta);
  MatrixT<T> hidden = weights.fc1.forward(h2);
  gelu_inplace(hidden);
  y.noalias() += weights.fc2.forward(hidden);
  return y;
}

template <typename T>
MatrixT<T> encode_plain(const MatrixT<T>& tokens, const TokenLattice& lattice, const EncoderWeights<T>& weights) {
  if (tokens.rows() != lattice.size()) throw ShapeError("encode_plain: token count does not match lattice");
  const auto coords = lattice.coords();
  MatrixT<T> x = tokens;
  for (int l = 0; l < weights.config.layers; ++l) {
    x = encoder_block<T>(x, weights.blocks[l], weights.config.kind(l), coords, false, weights.config.window_size,
                         weights.config.heads);
  }
  return x;
}

template MatrixT<double> encoder_block<double>(const MatrixT<double>&, const BlockWeights<double>&, AttentionKind,
                                               std::span<const TokenCoord>, bool, int, int);
template MatrixT<float> encoder_block<float>(const MatrixT<float>&, const BlockWeights<float>&, AttentionKind,
                                             std::span<const TokenCoord>, bool, int, int);
template MatrixT<double> encode_plain<double>(const MatrixT<double>&, const TokenLattice&,
                                              const EncoderWeights<double>&);
template MatrixT<float> encode_plain<float>(const MatrixT<float>&, const TokenLattice&, const EncoderWeights<float>&);

}  // namespace toc3d::router
