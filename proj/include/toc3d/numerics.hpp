#pragma once

// Dense linear-algebra substrate shared by every module: row-major matrices,
// checked products, layer normalization, activations, linear layers and a
// seeded random source.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace toc3d {

template <typename T>
using MatrixT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using VectorT = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Matrix = MatrixT<double>;
using Vector = VectorT<double>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;

inline constexpr double kLayerNormEps = 1e-6;
inline constexpr double kInitStd = 0.02;

/// Raised for any operand whose dimensions do not fit the operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_string(Eigen::Index rows, Eigen::Index cols);

/// Checked product; throws ShapeError naming both shapes when a.cols != b.rows.
template <typename T>
MatrixT<T> matmul(const MatrixT<T>& a, const MatrixT<T>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + shape_string(a.rows(), a.cols()) + " by " +
                     shape_string(b.rows(), b.cols()));
  }
  MatrixT<T> out(a.rows(), b.cols());
  out.noalias() = a * b;
  return out;
}

/// Affine-free layer normalization. Throws on empty input.
Vector layer_norm(const Vector& x, double eps = kLayerNormEps);

/// Row-wise layer normalization with optional affine parameters (empty
/// gamma/beta means identity affine).
template <typename T>
void layer_norm_rows(MatrixT<T>& x, const VectorT<T>& gamma, const VectorT<T>& beta,
                     T eps = static_cast<T>(kLayerNormEps)) {
  const Eigen::Index cols = x.cols();
  if (cols == 0) throw ShapeError("layer_norm_rows: zero columns");
  const bool affine = gamma.size() != 0;
  if (affine && (gamma.size() != cols || beta.size() != cols)) {
    throw ShapeError("layer_norm_rows: affine size mismatch for width " + std::to_string(cols));
  }
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    const T mean = row.mean();
    row.array() -= mean;
    const T var = row.squaredNorm() / static_cast<T>(cols);
    row *= T(1) / std::sqrt(var + eps);
    if (affine) row = (row.array() * gamma.transpose().array() + beta.transpose().array()).matrix();
  }
}

double sigmoid(double x);
Vector sigmoid(const Vector& x);

double gelu(double x);
double gelu_grad(double x);

template <typename T>
void gelu_inplace(MatrixT<T>& x) {
  constexpr T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
  x = x.unaryExpr([](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); });
}

bool all_finite(const Matrix& m);

/// Seed plus generator name; identical seeds give identical streams.
struct RngState {
  std::uint64_t seed = 0;
  static constexpr const char* algorithm = "mt19937_64";
};

class Rng {
 public:
  explicit Rng(RngState state) : engine_(state.seed) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0);
  double normal(double mean = 0.0, double stddev = 1.0);
  /// Normal resampled until it lies within +-2 stddev of the mean.
  double truncated_normal(double stddev);
  double beta(double a, double b);
  int uniform_int(int lo, int hi);  // inclusive bounds
  Vector unit_vector(int dim);
  std::uint64_t next_u64() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// y = x W^T + b applied to every row of x.
template <typename T>
struct BasicLinear {
  MatrixT<T> weight;  // out x in
  VectorT<T> bias;    // out

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }

  void validate() const {
    if (bias.size() != weight.rows()) {
      throw ShapeError("linear: bias length " + std::to_string(bias.size()) +
                       " does not match weight " + shape_string(weight.rows(), weight.cols()));
    }
  }

  MatrixT<T> forward(const MatrixT<T>& x) const {
    if (x.cols() != weight.cols()) {
      throw ShapeError("linear: input " + shape_string(x.rows(), x.cols()) +
                       " does not fit weight " + shape_string(weight.rows(), weight.cols()));
    }
    MatrixT<T> y(x.rows(), weight.rows());
    y.noalias() = x * weight.transpose();
    y.rowwise() += bias.transpose();
    return y;
  }

  template <typename U>
  BasicLinear<U> cast() const {
    return {weight.template cast<U>(), bias.template cast<U>()};
  }

  static BasicLinear zeros(Eigen::Index out, Eigen::Index in) {
    return {MatrixT<T>::Zero(out, in), VectorT<T>::Zero(out)};
  }
};

using LinearLayer = BasicLinear<double>;

/// Truncated-normal(0.02) weights, zero bias.
LinearLayer init_linear(Eigen::Index out, Eigen::Index in, Rng& rng, double stddev = kInitStd);

}  // namespace toc3d
