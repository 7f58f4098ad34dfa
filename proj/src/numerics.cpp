#include "toc3d/numerics.hpp"

#include <cmath>

namespace toc3d {

std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

Vector layer_norm(const Vector& x, double eps) {
  if (x.size() == 0) throw ShapeError("layer_norm: empty input");
  Vector centered = x.array() - x.mean();
  const double var = centered.squaredNorm() / static_cast<double>(x.size());
  return centered / std::sqrt(var + eps);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vector sigmoid(const Vector& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

double Rng::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

double Rng::normal(double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(engine_);
}

double Rng::truncated_normal(double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (;;) {
    const double v = dist(engine_);
    if (std::abs(v) <= 2.0 * stddev) return v;
  }
}

double Rng::beta(double a, double b) {
  const double x = std::gamma_distribution<double>(a, 1.0)(engine_);
  const double y = std::gamma_distribution<double>(b, 1.0)(engine_);
  return x / (x + y);
}

int Rng::uniform_int(int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(engine_);
}

Vector Rng::unit_vector(int dim) {
  Vector v(dim);
  double norm = 0.0;
  while (norm < 1e-12) {
    for (int i = 0; i < dim; ++i) v[i] = normal();
    norm = v.norm();
  }
  return v / norm;
}

LinearLayer init_linear(Eigen::Index out, Eigen::Index in, Rng& rng, double stddev) {
  LinearLayer layer = LinearLayer::zeros(out, in);
  for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
    layer.weight.data()[i] = rng.truncated_normal(stddev);
  }
  return layer;
}

}  // namespace toc3d
