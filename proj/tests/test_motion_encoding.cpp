#include "test_support.hpp"

#include "toc3d/motion_encoding.hpp"
#include "toc3d/scene_sim.hpp"

#include <doctest.h>

using namespace toc3d;
using namespace toc3d::motion;
using toc3d::test::random_matrix;

namespace {

Mat4 yaw(double angle, Vec3 t = Vec3::Zero()) {
  Mat4 m = Mat4::Identity();
  m(0, 0) = std::cos(angle);
  m(0, 1) = -std::sin(angle);
  m(1, 0) = std::sin(angle);
  m(1, 1) = std::cos(angle);
  m.topRightCorner<3, 1>() = t;
  return m;
}

HistoryQuerySet random_queries(Rng& rng, int n, int c_q) {
  HistoryQuerySet q;
  q.contents = random_matrix(rng, n, c_q);
  q.refpoints.resize(n, 4);
  q.velocities = random_matrix(rng, n, 3, 5.0);
  for (int i = 0; i < n; ++i) {
    q.refpoints.row(i) << rng.uniform(-30, 30), rng.uniform(-30, 30), rng.uniform(0, 3), 1.0;
    q.confidences.push_back(rng.uniform());
    q.dt.push_back(rng.uniform(0.2, 1.0));
    q.object_ids.push_back(-1);
  }
  q.ego_transform = yaw(rng.uniform(-0.3, 0.3), Vec3(rng.uniform(-5, 5), rng.uniform(-1, 1), 0));
  return q;
}

double hand_ln(const Eigen::Ref<const Eigen::RowVectorXd>& row, int j, double eps) {
  double mean = 0.0;
  for (int c = 0; c < row.size(); ++c) mean += row[c];
  mean /= static_cast<double>(row.size());
  double var = 0.0;
  for (int c = 0; c < row.size(); ++c) var += (row[c] - mean) * (row[c] - mean);
  var /= static_cast<double>(row.size());
  return (row[j] - mean) / std::sqrt(var + eps);
}

}  // namespace

TEST_CASE("EgoTransform: rigid input accepted, others rejected") {
  CHECK_NOTHROW(EgoTransform(yaw(0.7, Vec3(1, 2, 3))));
  Mat4 scaled = Mat4::Identity() * 2.0;
  scaled(3, 3) = 1.0;
  CHECK_THROWS_AS(EgoTransform{scaled}, std::invalid_argument);
  Mat4 reflect = Mat4::Identity();
  reflect(0, 0) = -1.0;
  CHECK_THROWS_AS(EgoTransform{reflect}, std::invalid_argument);
  Mat4 bad_row = Mat4::Identity();
  bad_row(3, 0) = 0.5;
  CHECK_THROWS_AS(EgoTransform{bad_row}, std::invalid_argument);
}

TEST_CASE("positional_encode: examples") {
  Vector zero = Vector::Zero(1);
  const Vector a = positional_encode(zero, {2, false});
  REQUIRE(a.size() == 4);
  CHECK(a[0] == 0.0);
  CHECK(a[1] == 1.0);
  CHECK(a[2] == 0.0);
  CHECK(a[3] == 1.0);

  Vector half = Vector::Constant(1, 0.5);
  const Vector b = positional_encode(half, {1, false});
  CHECK(b[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(std::abs(b[1]) <= 1e-15);

  CHECK(positional_encode(Vector::Zero(3), {4, true}).size() == 27);
  CHECK(PEConfig{}.output_dim(kMotionRawDim) == 420);
}

TEST_CASE("positional_encode: band-major layout with passthrough") {
  Vector x(2);
  x << 0.3, -1.7;
  const Vector y = positional_encode(x, {3, true});
  CHECK(y[0] == 0.3);
  CHECK(y[1] == -1.7);
  for (int k = 0; k < 3; ++k) {
    for (int i = 0; i < 2; ++i) {
      const double arg = std::pow(2.0, k) * M_PI * x[i];
      CHECK(y[2 + 4 * k + i] == doctest::Approx(std::sin(arg)).epsilon(1e-14));
      CHECK(y[2 + 4 * k + 2 + i] == doctest::Approx(std::cos(arg)).epsilon(1e-14));
    }
  }
}

TEST_CASE("positional_encode: sinusoid outputs are bounded") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const Vector x = test::random_vector(rng, 5, 20.0);
    const Vector y = positional_encode(x, {10, false});
    CHECK(y.cwiseAbs().maxCoeff() <= 1.0);
  }
}

TEST_CASE("align_refpoints: identity, translation, yaw") {
  RefpointMatrix p(1, 4);
  p << 2, 3, 4, 1;
  CHECK(align_refpoints(p, EgoTransform::identity()) == p);

  Mat4 shift = Mat4::Identity();
  shift(0, 3) = 1.0;
  const RefpointMatrix moved = align_refpoints(p, EgoTransform(shift));
  CHECK(moved(0, 0) == 3.0);
  CHECK(moved(0, 1) == 3.0);
  CHECK(moved(0, 2) == 4.0);
  CHECK(moved(0, 3) == 1.0);

  RefpointMatrix x_axis(1, 4);
  x_axis << 1, 0, 0, 1;
  const RefpointMatrix turned = align_refpoints(x_axis, EgoTransform(yaw(M_PI / 2)));
  CHECK(std::abs(turned(0, 0)) <= 1e-15);
  CHECK(turned(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(turned(0, 3) == 1.0);

  RefpointMatrix not_homogeneous(1, 4);
  not_homogeneous << 1, 2, 3, 0.5;
  CHECK_THROWS_AS(align_refpoints(not_homogeneous, EgoTransform::identity()), std::invalid_argument);
}

TEST_CASE("align_refpoints: static objects land on their current-frame position") {
  sim::SceneConfig cfg;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const sim::Sequence seq = sim::generate_sequence({seed}, cfg);
    const auto& h = seq.frames[0];
    const auto& c = seq.frames[1];
    const Mat4 e = sim::rigid_inverse(c.world_from_ego) * h.world_from_ego;
    // A static world point seen from both ego poses.
    const Vec3 world(10.0 + seed, -4.0, 1.0);
    const Vec4 w(world.x(), world.y(), world.z(), 1.0);
    const Vec4 in_hist = sim::rigid_inverse(h.world_from_ego) * w;
    const Vec4 in_cur = sim::rigid_inverse(c.world_from_ego) * w;
    RefpointMatrix p(1, 4);
    p.row(0) = in_hist.transpose();
    const RefpointMatrix out = align_refpoints(p, EgoTransform(e));
    CHECK((out.row(0).transpose() - in_cur).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("align_refpoints: composition") {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const Mat4 a = yaw(rng.uniform(-3, 3), Vec3(rng.normal(), rng.normal(), rng.normal()));
    const Mat4 b = yaw(rng.uniform(-3, 3), Vec3(rng.normal(), rng.normal(), rng.normal()));
    RefpointMatrix p(5, 4);
    for (int i = 0; i < 5; ++i) p.row(i) << rng.normal(0, 20), rng.normal(0, 20), rng.normal(), 1.0;
    const RefpointMatrix twice = align_refpoints(align_refpoints(p, EgoTransform(a)), EgoTransform(b));
    const RefpointMatrix once = align_refpoints(p, EgoTransform(b * a));
    CHECK((twice - once).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("motion_vectors: raw layout and normalization") {
  Rng rng(23);
  const HistoryQuerySet q = random_queries(rng, 3, 4);
  const MotionNormalization norm{10.0, 2.0};
  const Matrix m = motion_vectors(q, norm);
  REQUIRE(m.cols() == 20);
  for (int i = 0; i < 3; ++i) {
    for (int a = 0; a < 3; ++a) CHECK(m(i, a) == doctest::Approx(q.velocities(i, a) / 10.0).epsilon(1e-15));
    CHECK(m(i, 3) == doctest::Approx(q.dt[i] / 2.0).epsilon(1e-15));
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) CHECK(m(i, 4 + 4 * r + c) == q.ego_transform(r, c));
    }
  }
}

TEST_CASE("encode_motion: zero heads, static queries, shape errors") {
  Rng rng(24);
  HistoryQuerySet q = random_queries(rng, 4, 8);
  const PEConfig pe;
  const int d_m = pe.output_dim(kMotionRawDim);

  const LinearLayer zero = LinearLayer::zeros(8, d_m);
  const MotionContext z = encode_motion(q, pe, {}, zero, zero);
  CHECK(z.v_m.rows() == 4);
  CHECK(z.v_m.cols() == 420);
  CHECK(z.gamma.isZero());
  CHECK(z.beta.isZero());

  q.velocities.setZero();
  std::fill(q.dt.begin(), q.dt.end(), 0.0);
  q.ego_transform = Mat4::Identity();
  const LinearLayer g = init_linear(8, d_m, rng), b = init_linear(8, d_m, rng);
  const MotionContext s = encode_motion(q, pe, {}, g, b);
  for (int i = 1; i < 4; ++i) {
    CHECK(s.gamma.row(i) == s.gamma.row(0));
    CHECK(s.beta.row(i) == s.beta.row(0));
  }

  CHECK_THROWS_AS(encode_motion(q, pe, {}, init_linear(8, 100, rng), b), ShapeError);
  CHECK_THROWS_AS(encode_motion(q, pe, {}, g, init_linear(7, d_m, rng)), ShapeError);
}

TEST_CASE("conditional_layernorm: neutral and degenerate affine") {
  Rng rng(25);
  const HistoryQuerySet q = random_queries(rng, 5, 6);
  const RefpointMlp mlp = RefpointMlp::init(6, rng);
  const RefpointMatrix ref = q.refpoints;
  MotionContext ctx;
  ctx.gamma = Matrix::Ones(5, 6);
  ctx.beta = Matrix::Zero(5, 6);
  const AlignedQueries plain = conditional_layernorm(q, ref, ctx, mlp);
  const Matrix mlp_out = mlp.forward(Matrix(ref));
  for (int i = 0; i < 5; ++i) {
    const Vector c = layer_norm(q.contents.row(i).transpose());
    const Vector r = layer_norm(mlp_out.row(i).transpose());
    CHECK((plain.content_emb.row(i).transpose() - c).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((plain.refpoint_emb.row(i).transpose() - r).cwiseAbs().maxCoeff() <= 1e-14);
  }
  CHECK(plain.fused == plain.content_emb + plain.refpoint_emb);

  ctx.gamma.setZero();
  ctx.beta = random_matrix(rng, 5, 6);
  const AlignedQueries flat = conditional_layernorm(q, ref, ctx, mlp);
  CHECK(flat.content_emb == ctx.beta);
  CHECK(flat.refpoint_emb == ctx.beta);

  ctx.beta = Matrix::Zero(4, 6);
  CHECK_THROWS_AS(conditional_layernorm(q, ref, ctx, mlp), ShapeError);
}

TEST_CASE("conditional_layernorm: two-query scalar trace") {
  HistoryQuerySet q;
  q.contents.resize(2, 4);
  q.contents << 1.0, 2.0, 0.5, -1.0, 0.0, -3.0, 2.0, 1.0;
  q.refpoints.resize(2, 4);
  q.refpoints << 1.0, 2.0, 0.5, 1.0, -2.0, 0.0, 1.0, 1.0;
  q.velocities = Matrix::Zero(2, 3);
  q.confidences = {0.5, 0.5};
  q.dt = {0.5, 0.5};
  q.object_ids = {-1, -1};

  RefpointMlp mlp;
  mlp.fc1.weight.resize(4, 4);
  mlp.fc2.weight.resize(4, 4);
  mlp.fc1.bias.resize(4);
  mlp.fc2.bias.resize(4);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      mlp.fc1.weight(r, c) = 0.1 * (r + 1) - 0.05 * c;
      mlp.fc2.weight(r, c) = (r == c ? 0.5 : -0.1 * (c + 1));
    }
    mlp.fc1.bias[r] = 0.01 * r;
    mlp.fc2.bias[r] = -0.02 * r;
  }
  MotionContext ctx;
  ctx.gamma.resize(2, 4);
  ctx.beta.resize(2, 4);
  ctx.gamma << 1.0, 0.5, 2.0, -1.0, 0.3, 0.3, 0.3, 0.3;
  ctx.beta << 0.0, 0.1, 0.2, 0.3, -1.0, 0.0, 1.0, 0.0;

  const AlignedQueries out = conditional_layernorm(q, q.refpoints, ctx, mlp, 1e-6);
  for (int i = 0; i < 2; ++i) {
    double hidden[4], mlp_row[4];
    for (int h = 0; h < 4; ++h) {
      double acc = mlp.fc1.bias[h];
      for (int c = 0; c < 4; ++c) acc += mlp.fc1.weight(h, c) * q.refpoints(i, c);
      hidden[h] = 0.5 * acc * (1.0 + std::erf(acc / std::sqrt(2.0)));
    }
    for (int o = 0; o < 4; ++o) {
      double acc = mlp.fc2.bias[o];
      for (int h = 0; h < 4; ++h) acc += mlp.fc2.weight(o, h) * hidden[h];
      mlp_row[o] = acc;
    }
    const Eigen::RowVectorXd mr = Eigen::Map<Eigen::RowVectorXd>(mlp_row, 4);
    const Eigen::RowVectorXd cr = q.contents.row(i);
    for (int j = 0; j < 4; ++j) {
      const double rp = ctx.gamma(i, j) * hand_ln(mr, j, 1e-6) + ctx.beta(i, j);
      const double ct = ctx.gamma(i, j) * hand_ln(cr, j, 1e-6) + ctx.beta(i, j);
      CHECK(out.refpoint_emb(i, j) == doctest::Approx(rp).epsilon(1e-12));
      CHECK(out.content_emb(i, j) == doctest::Approx(ct).epsilon(1e-12));
      CHECK(out.fused(i, j) == doctest::Approx(rp + ct).epsilon(1e-12));
    }
  }
}

TEST_CASE("conditional_layernorm: content rows are scale invariant") {
  Rng rng(26);
  MotionWeights w = MotionWeights::init(16, rng);
  // The variance floor breaks exact invariance by O(eps / var); measure it without one.
  w.ln_eps = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    HistoryQuerySet q = random_queries(rng, 6, 16);
    const AlignedQueries a = prepare_queries(q, w);
    for (int i = 0; i < q.size(); ++i) q.contents.row(i) *= rng.uniform(0.01, 100.0);
    const AlignedQueries b = prepare_queries(q, w);
    CHECK((a.content_emb - b.content_emb).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(a.refpoint_emb == b.refpoint_emb);
  }
}

TEST_CASE("prepare_queries: shapes and trace agree with the pieces") {
  Rng rng(27);
  const MotionWeights w = MotionWeights::init(12, rng);
  const HistoryQuerySet q = random_queries(rng, 7, 12);
  MotionContext ctx;
  ConditionalLnTrace trace;
  RefpointMatrix aligned;
  const AlignedQueries out = prepare_queries(q, w, &ctx, &trace, &aligned);
  CHECK(out.fused.rows() == 7);
  CHECK(out.fused.cols() == 12);
  CHECK(out.content_emb.rows() == out.refpoint_emb.rows());
  CHECK(ctx.v_m.cols() == 420);
  CHECK(aligned == align_refpoints(q.refpoints, EgoTransform(q.ego_transform)));
  CHECK(trace.mlp_out == w.ref_mlp.forward(Matrix(aligned)));
  CHECK(w.content_dim() == 12);
}
