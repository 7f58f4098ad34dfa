#include "grad_check.hpp"

#include "toc3d/mqts.hpp"
#include "toc3d/scene_sim.hpp"
#include "toc3d/training.hpp"

#include <doctest.h>

#include <algorithm>
#include <limits>
#include <numeric>
#include <set>

using namespace toc3d;
using namespace toc3d::mqts;
using toc3d::test::random_matrix;

namespace {

HistoryQuerySet with_confidences(std::vector<double> conf) {
  HistoryQuerySet q;
  const int n = static_cast<int>(conf.size());
  q.contents = Matrix::Zero(n, 2);
  q.refpoints = RefpointMatrix::Zero(n, 4);
  q.refpoints.col(3).setOnes();
  q.velocities = Matrix::Zero(n, 3);
  for (int i = 0; i < n; ++i) {
    q.contents(i, 0) = i;  // tags the original index
    q.object_ids.push_back(i);
    q.dt.push_back(0.5);
  }
  q.confidences = std::move(conf);
  return q;
}

std::vector<int> tags(const HistoryQuerySet& q) {
  std::vector<int> out;
  for (int i = 0; i < q.size(); ++i) out.push_back(static_cast<int>(q.contents(i, 0)));
  return out;
}

}  // namespace

TEST_CASE("sample_history_queries: top confidences, stable ties") {
  const HistoryQuerySet q = with_confidences({0.9, 0.1, 0.5});
  CHECK(tags(sample_history_queries(q, 2)) == std::vector<int>{0, 2});
  CHECK(tags(sample_history_queries(q, 10)) == std::vector<int>{0, 2, 1});
  const HistoryQuerySet tie = with_confidences({0.3, 0.7, 0.3, 0.7});
  CHECK(tags(sample_history_queries(tie, 3)) == std::vector<int>{1, 3, 0});
  CHECK_THROWS_AS(sample_history_queries(q, 0), std::invalid_argument);
}

TEST_CASE("sample_history_queries: 64 of 256 simulated queries") {
  const sim::SimSample s = sim::simulate_sample(sim::SceneSetup::desk(), 1);
  REQUIRE(s.queries.size() == 256);
  const HistoryQuerySet top = sample_history_queries(s.queries, 64);
  CHECK(top.size() == 64);
  for (int i = 1; i < 64; ++i) CHECK(top.confidences[i - 1] >= top.confidences[i]);
}

TEST_CASE("sample_history_queries: enlarging n_q keeps earlier picks") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> conf(40);
    for (double& c : conf) c = std::round(rng.uniform() * 10) / 10;  // plenty of ties
    const HistoryQuerySet q = with_confidences(conf);
    const std::vector<int> small = tags(sample_history_queries(q, 10));
    const std::vector<int> large = tags(sample_history_queries(q, 25));
    CHECK(std::equal(small.begin(), small.end(), large.begin()));
  }
}

TEST_CASE("split_tokens: examples") {
  const std::vector<double> s = {0.9, 0.1, 0.5, 0.7};
  const TokenPartition half = split_tokens(s, 0.5);
  CHECK(half.salient == std::vector<int>{0, 3});
  CHECK(half.redundant == std::vector<int>{1, 2});

  const TokenPartition all = split_tokens(s, 1.0);
  CHECK(all.salient.size() == 4);
  CHECK(all.redundant.empty());

  const std::vector<double> flat(10, 0.5);
  const TokenPartition three = split_tokens(flat, 0.3);
  CHECK(three.salient == std::vector<int>{0, 1, 2});

  CHECK(salient_count(10, 0.01) == 1);
  CHECK_THROWS_AS(split_tokens(s, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(split_tokens(s, -0.5), std::invalid_argument);
  CHECK_THROWS_AS(split_tokens(s, 1.5), std::invalid_argument);
}

TEST_CASE("split_tokens: brute-force oracle over permutations with ties") {
  // Oracle: sort (score desc, index asc) and take the first N_s.
  std::vector<double> base = {0.2, 0.8, 0.8, 0.1, 0.5, 0.5};
  std::sort(base.begin(), base.end());
  do {
    for (double rho : {0.2, 0.34, 0.5, 0.9}) {
      std::vector<int> order(base.size());
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        return base[a] != base[b] ? base[a] > base[b] : a < b;
      });
      const int n_s = std::max(1, static_cast<int>(std::lround(rho * base.size())));
      std::vector<int> expect(order.begin(), order.begin() + n_s);
      std::sort(expect.begin(), expect.end());
      CHECK(split_tokens(base, rho).salient == expect);
    }
  } while (std::next_permutation(base.begin(), base.end()));
}

TEST_CASE("split_tokens: partition and ordering properties") {
  Rng rng(32);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = rng.uniform_int(1, 300);
    const double rho = rng.uniform(0.01, 1.0);
    std::vector<double> s(n);
    for (double& v : s) v = rng.uniform() < 0.2 ? 0.5 : rng.uniform();
    const TokenPartition p = split_tokens(s, rho);
    CHECK(static_cast<int>(p.salient.size()) == std::min(n, salient_count(n, rho)));
    std::vector<int> all = p.salient;
    all.insert(all.end(), p.redundant.begin(), p.redundant.end());
    std::sort(all.begin(), all.end());
    std::vector<int> expect(n);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(all == expect);
    double min_sal = 2.0, max_red = -1.0;
    for (int i : p.salient) min_sal = std::min(min_sal, s[i]);
    for (int i : p.redundant) max_red = std::max(max_red, s[i]);
    CHECK(min_sal >= max_red);
    CHECK(std::is_sorted(p.salient.begin(), p.salient.end()));
    CHECK(std::is_sorted(p.redundant.begin(), p.redundant.end()));
  }
}

TEST_CASE("split_tokens: invariant under monotone transforms of the scores") {
  Rng rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.uniform_int(2, 100);
    std::vector<double> logits(n), probs(n), scaled(n);
    for (int i = 0; i < n; ++i) {
      logits[i] = rng.normal(0.0, 3.0);
      probs[i] = sigmoid(logits[i]);
      scaled[i] = 2.5 * logits[i] + 1.0;
    }
    const double rho = rng.uniform(0.05, 1.0);
    CHECK(split_tokens(logits, rho).salient == split_tokens(probs, rho).salient);
    CHECK(split_tokens(logits, rho).salient == split_tokens(scaled, rho).salient);
  }
}

TEST_CASE("plan_updates: baseline, quarter layout, rejection") {
  const auto base = plan_updates({}, 24);
  REQUIRE(base.size() == 1);
  CHECK(base[0].begin == 0);
  CHECK(base[0].end == 24);
  CHECK(base[0].rho == 1.0);
  CHECK_FALSE(base[0].update_scores);

  const CompressionSchedule faster = CompressionSchedule::faster(24);
  CHECK(faster.update_layers == std::vector<int>{6, 12, 18});
  CHECK(faster.ratios == std::vector<double>{0.5, 0.4, 0.3});
  CHECK(CompressionSchedule::fast(24).ratios == std::vector<double>{0.7, 0.5, 0.5});
  const auto plan = plan_updates(faster, 24);
  REQUIRE(plan.size() == 4);
  const int bounds[5] = {0, 6, 12, 18, 24};
  const double rho[4] = {1.0, 0.5, 0.4, 0.3};
  for (int i = 0; i < 4; ++i) {
    CHECK(plan[i].begin == bounds[i]);
    CHECK(plan[i].end == bounds[i + 1]);
    CHECK(plan[i].rho == rho[i]);
    CHECK(plan[i].update_scores == (i > 0));
  }

  CHECK_THROWS_AS(plan_updates({{12, 6}, {0.5, 0.5}}, 24), std::invalid_argument);
  CHECK_THROWS_AS(plan_updates({{6, 6}, {0.5, 0.5}}, 24), std::invalid_argument);
  CHECK_THROWS_AS(plan_updates({{24}, {0.5}}, 24), std::invalid_argument);
  CHECK_THROWS_AS(plan_updates({{6}, {0.5, 0.4}}, 24), std::invalid_argument);
  CHECK_THROWS_AS(plan_updates({{6}, {0.0}}, 24), std::invalid_argument);
}

TEST_CASE("plan_updates: segments tile the depth") {
  Rng rng(34);
  for (int trial = 0; trial < 200; ++trial) {
    const int layers = rng.uniform_int(1, 30);
    CompressionSchedule s;
    for (int l = 0; l < layers; ++l) {
      if (rng.uniform() < 0.25) {
        s.update_layers.push_back(l);
        s.ratios.push_back(rng.uniform(0.1, 1.0));
      }
    }
    const auto plan = plan_updates(s, layers);
    int cursor = 0, updates = 0;
    for (const auto& seg : plan) {
      CHECK(seg.begin == cursor);
      CHECK(seg.end > seg.begin);
      cursor = seg.end;
      updates += seg.update_scores;
    }
    CHECK(cursor == layers);
    CHECK(updates == static_cast<int>(s.size()));
  }
}

TEST_CASE("compute_importance: constant head gives sigmoid(b)") {
  Rng rng(35);
  ScorerParams p = ScorerParams::init(6, 4, 3, rng);
  p.score_head.weight.setZero();
  p.score_head.bias[0] = 0.7;
  motion::AlignedQueries q;
  q.fused = random_matrix(rng, 3, 4);
  const ImportanceScore s = compute_importance(random_matrix(rng, 5, 6), q, p);
  for (double v : s.scores) CHECK(v == doctest::Approx(sigmoid(0.7)).epsilon(1e-15));
  CHECK(s.attention.rows() == 5);
  CHECK(s.attention.cols() == 3);
}

TEST_CASE("compute_importance: scalar trace with ones weights") {
  // N = 2, N_q = 1, C = C_q = 2.
  ScorerParams p;
  p.token_proj = LinearLayer{Matrix::Ones(2, 2), Vector::Zero(2)};
  p.score_head = LinearLayer{Matrix::Ones(1, 1), Vector::Zero(1)};
  Matrix t(2, 2);
  t << 1.0, 2.0, -1.0, 0.5;
  motion::AlignedQueries q;
  q.fused.resize(1, 2);
  q.fused << 0.5, -0.25;
  const ImportanceScore s = compute_importance(t, q, p);
  // T~ rows are [3, 3] and [-0.5, -0.5]; A = T~ . q / sqrt 2.
  const double a0 = (3.0 * 0.5 + 3.0 * -0.25) / std::sqrt(2.0);
  const double a1 = (-0.5 * 0.5 + -0.5 * -0.25) / std::sqrt(2.0);
  CHECK(s.attention(0, 0) == doctest::Approx(a0).epsilon(1e-15));
  CHECK(s.attention(1, 0) == doctest::Approx(a1).epsilon(1e-15));
  CHECK(s.scores[0] == doctest::Approx(1.0 / (1.0 + std::exp(-a0))).epsilon(1e-15));
  CHECK(s.scores[1] == doctest::Approx(1.0 / (1.0 + std::exp(-a1))).epsilon(1e-15));
}

TEST_CASE("compute_importance: range and N_q mismatch") {
  Rng rng(36);
  const ScorerParams p = ScorerParams::init(8, 4, 3, rng);
  motion::AlignedQueries q;
  q.fused = random_matrix(rng, 3, 4, 10.0);
  for (double v : compute_importance(random_matrix(rng, 50, 8, 10.0), q, p).scores) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  q.fused = random_matrix(rng, 2, 4);
  CHECK_THROWS_AS(compute_importance(random_matrix(rng, 5, 8), q, p), ShapeError);
}

TEST_CASE("score_tokens: samples queries then agrees with scorer_forward") {
  const sim::SimSample s = sim::simulate_sample(sim::SceneSetup::desk(), 2);
  Rng rng(37);
  const ScorerParams p = ScorerParams::init(256, 256, 64, rng);
  const ImportanceScore a = score_tokens(s.tokens.tokens, s.queries, p);
  const ScorerTrace t = scorer_forward(s.tokens.tokens, sample_history_queries(s.queries, 64), p);
  REQUIRE(a.scores.size() == 240);
  for (int i = 0; i < 240; ++i) CHECK(a.scores[i] == t.scores[i]);
  CHECK_THROWS_AS(scorer_forward(s.tokens.tokens, s.queries, p), ShapeError);
}

TEST_CASE("gaussian_focal_loss: examples") {
  const std::vector<double> s = {0.5}, y0 = {0.0};
  CHECK(gaussian_focal_loss(s, y0).loss == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-15));
  CHECK(gaussian_focal_loss(s, y0).loss == doctest::Approx(0.1733).epsilon(1e-3));

  const std::vector<double> perfect_y = {1.0, 0.0, 0.0, 1.0, 0.0};
  CHECK(gaussian_focal_loss(perfect_y, perfect_y).loss <= 1e-4);
  CHECK_THROWS_AS(gaussian_focal_loss(s, perfect_y), ShapeError);
}

TEST_CASE("gaussian_focal_loss: normalized by positive count") {
  const std::vector<double> s = {0.3, 0.3, 0.2, 0.6};
  const std::vector<double> y = {1.0, 1.0, 0.5, 0.0};
  const double pos = 2.0 * std::pow(0.7, 2) * std::log(0.3);
  const double neg = std::pow(0.5, 4) * 0.04 * std::log(0.8) + 0.36 * std::log(0.4);
  CHECK(gaussian_focal_loss(s, y).loss == doctest::Approx(-(pos + neg) / 2.0).epsilon(1e-14));
}

TEST_CASE("gaussian_focal_loss: gradient matches central differences") {
  Rng rng(38);
  test::GradCheck g;
  for (int trial = 0; trial < 50; ++trial) test::check_focal(rng, rng.uniform_int(1, 40), g);
  INFO(g.worst_at);
  CHECK(g.ok());
}

TEST_CASE("scorer_backward: zero and doubled upstream") {
  Rng rng(39);
  test::ScorerInstance inst = test::random_scorer_instance(rng, 6, 5, 4, 3, 2);
  const ScorerTrace t = scorer_forward(inst.tokens, inst.queries, inst.params);
  const ScorerParams zero = scorer_backward(t, inst.params, std::vector<double>(6, 0.0));
  for_each_tensor(zero, [](const std::string& name, auto data, Eigen::Index, Eigen::Index) {
    INFO(name);
    for (double v : data) CHECK(v == 0.0);
  });

  std::vector<double> g(6), g2(6);
  for (int i = 0; i < 6; ++i) {
    g[i] = rng.normal();
    g2[i] = 2.0 * g[i];
  }
  ScorerParams once = scorer_backward(t, inst.params, g);
  ScorerParams twice = scorer_backward(t, inst.params, g2);
  std::vector<std::vector<double>> a, b;
  for_each_tensor(once, [&](const std::string&, auto d, Eigen::Index, Eigen::Index) { a.emplace_back(d.begin(), d.end()); });
  for_each_tensor(twice, [&](const std::string&, auto d, Eigen::Index, Eigen::Index) { b.emplace_back(d.begin(), d.end()); });
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].size(); ++i) CHECK(b[k][i] == 2.0 * a[k][i]);
  }
}

TEST_CASE("scorer_backward: every parameter against central differences") {
  Rng rng(40);
  test::GradCheck g;
  test::ScorerInstance small = test::random_scorer_instance(rng, 7, 5, 4, 3, 2);
  test::check_scorer(rng, small, g);
  test::ScorerInstance full_pe = test::random_scorer_instance(rng, 5, 4, 3, 2, 10);
  test::check_scorer(rng, full_pe, g);
  INFO(g.worst_at);
  CHECK(g.checked > static_cast<long>(parameter_count(small.params)));
  CHECK(g.ok());
}

TEST_CASE("scorer_backward: stale traces are rejected") {
  Rng rng(41);
  test::ScorerInstance inst = test::random_scorer_instance(rng, 4, 3, 2, 2, 1);
  const ScorerTrace t = scorer_forward(inst.tokens, inst.queries, inst.params);
  const std::vector<double> g(4, 1.0);
  ScorerParams copy = inst.params;
  CHECK_THROWS_AS(scorer_backward(t, copy, g), StaleCacheError);
  ++inst.params.revision;
  CHECK_THROWS_AS(scorer_backward(t, inst.params, g), StaleCacheError);
  --inst.params.revision;
  CHECK_NOTHROW(scorer_backward(t, inst.params, g));
  CHECK_THROWS_AS(scorer_backward(t, inst.params, std::vector<double>(3, 1.0)), ShapeError);
}

TEST_CASE("ScorerParams: shapes, counts, zeros") {
  Rng rng(42);
  const ScorerParams p = ScorerParams::init(256, 256, 64, rng);
  CHECK(p.token_dim() == 256);
  CHECK(p.content_dim() == 256);
  CHECK(p.n_q() == 64);
  CHECK_NOTHROW(p.validate());
  const std::size_t expect = (256 * 256 + 256) + (64 + 1) + 2 * (256 * 420 + 256) + (256 * 4 + 256) +
                             (256 * 256 + 256);
  CHECK(parameter_count(p) == expect);
  const ScorerParams z = ScorerParams::zeros_like(p);
  CHECK(z.token_proj.weight.isZero());
  CHECK(z.motion.w_gamma.weight.rows() == 256);
  ScorerParams bad = p;
  bad.score_head = LinearLayer::zeros(2, 64);
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("train_scorer: deterministic, loss decreases, rejects empty data") {
  const sim::SceneSetup setup = sim::SceneSetup::desk();
  const auto data = sim::simulate_samples(setup, 16, 5);
  Rng rng(43);
  const ScorerParams init = ScorerParams::init(256, 256, 64, rng);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 3;
  const TrainResult a = train_scorer(data, init, cfg);
  const TrainResult b = train_scorer(data, init, cfg);
  REQUIRE(a.epoch_loss.size() == 10);
  CHECK(a.epoch_loss == b.epoch_loss);
  CHECK(a.params.token_proj.weight == b.params.token_proj.weight);
  CHECK(a.params.motion.w_beta.weight == b.params.motion.w_beta.weight);
  CHECK(a.epoch_loss.back() < a.epoch_loss.front());
  CHECK_THROWS_AS(train_scorer(std::span<const sim::SimSample>{}, init, cfg), std::invalid_argument);
}

TEST_CASE("train_scorer: non-finite loss is reported") {
  const auto data = sim::simulate_samples(sim::SceneSetup::desk(), 2, 6);
  Rng rng(44);
  ScorerParams init = ScorerParams::init(256, 256, 64, rng);
  init.score_head.bias[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train_scorer(data, init, cfg), TrainingDiverged);
}

TEST_CASE("partition_recall: counts only cells at or above the threshold") {
  HeatmapTarget t;
  t.lattice = {1, 1, 5};
  t.values = {1.0, 0.85, 0.79, 0.0, 0.9};
  TokenPartition p;
  p.salient = {0, 2, 3};
  p.redundant = {1, 4};
  const RecallStats r = partition_recall(p, t);
  CHECK(r.foreground == 3);
  CHECK(r.recalled == 1);
  CHECK(RecallStats{}.recall() == 1.0);
}
