#include "toc3d/bench.hpp"

#include "toc3d/router.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <thread>

namespace toc3d::prof {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

double time_batch(const std::function<void()>& fn, int batch) {
  const auto t0 = Clock::now();
  for (int i = 0; i < batch; ++i) fn();
  return elapsed_ms(t0, Clock::now()) / batch;
}

void summarize(BenchResult& r, const std::vector<double>& samples) {
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n;
  double var = 0.0;
  for (double s : samples) var += (s - mean) * (s - mean);
  r.mean_ms = mean;
  r.std_ms = samples.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  r.iterations = static_cast<int>(samples.size());
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

double clock_resolution_ms() {
  double best = 1e300;
  for (int i = 0; i < 50; ++i) {
    const auto t0 = Clock::now();
    auto t1 = Clock::now();
    while (t1 == t0) t1 = Clock::now();
    best = std::min(best, elapsed_ms(t0, t1));
  }
  return best;
}

std::pair<BenchResult, BenchResult> time_pair(const std::function<void()>& a, const std::function<void()>& b,
                                              const BenchConfig& cfg) {
  if (cfg.iterations < 10) throw std::invalid_argument("time_pair: need at least 10 timed iterations");
  for (int i = 0; i < cfg.warmup; ++i) {
    a();
    b();
  }
  const double target = std::max(cfg.min_sample_ms, 1000.0 * clock_resolution_ms());
  int batch = 1;
  while (batch < (1 << 24)) {
    const double fastest = std::min(time_batch(a, batch), time_batch(b, batch)) * batch;
    if (fastest >= target) break;
    const double grow = fastest > 0.0 ? std::ceil(target / fastest) : 16.0;
    batch *= static_cast<int>(std::clamp(grow, 2.0, 16.0));
  }

  std::vector<double> sa, sb;
  sa.reserve(cfg.iterations);
  sb.reserve(cfg.iterations);
  for (int i = 0; i < cfg.iterations; ++i) {
    sa.push_back(time_batch(a, batch));
    sb.push_back(time_batch(b, batch));
  }
  BenchResult ra, rb;
  for (BenchResult* r : {&ra, &rb}) {
    r->warmup = cfg.warmup;
    r->batch = batch;
    r->threads = Eigen::nbThreads();
    r->cores = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
  summarize(ra, sa);
  summarize(rb, sb);
  return {ra, rb};
}

template <typename T>
std::string tensor_hash(const MatrixT<T>& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto* p = reinterpret_cast<const unsigned char*>(m.data());
  for (std::size_t i = 0; i < static_cast<std::size_t>(m.size()) * sizeof(T); ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

template std::string tensor_hash<double>(const MatrixT<double>&);
template std::string tensor_hash<float>(const MatrixT<float>&);

namespace {

template <typename T>
BenchComparison run_benchmark(const RunConfig& cfg, const sim::SimSample& sample,
                              const router::EncoderWeights<double>& weights64, const mqts::ScorerParams& scorer) {
  const router::EncoderWeights<T> weights = weights64.template cast<T>();
  const MatrixT<T> tokens = sample.tokens.tokens.template cast<T>();
  const TokenLattice lattice = sample.tokens.lattice;

  MatrixT<T> out_plain, out_comp;
  auto plain = [&] { out_plain = router::encode_plain<T>(tokens, lattice, weights); };
  auto compressed = [&] {
    out_comp = router::forward_backbone<T>(tokens, lattice, sample.queries, cfg.schedule, scorer, weights).tokens;
  };
  auto [rb, rc] = time_pair(plain, compressed, cfg.bench);

  BenchComparison cmp;
  cmp.baseline = rb;
  cmp.compressed = rc;
  cmp.baseline.digest = cmp.compressed.digest = cfg.digest();
  const double se = std::sqrt((rb.std_ms * rb.std_ms + rc.std_ms * rc.std_ms) / rb.iterations);
  cmp.separation_sigma = se > 0.0 ? (rb.mean_ms - rc.mean_ms) / se : 0.0;
  cmp.output_hash_baseline = tensor_hash<T>(out_plain);
  cmp.output_hash_compressed = tensor_hash<T>(out_comp);
  const bool degenerate =
      std::all_of(cfg.schedule.ratios.begin(), cfg.schedule.ratios.end(), [](double r) { return r == 1.0; });
  if (degenerate) cmp.max_abs_diff = static_cast<double>((out_plain - out_comp).cwiseAbs().maxCoeff());
  return cmp;
}

}  // namespace

BenchComparison benchmark(const RunConfig& cfg, const std::optional<mqts::ScorerParams>& scorer) {
  cfg.validate();
  const sim::SimSample sample = sim::simulate_sample(cfg.setup(), sim::derive_seed(cfg.seed, 9));
  Rng wrng(sim::derive_seed(cfg.seed, 7));
  const auto weights = router::init_encoder(cfg.encoder, wrng);
  mqts::ScorerParams params;
  if (scorer) {
    params = *scorer;
  } else {
    Rng srng(sim::derive_seed(cfg.seed, 8));
    params = mqts::ScorerParams::init(cfg.encoder.dim, cfg.queries.content_dim, cfg.n_q, srng);
  }
  return cfg.precision == Precision::f64 ? run_benchmark<double>(cfg, sample, weights, params)
                                         : run_benchmark<float>(cfg, sample, weights, params);
}

}  // namespace toc3d::prof
