#include "toc3d/sweep.hpp"

#include "toc3d/router.hpp"

#include <exception>

namespace toc3d::prof {

namespace {

constexpr std::uint64_t kTrainStream = 20;
constexpr std::uint64_t kEvalStream = 21;
constexpr std::uint64_t kEncoderStream = 7;
constexpr std::uint64_t kScorerInitStream = 8;

template <typename T>
double recall_impl(const RunConfig& cfg, const mqts::CompressionSchedule& schedule, const mqts::ScorerParams& scorer) {
  const auto setup = cfg.setup();
  const auto frames = sim::simulate_samples(setup, cfg.eval_samples, sim::derive_seed(cfg.seed, kEvalStream));
  Rng wrng(sim::derive_seed(cfg.seed, kEncoderStream));
  const auto weights = router::init_encoder(cfg.encoder, wrng).template cast<T>();
  double total = 0.0;
  int count = 0;
  for (const auto& f : frames) {
    const auto res = router::forward_backbone<T>(f.tokens.tokens.template cast<T>(), f.tokens.lattice, f.queries,
                                                 schedule, scorer, weights);
    for (const auto& stage : res.stages) {
      const auto r = mqts::partition_recall(stage.partition, f.target);
      if (r.foreground == 0) continue;
      total += r.recall();
      ++count;
    }
  }
  return count ? total / count : 1.0;
}

}  // namespace

mqts::CompressionSchedule schedule_for(const RunConfig& cfg, const std::vector<double>& ratios) {
  mqts::CompressionSchedule s;
  if (ratios.size() == cfg.schedule.update_layers.size()) {
    s.update_layers = cfg.schedule.update_layers;
    s.ratios = ratios;
  } else if (ratios.size() == 3) {
    s = mqts::CompressionSchedule::at_quarters(cfg.encoder.layers, ratios[0], ratios[1], ratios[2]);
  } else {
    throw std::invalid_argument("sweep: ratio set of length " + std::to_string(ratios.size()) +
                                " does not match the configured update layers");
  }
  s.validate(cfg.encoder.layers);
  return s;
}

mqts::TrainResult train_for(const RunConfig& cfg, int n_q) {
  const auto setup = cfg.setup();
  const auto data = sim::simulate_samples(setup, cfg.train_samples, sim::derive_seed(cfg.seed, kTrainStream));
  Rng rng(sim::derive_seed(cfg.seed, kScorerInitStream));
  const auto init = mqts::ScorerParams::init(cfg.encoder.dim, cfg.queries.content_dim, n_q, rng);
  mqts::TrainConfig tc = cfg.train;
  tc.seed = sim::derive_seed(cfg.seed, kTrainStream + 100);
  return mqts::train_scorer(data, init, tc);
}

double backbone_recall(const RunConfig& cfg, const mqts::CompressionSchedule& schedule,
                       const mqts::ScorerParams& scorer) {
  return cfg.precision == Precision::f64 ? recall_impl<double>(cfg, schedule, scorer)
                                         : recall_impl<float>(cfg, schedule, scorer);
}

std::vector<SweepRow> sweep(const RunConfig& cfg, const std::vector<std::vector<double>>& ratio_sets,
                            const std::vector<int>& nq_set, const SweepOptions& options) {
  std::vector<SweepRow> rows;
  std::map<int, mqts::ScorerParams> local_cache;
  auto& cache = options.scorer_cache ? *options.scorer_cache : local_cache;

  for (int n_q : nq_set) {
    for (const auto& ratios : ratio_sets) {
      SweepRow row;
      row.ratios = ratios;
      row.n_q = n_q;
      try {
        RunConfig cell = cfg;
        cell.n_q = n_q;
        cell.schedule = schedule_for(cfg, ratios);
        row.update_layers = cell.schedule.update_layers;
        cell.validate();
        row.flops = count_macs(cell.encoder, cell.schedule, cell.lattice(), n_q, cell.queries.content_dim);
        if (options.run_bench || options.measure_recall) {
          auto it = cache.find(n_q);
          if (it == cache.end()) it = cache.emplace(n_q, train_for(cell, n_q).params).first;
          if (options.run_bench) row.bench = benchmark(cell, it->second);
          if (options.measure_recall) row.recall = backbone_recall(cell, cell.schedule, it->second);
        }
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace toc3d::prof
