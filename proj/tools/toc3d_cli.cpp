// toc3d: command-line front end for the simulator, scorer training,
// benchmarking, analytic profiling, sweeps and heatmap dumps.
//
// Exit codes: 0 success, 1 a self-check failed, 2 usage error, 3 runtime error.

#include "toc3d/bench.hpp"
#include "toc3d/checkpoint.hpp"
#include "toc3d/flops.hpp"
#include "toc3d/heatmap_dump.hpp"
#include "toc3d/report.hpp"
#include "toc3d/router.hpp"
#include "toc3d/run_config.hpp"
#include "toc3d/scene_io.hpp"
#include "toc3d/sweep.hpp"
#include "toc3d/training.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

using namespace toc3d;
using namespace toc3d::prof;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "INI run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Seed (beats TOC3D_SEED, which beats the file)");
  cmd->add_option("--set", c.overrides, "Override a setting, e.g. --set encoder.layers=6");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig::desk() : load_run_config(c.config);
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects section.key=value, got '" + o + "'");
    apply_override(cfg, o.substr(0, eq), o.substr(eq + 1));
  }
  apply_seed_overrides(cfg, c.seed);
  cfg.validate();
  return cfg;
}

int check(bool ok, const std::string& what) {
  std::printf("self-check %-44s %s\n", what.c_str(), ok ? "ok" : "FAILED");
  return ok ? 0 : kExitCheckFailed;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::istringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw UsageError("bad number '" + item + "' in '" + s + "'");
    }
  }
  return out;
}

bool additive(const FlopReport& r) {
  std::int64_t base = 0, comp = 0, mq = 0;
  for (const auto& l : r.layers) {
    base += l.baseline_macs;
    comp += l.backbone_macs();
    mq += l.mqts_macs;
  }
  return base == r.baseline_macs && comp == r.compressed_macs && mq == r.mqts_macs;
}

void print_flops(const FlopReport& r) {
  std::printf("# %s\n", FlopReport::convention().c_str());
  std::printf("%5s %8s %16s %16s %14s\n", "layer", "tokens", "attention MACs", "MLP MACs", "MQTS MACs");
  for (const auto& l : r.layers) {
    std::printf("%5d %8lld %16lld %16lld %14lld\n", l.layer, static_cast<long long>(l.tokens),
                static_cast<long long>(l.attention_macs), static_cast<long long>(l.mlp_macs),
                static_cast<long long>(l.mqts_macs));
  }
  std::printf("baseline   %.3f GMACs  %.3f GFLOPs\n", r.baseline_macs / 1e9, FlopReport::flops(r.baseline_macs) / 1e9);
  std::printf("compressed %.3f GMACs  %.3f GFLOPs  (%s)\n", r.compressed_macs / 1e9,
              FlopReport::flops(r.compressed_macs) / 1e9, format_delta(r.reduction).c_str());
  std::printf("scorer     %.3f GMACs  (with scorer: %s)\n", r.mqts_macs / 1e9,
              format_delta(r.reduction_with_overhead).c_str());
  std::printf("memory     %.1f MiB (analytic)\n", r.memory_bytes / 1048576.0);
}

void write_report(const Report& rep, const std::string& format, const std::string& out) {
  if (out.empty()) return;
  emit_report(rep, parse_report_format(format), out);
  std::printf("report written to %s\n", out.c_str());
}

int cmd_generate(const Common& c, const std::string& out, int count) {
  const RunConfig cfg = resolve(c);
  const auto setup = cfg.setup();
  const auto samples = sim::simulate_samples(setup, count, sim::derive_seed(cfg.seed, 20));
  const auto paths = sim::write_dataset(samples, out);
  std::printf("wrote %zu frames to %s\n", paths.size(), out.c_str());
  int rc = 0;
  if (!samples.empty()) {
    const auto back = sim::read_sample(paths.front(), setup);
    rc |= check(back.target.values == samples.front().target.values &&
                    back.tokens.tokens == samples.front().tokens.tokens,
                "first frame round-trips");
  }
  return rc;
}

int cmd_train(const Common& c, const std::string& data_dir, const std::string& out) {
  const RunConfig cfg = resolve(c);
  const auto setup = cfg.setup();
  mqts::TrainResult res;
  if (data_dir.empty()) {
    res = train_for(cfg, cfg.n_q);
  } else {
    const auto data = sim::read_dataset(data_dir, setup);
    Rng rng(sim::derive_seed(cfg.seed, 8));
    auto tc = cfg.train;
    tc.seed = cfg.seed;
    res = mqts::train_scorer(data, mqts::ScorerParams::init(cfg.encoder.dim, cfg.queries.content_dim, cfg.n_q, rng),
                             tc);
  }
  for (std::size_t e = 0; e < res.epoch_loss.size(); ++e) {
    if (e == 0 || (e + 1) % 10 == 0 || e + 1 == res.epoch_loss.size()) {
      std::printf("epoch %3zu  loss %.5f\n", e + 1, res.epoch_loss[e]);
    }
  }
  const auto eval = sim::simulate_samples(setup, cfg.eval_samples, sim::derive_seed(cfg.seed, 21));
  const auto recall = mqts::foreground_recall(eval, res.params, 0.5);
  std::printf("held-out foreground recall at rho=0.5: %.4f (%lld/%lld)\n", recall.recall(), recall.recalled,
              recall.foreground);
  int rc = check(std::isfinite(res.epoch_loss.back()), "final loss finite");
  if (!out.empty()) {
    save_scorer(res.params, out);
    const auto back = load_scorer(out);
    bool same = true;
    std::vector<std::span<const double>> a;
    mqts::for_each_tensor(res.params, [&](const std::string&, std::span<const double> d, auto, auto) { a.push_back(d); });
    std::size_t k = 0;
    mqts::for_each_tensor(back, [&](const std::string&, std::span<const double> d, auto, auto) {
      same = same && std::equal(d.begin(), d.end(), a[k++].begin());
    });
    std::printf("scorer saved to %s\n", out.c_str());
    rc |= check(same, "checkpoint round-trips");
  }
  return rc;
}

int cmd_run(const Common& c, const std::string& scorer_path, const std::string& format, const std::string& out) {
  const RunConfig cfg = resolve(c);
  std::optional<mqts::ScorerParams> scorer;
  if (!scorer_path.empty()) scorer = load_scorer(scorer_path);
  const BenchComparison b = benchmark(cfg, scorer);
  std::printf("config %s, %d core(s), %d thread(s), batch %d\n", b.baseline.digest.c_str(), b.baseline.cores,
              b.baseline.threads, b.baseline.batch);
  std::printf("baseline   %9.3f ms +- %.3f  (%d iterations after %d warmup)\n", b.baseline.mean_ms, b.baseline.std_ms,
              b.baseline.iterations, b.baseline.warmup);
  std::printf("compressed %9.3f ms +- %.3f  (%s, separation %.1f sigma)\n", b.compressed.mean_ms, b.compressed.std_ms,
              format_delta(1.0 - b.ratio()).c_str(), b.separation_sigma);
  int rc = check(b.baseline.iterations >= 10, "at least 10 timed iterations");
  if (b.max_abs_diff) {
    const double tol = cfg.precision == Precision::f64 ? 1e-10 : 1e-4;
    std::printf("all-ones schedule: max |compressed - baseline| = %.3g\n", *b.max_abs_diff);
    rc |= check(*b.max_abs_diff <= tol, "all-ones schedule matches plain encoder");
  }
  Report rep;
  rep.config_digest = cfg.digest();
  SweepRow row;
  row.update_layers = cfg.schedule.update_layers;
  row.ratios = cfg.schedule.ratios;
  row.n_q = scorer ? scorer->n_q() : cfg.n_q;
  row.flops = count_macs(cfg.encoder, cfg.schedule, cfg.lattice(), row.n_q, cfg.queries.content_dim);
  row.bench = b;
  rep.rows.push_back(row);
  write_report(rep, format, out);
  return rc;
}

int cmd_flops(const Common& c, bool vit_large, int n_q, const std::string& format, const std::string& out) {
  RunConfig cfg = resolve(c);
  TokenLattice lattice = cfg.lattice();
  if (vit_large) {
    cfg.encoder = router::EncoderConfig::vit_large();
    if (cfg.schedule.ratios.size() == 3) {
      cfg.schedule = mqts::CompressionSchedule::at_quarters(24, cfg.schedule.ratios[0], cfg.schedule.ratios[1],
                                                            cfg.schedule.ratios[2]);
    }
    lattice = {6, 320 / 16, 800 / 16};
  }
  const int nq = n_q > 0 ? n_q : cfg.n_q;
  const FlopReport r = count_macs(cfg.encoder, cfg.schedule, lattice, nq, cfg.queries.content_dim);
  print_flops(r);
  Report rep;
  rep.config_digest = cfg.digest();
  rep.rows.push_back({cfg.schedule.update_layers, cfg.schedule.ratios, nq, r, std::nullopt, std::nullopt, ""});
  write_report(rep, format, out);
  return check(additive(r), "totals equal the per-layer sums") |
         check(r.reduction >= 0.0 && r.reduction < 1.0, "reduction in [0, 1)");
}

int cmd_sweep(const Common& c, const std::string& ratios, const std::string& nqs, bool no_bench, bool no_recall,
              const std::string& format, const std::string& out) {
  const RunConfig cfg = resolve(c);
  std::vector<std::vector<double>> ratio_sets;
  std::istringstream rs(ratios);
  std::string item;
  while (std::getline(rs, item, ';')) {
    if (!item.empty()) ratio_sets.push_back(parse_doubles(item));
  }
  std::vector<int> nq_set;
  for (double v : parse_doubles(nqs)) nq_set.push_back(static_cast<int>(v));
  SweepOptions opt;
  opt.run_bench = !no_bench;
  opt.measure_recall = !no_recall;
  const auto rows = sweep(cfg, ratio_sets, nq_set, opt);

  std::printf("%-18s %5s %12s %9s %11s %8s  %s\n", "ratios", "N_q", "GMACs", "delta", "time ms", "recall", "error");
  bool failures = false, ok = true;
  for (const auto& r : rows) {
    std::string rs_text;
    for (double v : r.ratios) rs_text += (rs_text.empty() ? "" : ",") + std::to_string(v).substr(0, 4);
    std::printf("%-18s %5d %12.3f %9s %11s %8s  %s\n", rs_text.c_str(), r.n_q, r.flops.compressed_macs / 1e9,
                format_delta(r.flops.reduction).c_str(),
                r.bench ? std::to_string(r.bench->compressed.mean_ms).c_str() : "-",
                r.recall ? std::to_string(*r.recall).substr(0, 6).c_str() : "-", r.error.c_str());
    failures |= !r.error.empty();
    if (r.error.empty()) ok = ok && additive(r.flops);
  }
  Report rep;
  rep.config_digest = cfg.digest();
  rep.rows = rows;
  write_report(rep, format, out);
  const int rc = check(ok, "totals equal the per-layer sums");
  if (failures) {
    std::fprintf(stderr, "some sweep cells failed; see the error column\n");
    return rc ? rc : kExitRuntime;
  }
  return rc;
}

int cmd_dump(const Common& c, const std::string& scorer_path, const std::string& out, std::uint64_t sample,
             bool mask) {
  const RunConfig cfg = resolve(c);
  const auto setup = cfg.setup();
  const auto s = sim::simulate_sample(setup, sim::derive_seed(cfg.seed, 1000 + sample));
  mqts::ScorerParams scorer;
  if (scorer_path.empty()) {
    Rng rng(sim::derive_seed(cfg.seed, 8));
    scorer = mqts::ScorerParams::init(cfg.encoder.dim, cfg.queries.content_dim, cfg.n_q, rng);
  } else {
    scorer = load_scorer(scorer_path);
  }
  const auto score = mqts::score_tokens(s.tokens.tokens, s.queries, scorer);
  const auto coords = s.tokens.lattice.coords();
  std::optional<mqts::TokenPartition> part;
  if (mask) {
    const double rho = cfg.schedule.ratios.empty() ? 0.5 : cfg.schedule.ratios.front();
    part = mqts::split_tokens(score.scores, rho);
  }
  const auto paths = dump_heatmap(score, coords, s.tokens.lattice, out, "score", part ? &*part : nullptr);
  for (const auto& p : paths) std::printf("%s\n", p.c_str());
  const auto first = read_pgm(paths.front());
  return check(static_cast<int>(paths.size()) == s.tokens.lattice.views * (mask ? 2 : 1), "one image per view") |
         check(first.width == s.tokens.lattice.cols && first.height == s.tokens.lattice.rows,
               "image size is the lattice shape");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"toc3d: token compression for multi-view 3D detection backbones"};
  app.require_subcommand(1);

  Common common;
  std::string out, data_dir, scorer_path, format = "json", report_out, ratios = "0.7,0.5,0.5;0.5,0.4,0.3;0.3,0.2,0.1",
                                           nqs = "64";
  int count = 10, n_q = 0;
  bool vit_large = false, no_bench = false, no_recall = false, mask = false;
  std::uint64_t sample = 0;

  auto* gen = app.add_subcommand("generate", "Simulate frames and write TOC3D-SCENE records");
  add_common(gen, common);
  gen->add_option("-o,--out", out, "Output directory")->required();
  gen->add_option("-n,--count", count, "Number of frames")->check(CLI::NonNegativeNumber);

  auto* train = app.add_subcommand("train-scorer", "Train the importance scorer on simulated frames");
  add_common(train, common);
  train->add_option("--data", data_dir, "Directory of .scene records (default: simulate)");
  train->add_option("-o,--out", out, "Scorer checkpoint to write");

  auto* run = app.add_subcommand("run", "Benchmark the plain and compressed backbones");
  add_common(run, common);
  run->add_option("--scorer", scorer_path, "Scorer checkpoint (default: untrained)");
  run->add_option("--format", format, "Report format: json or csv");
  run->add_option("-o,--out", report_out, "Report path");

  auto* flops = app.add_subcommand("flops", "Analytic MAC/FLOP counts");
  add_common(flops, common);
  flops->add_flag("--vit-large", vit_large, "ViT-L shape at 6 x 320 x 800");
  flops->add_option("--nq", n_q, "Scorer queries (default: config)");
  flops->add_option("--format", format, "Report format: json or csv");
  flops->add_option("-o,--out", report_out, "Report path");

  auto* sw = app.add_subcommand("sweep", "Keeping-ratio x N_q grid");
  add_common(sw, common);
  sw->add_option("--ratios", ratios, "Ratio sets, ';' between sets and ',' within");
  sw->add_option("--nq", nqs, "Comma-separated N_q values");
  sw->add_flag("--no-bench", no_bench, "Skip timing");
  sw->add_flag("--no-recall", no_recall, "Skip scorer training and recall");
  sw->add_option("--format", format, "Report format: json or csv");
  sw->add_option("-o,--out", report_out, "Report path");

  auto* dump = app.add_subcommand("dump-heatmap", "Write per-view importance graymaps");
  add_common(dump, common);
  dump->add_option("--scorer", scorer_path, "Scorer checkpoint (default: untrained)");
  dump->add_option("-o,--out", out, "Output directory")->required();
  dump->add_option("--sample", sample, "Which simulated frame");
  dump->add_flag("--mask", mask, "Also write the salient-token mask");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (!report_out.empty()) parse_report_format(format);
    if (*gen) return cmd_generate(common, out, count);
    if (*train) return cmd_train(common, data_dir, out);
    if (*run) return cmd_run(common, scorer_path, format, report_out);
    if (*flops) return cmd_flops(common, vit_large, n_q, format, report_out);
    if (*sw) return cmd_sweep(common, ratios, nqs, no_bench, no_recall, format, report_out);
    if (*dump) return cmd_dump(common, scorer_path, out, sample, mask);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
