#pragma once

// Run configuration: INI file with [encoder], [schedule], [scene], [train],
// [bench] and [run] sections, plus seed overrides.

#include "toc3d/encoder.hpp"
#include "toc3d/mqts.hpp"
#include "toc3d/scene_sim.hpp"
#include "toc3d/training.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace toc3d::prof {

enum class Precision { f64, f32 };

std::string to_string(Precision p);
Precision parse_precision(const std::string& s);

struct RigParams {
  int views = 6;
  int height = 64;
  int width = 160;
  double hfov_deg = 70.0;
  double mount_height = 1.5;
};

struct BenchConfig {
  int warmup = 10;
  int iterations = 30;
  double min_sample_ms = 5.0;  // forwards are batched until one sample takes this long
};

struct RunConfig {
  router::EncoderConfig encoder = router::EncoderConfig::desk();
  mqts::CompressionSchedule schedule = mqts::CompressionSchedule::faster(12);
  RigParams rig;
  sim::SceneConfig scene;
  sim::QuerySimConfig queries;
  sim::TokenSynthConfig tokens;
  mqts::TrainConfig train;
  int n_q = 64;  // queries kept by the scorer
  int train_samples = 200;
  int eval_samples = 50;
  BenchConfig bench;
  std::uint64_t seed = 0;
  Precision precision = Precision::f64;
  std::filesystem::path output_dir = "toc3d_out";

  /// Rig, patch size and simulator settings bundled for scene-sim.
  sim::SceneSetup setup() const;
  TokenLattice lattice() const;
  /// Throws std::invalid_argument naming the first inconsistent field.
  void validate() const;
  /// Canonical INI text; parse_run_config(to_ini()) reproduces every field.
  std::string to_ini() const;
  /// 16 hex digits of FNV-1a over to_ini(); the seed is part of the text.
  std::string digest() const;

  static RunConfig desk();
  /// Desk encoder on a 6 x 160 x 400 rig (1500 tokens), single precision.
  static RunConfig bench_scale();
};

/// Missing keys keep their defaults. Unknown sections or keys are errors.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& ini_text, const std::string& source = "<string>");

/// Sets one "section.key" field from text, as if it appeared in the file.
void apply_override(RunConfig& cfg, const std::string& dotted_key, const std::string& value);

/// Seed precedence: flag, then TOC3D_SEED, then whatever the file set.
void apply_seed_overrides(RunConfig& cfg, std::optional<std::uint64_t> flag_seed);

}  // namespace toc3d::prof
