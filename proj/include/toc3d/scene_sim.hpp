#pragma once

// Synthetic multi-view driving scenes: object tracks, a surround camera rig,
// box projection, CenterNet-style heatmap targets, simulated history queries
// and synthetic image tokens.

#include "toc3d/numerics.hpp"
#include "toc3d/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace toc3d::sim {

inline constexpr int kNumClasses = 3;  // car, pedestrian, truck

struct SceneObject {
  Vec3 center = Vec3::Zero();    // meters
  Vec3 size = Vec3::Ones();      // length, width, height; all > 0
  Vec3 velocity = Vec3::Zero();  // m/s
  int class_id = 0;
};

struct CameraRig {
  std::vector<Mat3> intrinsics;  // pinhole K per view
  std::vector<Mat4> extrinsics;  // ego -> camera per view (x right, y down, z forward)
  int height = 0;
  int width = 0;

  int views() const { return static_cast<int>(intrinsics.size()); }
  void validate() const;

  /// Cameras evenly spaced in yaw around an ego vehicle (x forward, y left,
  /// z up), mounted at the given height, sharing one horizontal field of view.
  static CameraRig surround(int views, int height, int width, double hfov_deg = 70.0,
                            double mount_height = 1.5);
};

struct SceneConfig {
  int n_objects = 8;
  int n_frames = 2;
  double frame_dt = 0.5;       // seconds between frames
  double v_max = 15.0;         // m/s, object speed bound
  double range_min = 5.0;
  double range_max = 40.0;
  double ego_speed_max = 12.0;
  double yaw_rate_std = 0.1;   // rad/s
};

struct Frame {
  double timestamp = 0.0;
  Mat4 world_from_ego = Mat4::Identity();
  std::vector<SceneObject> objects;        // ego frame (velocity expressed in ego axes)
  std::vector<SceneObject> world_objects;  // world frame
};

struct Sequence {
  std::vector<Frame> frames;
};

/// Constant-velocity objects around a smoothly moving ego vehicle.
/// Requires n_frames >= 2 and n_objects >= 0.
Sequence generate_sequence(RngState seed, const SceneConfig& config);

struct BoxProjection {
  int view = 0;
  int object = 0;  // index into the projected object list
  int class_id = 0;
  Vec2 center_px = Vec2::Zero();
  Vec2 extent_px = Vec2::Zero();  // width, height
  double depth = 0.0;
};

/// Objects behind the camera or whose center falls outside the image are
/// skipped rather than reported as errors.
std::vector<BoxProjection> project_boxes(std::span<const SceneObject> objects, int view,
                                         const CameraRig& rig);
std::vector<BoxProjection> project_all_views(std::span<const SceneObject> objects,
                                             const CameraRig& rig);

/// CornerNet radius for a box of the given size at the given minimum IoU.
double gaussian_radius(double height, double width, double min_overlap = 0.7);

/// Gaussian center heatmap on the token lattice, rendered per view and then
/// flattened in TokenGrid order. Overlapping splats combine by max.
HeatmapTarget render_gaussian_targets(std::span<const BoxProjection> projections,
                                      const CameraRig& rig, int patch);

struct QuerySimConfig {
  int n_total = 256;
  int content_dim = 256;
  double noise_std = 0.5;       // meters, refpoint noise for foreground queries
  double velocity_noise = 0.3;  // m/s
  double background_range = 40.0;
};

/// Stand-in for decoder outputs of the history frame: one confident query
/// per object plus low-confidence background queries. Refpoints live in the
/// history ego frame; ego_transform maps history ego -> current ego.
HistoryQuerySet simulate_history_queries(const Frame& history, const Frame& current,
                                         const QuerySimConfig& config, RngState seed);

struct TokenSynthConfig {
  int dim = 256;
  std::uint64_t embed_seed = 0x70c3d;  // fixed projection shared by every scene
  double clutter_std = 0.5;
  double noise_std = 0.1;
};

/// Synthetic patch tokens: a fixed random projection of per-patch scene
/// features (objectness, depth, class, viewing ray, lattice position, clutter).
TokenGrid synthesize_tokens(const Frame& frame, const CameraRig& rig, int patch,
                            const TokenSynthConfig& config, RngState seed);

struct SceneSetup {
  CameraRig rig;
  int patch = 16;
  SceneConfig scene;
  QuerySimConfig queries;
  TokenSynthConfig tokens;

  TokenLattice lattice() const { return {rig.views(), rig.height / patch, rig.width / patch}; }
  /// 6 views of 64x160 with patch 16: 240 tokens of width 256.
  static SceneSetup desk();
};

/// One supervised example: queries from the previous frame, tokens and
/// targets from the current one.
struct SimSample {
  Frame history;
  Frame current;
  HistoryQuerySet queries;
  TokenGrid tokens;
  HeatmapTarget target;
  std::uint64_t token_seed = 0;  // tokens = synthesize_tokens(current, ..., token_seed)
};

SimSample simulate_sample(const SceneSetup& setup, std::uint64_t seed);
std::vector<SimSample> simulate_samples(const SceneSetup& setup, int count, std::uint64_t base_seed);

/// splitmix64 step; used to derive independent sub-seeds.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

Mat4 rigid_inverse(const Mat4& m);

}  // namespace toc3d::sim
