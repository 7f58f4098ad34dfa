#include "toc3d/scene_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace toc3d::sim {

namespace {

constexpr double kMinDepth = 1e-6;

struct ClassPrior {
  Vec3 size;
  double max_speed;
};

const ClassPrior& class_prior(int class_id) {
  static const ClassPrior priors[kNumClasses] = {
      {{4.5, 1.9, 1.6}, 15.0},  // car
      {{0.7, 0.7, 1.8}, 2.0},   // pedestrian
      {{8.0, 2.6, 3.2}, 12.0},  // truck
  };
  return priors[class_id];
}

Mat4 pose_from_yaw(double yaw, const Vec3& t) {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
  m.topRightCorner<3, 1>() = t;
  return m;
}

Vec3 transform_point(const Mat4& m, const Vec3& p) {
  return m.topLeftCorner<3, 3>() * p + m.topRightCorner<3, 1>();
}

double soft_inside(double normalized_distance) {
  return sigmoid(6.0 * (1.0 - normalized_distance));
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Mat4 rigid_inverse(const Mat4& m) {
  Mat4 inv = Mat4::Identity();
  const Mat3 rt = m.topLeftCorner<3, 3>().transpose();
  inv.topLeftCorner<3, 3>() = rt;
  inv.topRightCorner<3, 1>() = -rt * m.topRightCorner<3, 1>();
  return inv;
}

void CameraRig::validate() const {
  if (intrinsics.size() != extrinsics.size() || intrinsics.empty()) {
    throw std::invalid_argument("camera rig: need matching, nonempty intrinsics and extrinsics");
  }
  if (height <= 0 || width <= 0) throw std::invalid_argument("camera rig: empty image size");
  for (int v = 0; v < views(); ++v) {
    if (std::abs(intrinsics[v].determinant()) < 1e-12) {
      throw std::invalid_argument("camera rig: singular intrinsics for view " + std::to_string(v));
    }
    if (!is_rigid(extrinsics[v], 1e-9)) {
      throw std::invalid_argument("camera rig: non-rigid extrinsics for view " + std::to_string(v));
    }
  }
}

CameraRig CameraRig::surround(int views, int height, int width, double hfov_deg,
                              double mount_height) {
  if (views <= 0) throw std::invalid_argument("camera rig: views must be positive");
  CameraRig rig;
  rig.height = height;
  rig.width = width;
  const double f = 0.5 * width / std::tan(0.5 * hfov_deg * M_PI / 180.0);
  const Vec3 mount(0.0, 0.0, mount_height);
  for (int v = 0; v < views; ++v) {
    const double yaw = 2.0 * M_PI * v / views;
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    Mat3 k = Mat3::Identity();
    k(0, 0) = f;
    k(1, 1) = f;
    k(0, 2) = 0.5 * width;
    k(1, 2) = 0.5 * height;
    // Rows are the camera axes expressed in ego coordinates.
    Mat3 r;
    r << s, -c, 0.0,   //
        0.0, 0.0, -1.0,  //
        c, s, 0.0;
    Mat4 e = Mat4::Identity();
    e.topLeftCorner<3, 3>() = r;
    e.topRightCorner<3, 1>() = -r * mount;
    rig.intrinsics.push_back(k);
    rig.extrinsics.push_back(e);
  }
  return rig;
}

Sequence generate_sequence(RngState seed, const SceneConfig& config) {
  if (config.n_frames < 2) throw std::invalid_argument("generate_sequence: need at least 2 frames");
  if (config.n_objects < 0) throw std::invalid_argument("generate_sequence: negative object count");
  Rng rng(seed);

  const double ego_speed = rng.uniform(0.0, config.ego_speed_max);
  const double yaw_rate = rng.normal(0.0, config.yaw_rate_std);
  const double yaw0 = rng.uniform(-M_PI, M_PI);

  std::vector<SceneObject> initial;
  initial.reserve(config.n_objects);
  for (int i = 0; i < config.n_objects; ++i) {
    SceneObject obj;
    obj.class_id = rng.uniform_int(0, kNumClasses - 1);
    const ClassPrior& prior = class_prior(obj.class_id);
    obj.size = prior.size * rng.uniform(0.85, 1.15);
    const double r = rng.uniform(config.range_min, config.range_max);
    const double bearing = rng.uniform(-M_PI, M_PI);
    const Vec3 rel(r * std::cos(bearing), r * std::sin(bearing), 0.5 * obj.size.z());
    obj.center = transform_point(pose_from_yaw(yaw0, Vec3::Zero()), rel);
    if (rng.uniform() < 0.7) {
      const double heading = rng.uniform(-M_PI, M_PI);
      const double speed = rng.uniform(0.0, std::min(prior.max_speed, config.v_max));
      obj.velocity = Vec3(speed * std::cos(heading), speed * std::sin(heading), 0.0);
    }
    initial.push_back(obj);
  }

  Sequence seq;
  Vec3 ego_pos = Vec3::Zero();
  double yaw = yaw0;
  for (int k = 0; k < config.n_frames; ++k) {
    const double t = k * config.frame_dt;
    if (k > 0) {
      // Midpoint integration of a unicycle with constant speed and yaw rate.
      const double mid = yaw + 0.5 * yaw_rate * config.frame_dt;
      ego_pos += ego_speed * config.frame_dt * Vec3(std::cos(mid), std::sin(mid), 0.0);
      yaw += yaw_rate * config.frame_dt;
    }
    Frame frame;
    frame.timestamp = t;
    frame.world_from_ego = pose_from_yaw(yaw, ego_pos);
    const Mat4 ego_from_world = rigid_inverse(frame.world_from_ego);
    const Mat3 r_ew = ego_from_world.topLeftCorner<3, 3>();
    for (const SceneObject& obj0 : initial) {
      SceneObject world = obj0;
      world.center = obj0.center + obj0.velocity * t;
      SceneObject ego = world;
      ego.center = transform_point(ego_from_world, world.center);
      ego.velocity = r_ew * world.velocity;
      frame.world_objects.push_back(world);
      frame.objects.push_back(ego);
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

std::vector<BoxProjection> project_boxes(std::span<const SceneObject> objects, int view,
                                         const CameraRig& rig) {
  if (view < 0 || view >= rig.views()) {
    throw std::out_of_range("project_boxes: view " + std::to_string(view) + " out of range");
  }
  const Mat3& k = rig.intrinsics[view];
  const Mat4& e = rig.extrinsics[view];
  std::vector<BoxProjection> out;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const SceneObject& obj = objects[i];
    const Vec3 pc = transform_point(e, obj.center);
    if (pc.z() <= kMinDepth) continue;
    const Vec3 uvw = k * pc;
    const Vec2 uv(uvw.x() / uvw.z(), uvw.y() / uvw.z());
    if (uv.x() < 0.0 || uv.x() >= rig.width || uv.y() < 0.0 || uv.y() >= rig.height) continue;

    Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
    Vec2 hi = -lo;
    bool corners_ok = true;
    for (int c = 0; c < 8; ++c) {
      const Vec3 offset(((c & 1) ? 0.5 : -0.5) * obj.size.x(), ((c & 2) ? 0.5 : -0.5) * obj.size.y(),
                        ((c & 4) ? 0.5 : -0.5) * obj.size.z());
      const Vec3 q = transform_point(e, obj.center + offset);
      if (q.z() <= kMinDepth) {
        corners_ok = false;
        break;
      }
      const Vec3 h = k * q;
      const Vec2 p(h.x() / h.z(), h.y() / h.z());
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    BoxProjection proj;
    proj.view = view;
    proj.object = static_cast<int>(i);
    proj.class_id = obj.class_id;
    proj.center_px = uv;
    proj.depth = pc.z();
    if (corners_ok) {
      proj.extent_px = hi - lo;
    } else {
      proj.extent_px = Vec2(k(0, 0) * std::hypot(obj.size.x(), obj.size.y()) / pc.z(),
                            k(1, 1) * obj.size.z() / pc.z());
    }
    out.push_back(proj);
  }
  return out;
}

std::vector<BoxProjection> project_all_views(std::span<const SceneObject> objects,
                                             const CameraRig& rig) {
  std::vector<BoxProjection> out;
  for (int v = 0; v < rig.views(); ++v) {
    auto p = project_boxes(objects, v, rig);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

double gaussian_radius(double height, double width, double min_overlap) {
  const double a1 = 1.0;
  const double b1 = height + width;
  const double c1 = width * height * (1.0 - min_overlap) / (1.0 + min_overlap);
  const double r1 = (b1 + std::sqrt(b1 * b1 - 4.0 * a1 * c1)) / 2.0;

  const double a2 = 4.0;
  const double b2 = 2.0 * (height + width);
  const double c2 = (1.0 - min_overlap) * width * height;
  const double r2 = (b2 + std::sqrt(b2 * b2 - 4.0 * a2 * c2)) / 2.0;

  const double a3 = 4.0 * min_overlap;
  const double b3 = -2.0 * min_overlap * (height + width);
  const double c3 = (min_overlap - 1.0) * width * height;
  const double r3 = (b3 + std::sqrt(b3 * b3 - 4.0 * a3 * c3)) / 2.0;
  return std::min({r1, r2, r3});
}

HeatmapTarget render_gaussian_targets(std::span<const BoxProjection> projections,
                                      const CameraRig& rig, int patch) {
  if (patch <= 0 || rig.height % patch != 0 || rig.width % patch != 0) {
    throw std::invalid_argument("render_gaussian_targets: patch " + std::to_string(patch) +
                                " does not divide image " + std::to_string(rig.height) + "x" +
                                std::to_string(rig.width));
  }
  HeatmapTarget target;
  target.lattice = {rig.views(), rig.height / patch, rig.width / patch};
  target.values.assign(target.lattice.size(), 0.0);
  for (const BoxProjection& p : projections) {
    const int ci = static_cast<int>(std::floor(p.center_px.y() / patch));
    const int cj = static_cast<int>(std::floor(p.center_px.x() / patch));
    const double r = gaussian_radius(p.extent_px.y() / patch, p.extent_px.x() / patch);
    const double radius = std::max(0.0, std::floor(r));
    const double sigma = (2.0 * radius + 1.0) / 6.0;
    const double denom = 2.0 * sigma * sigma;
    for (int i = 0; i < target.lattice.rows; ++i) {
      for (int j = 0; j < target.lattice.cols; ++j) {
        const double d2 = static_cast<double>((i - ci) * (i - ci) + (j - cj) * (j - cj));
        double& cell = target.values[target.lattice.index(p.view, i, j)];
        cell = std::max(cell, std::exp(-d2 / denom));
      }
    }
  }
  return target;
}

HistoryQuerySet simulate_history_queries(const Frame& history, const Frame& current,
                                         const QuerySimConfig& config, RngState seed) {
  const int n_fg = static_cast<int>(history.objects.size());
  if (config.n_total < n_fg) {
    throw std::invalid_argument("simulate_history_queries: n_total " + std::to_string(config.n_total) +
                                " < " + std::to_string(n_fg) + " foreground objects");
  }
  Rng rng(seed);
  const int n = config.n_total;
  HistoryQuerySet qs;
  qs.contents.resize(n, config.content_dim);
  qs.refpoints.resize(n, 4);
  qs.velocities.resize(n, 3);
  qs.confidences.resize(n);
  qs.object_ids.resize(n);
  qs.dt.assign(n, current.timestamp - history.timestamp);
  qs.ego_transform = rigid_inverse(current.world_from_ego) * history.world_from_ego;

  for (int i = 0; i < n; ++i) {
    Vec3 ref;
    Vec3 vel;
    if (i < n_fg) {
      const SceneObject& obj = history.objects[i];
      ref = obj.center;
      vel = obj.velocity;
      if (config.noise_std > 0.0) {
        for (int a = 0; a < 3; ++a) ref[a] += rng.normal(0.0, config.noise_std);
      }
      if (config.velocity_noise > 0.0) {
        for (int a = 0; a < 2; ++a) vel[a] += rng.normal(0.0, config.velocity_noise);
      }
      qs.confidences[i] = rng.beta(8.0, 2.0);
      qs.object_ids[i] = i;
    } else {
      const double r = config.background_range;
      ref = Vec3(rng.uniform(-r, r), rng.uniform(-r, r), rng.uniform(0.0, 3.0));
      vel = Vec3(rng.normal(0.0, 1.0), rng.normal(0.0, 1.0), 0.0);
      qs.confidences[i] = rng.beta(2.0, 8.0);
      qs.object_ids[i] = -1;
    }
    qs.refpoints.row(i) << ref.x(), ref.y(), ref.z(), 1.0;
    qs.velocities.row(i) = vel.transpose();
    qs.contents.row(i) = rng.unit_vector(config.content_dim).transpose();
  }

  // Decoder output order carries no meaning; shuffle so position leaks nothing.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(0, i)]);
  return qs.select(order);
}

TokenGrid synthesize_tokens(const Frame& frame, const CameraRig& rig, int patch,
                            const TokenSynthConfig& config, RngState seed) {
  if (patch <= 0 || rig.height % patch != 0 || rig.width % patch != 0) {
    throw std::invalid_argument("synthesize_tokens: patch does not divide the image");
  }
  constexpr int kClutter = 8;
  constexpr int kFeatures = 2 + kNumClasses + 3 + 2 + kClutter;

  Rng embed_rng(config.embed_seed);
  Matrix projection(config.dim, kFeatures);
  for (Eigen::Index i = 0; i < projection.size(); ++i) projection.data()[i] = embed_rng.normal();

  Rng rng(seed);
  TokenGrid grid;
  grid.lattice = {rig.views(), rig.height / patch, rig.width / patch};
  grid.tokens.resize(grid.lattice.size(), config.dim);
  Vector feat(kFeatures);
  for (int v = 0; v < rig.views(); ++v) {
    const auto boxes = project_boxes(frame.objects, v, rig);
    const Mat3 k_inv = rig.intrinsics[v].inverse();
    const Mat3 r_ce = rig.extrinsics[v].topLeftCorner<3, 3>();
    for (int i = 0; i < grid.lattice.rows; ++i) {
      for (int j = 0; j < grid.lattice.cols; ++j) {
        const Vec2 px((j + 0.5) * patch, (i + 0.5) * patch);
        double objectness = 0.0;
        const BoxProjection* best = nullptr;
        for (const BoxProjection& b : boxes) {
          const double hx = std::max(0.5 * b.extent_px.x(), 0.5 * patch);
          const double hy = std::max(0.5 * b.extent_px.y(), 0.5 * patch);
          const double o = soft_inside(std::abs(px.x() - b.center_px.x()) / hx) *
                           soft_inside(std::abs(px.y() - b.center_px.y()) / hy);
          if (o > objectness) {
            objectness = o;
            best = &b;
          }
        }
        feat.setZero();
        feat[0] = objectness;
        if (best) {
          feat[1] = objectness * std::min(1.0, 10.0 / best->depth);
          feat[2 + best->class_id] = objectness;
        }
        const Vec3 ray = (r_ce.transpose() * (k_inv * Vec3(px.x(), px.y(), 1.0))).normalized();
        feat.segment<3>(2 + kNumClasses) = ray;
        feat[5 + kNumClasses] = (i + 0.5) / grid.lattice.rows - 0.5;
        feat[6 + kNumClasses] = (j + 0.5) / grid.lattice.cols - 0.5;
        for (int c = 0; c < kClutter; ++c) feat[7 + kNumClasses + c] = rng.normal(0.0, config.clutter_std);
        auto row = grid.tokens.row(grid.lattice.index(v, i, j));
        row.noalias() = (projection * feat).transpose();
        for (int c = 0; c < config.dim; ++c) row[c] += rng.normal(0.0, config.noise_std);
      }
    }
  }
  return grid;
}

SceneSetup SceneSetup::desk() {
  SceneSetup s;
  s.rig = CameraRig::surround(6, 64, 160);
  s.patch = 16;
  return s;
}

SimSample simulate_sample(const SceneSetup& setup, std::uint64_t seed) {
  SceneConfig scene = setup.scene;
  scene.n_frames = std::max(scene.n_frames, 2);
  const Sequence seq = generate_sequence({derive_seed(seed, 0)}, scene);
  SimSample s;
  s.history = seq.frames[seq.frames.size() - 2];
  s.current = seq.frames.back();
  s.queries = simulate_history_queries(s.history, s.current, setup.queries, {derive_seed(seed, 1)});
  s.token_seed = derive_seed(seed, 2);
  s.tokens = synthesize_tokens(s.current, setup.rig, setup.patch, setup.tokens, {s.token_seed});
  const auto projections = project_all_views(s.current.objects, setup.rig);
  s.target = render_gaussian_targets(projections, setup.rig, setup.patch);
  return s;
}

std::vector<SimSample> simulate_samples(const SceneSetup& setup, int count, std::uint64_t base_seed) {
  std::vector<SimSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(simulate_sample(setup, derive_seed(base_seed, 100 + i)));
  return out;
}

}  // namespace toc3d::sim
