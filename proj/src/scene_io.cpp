#include "toc3d/scene_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace toc3d::sim {

using nlohmann::json;

namespace {

template <typename M>
json to_array(const M& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  }
  return a;
}

template <typename M>
void from_array(const json& a, M& m) {
  if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != m.rows() * m.cols()) {
    throw SceneFormatError("array of length " + std::to_string(a.size()) + " does not fit " +
                           shape_string(m.rows(), m.cols()));
  }
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = a[k++].get<double>();
  }
}

json object_json(const SceneObject& o) {
  return {{"center", to_array(o.center.transpose())},
          {"size", to_array(o.size.transpose())},
          {"velocity", to_array(o.velocity.transpose())},
          {"class", o.class_id}};
}

SceneObject object_from(const json& j) {
  SceneObject o;
  Eigen::RowVector3d v;
  from_array(j.at("center"), v);
  o.center = v.transpose();
  from_array(j.at("size"), v);
  o.size = v.transpose();
  from_array(j.at("velocity"), v);
  o.velocity = v.transpose();
  o.class_id = j.at("class").get<int>();
  return o;
}

json frame_json(const Frame& f) {
  json objs = json::array(), world = json::array();
  for (const auto& o : f.objects) objs.push_back(object_json(o));
  for (const auto& o : f.world_objects) world.push_back(object_json(o));
  return {{"timestamp", f.timestamp},
          {"world_from_ego", to_array(f.world_from_ego)},
          {"objects", objs},
          {"world_objects", world}};
}

Frame frame_from(const json& j) {
  Frame f;
  f.timestamp = j.at("timestamp").get<double>();
  from_array(j.at("world_from_ego"), f.world_from_ego);
  for (const auto& o : j.at("objects")) f.objects.push_back(object_from(o));
  for (const auto& o : j.at("world_objects")) f.world_objects.push_back(object_from(o));
  return f;
}

json queries_json(const HistoryQuerySet& q) {
  return {{"count", q.size()},
          {"content_dim", q.content_dim()},
          {"contents", to_array(q.contents)},
          {"refpoints", to_array(q.refpoints)},
          {"velocities", to_array(q.velocities)},
          {"confidences", q.confidences},
          {"dt", q.dt},
          {"ego_transform", to_array(q.ego_transform)},
          {"object_ids", q.object_ids}};
}

HistoryQuerySet queries_from(const json& j) {
  HistoryQuerySet q;
  const auto n = j.at("count").get<Eigen::Index>();
  const auto c = j.at("content_dim").get<Eigen::Index>();
  q.contents.resize(n, c);
  q.refpoints.resize(n, 4);
  q.velocities.resize(n, 3);
  from_array(j.at("contents"), q.contents);
  from_array(j.at("refpoints"), q.refpoints);
  from_array(j.at("velocities"), q.velocities);
  q.confidences = j.at("confidences").get<std::vector<double>>();
  q.dt = j.at("dt").get<std::vector<double>>();
  from_array(j.at("ego_transform"), q.ego_transform);
  q.object_ids = j.at("object_ids").get<std::vector<int>>();
  q.validate();
  return q;
}

}  // namespace

void write_sample(const SimSample& sample, const std::filesystem::path& path) {
  const auto& lat = sample.target.lattice;
  json body = {{"lattice", {{"views", lat.views}, {"rows", lat.rows}, {"cols", lat.cols}}},
               {"token_seed", sample.token_seed},
               {"history", frame_json(sample.history)},
               {"current", frame_json(sample.current)},
               {"queries", queries_json(sample.queries)},
               {"heatmap", sample.target.values}};
  std::ofstream out(path);
  if (!out) throw SceneFormatError("cannot open " + path.string() + " for writing");
  out << kSceneMagic << '\n' << body.dump() << '\n';
  if (!out) throw SceneFormatError("write failed for " + path.string());
}

SimSample read_sample(const std::filesystem::path& path, const SceneSetup& setup) {
  std::ifstream in(path);
  if (!in) throw SceneFormatError("cannot open " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != kSceneMagic) {
    throw SceneFormatError(path.string() + ": expected '" + std::string(kSceneMagic) + "', found '" + magic + "'");
  }
  try {
    const json body = json::parse(in);
    SimSample s;
    const auto& lat = body.at("lattice");
    s.target.lattice = {lat.at("views").get<int>(), lat.at("rows").get<int>(), lat.at("cols").get<int>()};
    if (s.target.lattice != setup.lattice()) {
      throw SceneFormatError("lattice does not match the scene setup");
    }
    s.target.values = body.at("heatmap").get<std::vector<double>>();
    if (static_cast<int>(s.target.values.size()) != s.target.lattice.size()) {
      throw SceneFormatError("heatmap length does not match lattice");
    }
    s.token_seed = body.at("token_seed").get<std::uint64_t>();
    s.history = frame_from(body.at("history"));
    s.current = frame_from(body.at("current"));
    s.queries = queries_from(body.at("queries"));
    s.tokens = synthesize_tokens(s.current, setup.rig, setup.patch, setup.tokens, {s.token_seed});
    return s;
  } catch (const json::exception& e) {
    throw SceneFormatError(path.string() + ": " + e.what());
  } catch (const SceneFormatError& e) {
    throw SceneFormatError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw SceneFormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::filesystem::path> write_dataset(std::span<const SimSample> samples,
                                                 const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw SceneFormatError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> paths;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[40];
    std::snprintf(name, sizeof name, "frame_%05zu.scene", i);
    paths.push_back(dir / name);
    write_sample(samples[i], paths.back());
  }
  return paths;
}

std::vector<SimSample> read_dataset(const std::filesystem::path& dir, const SceneSetup& setup) {
  if (!std::filesystem::is_directory(dir)) throw SceneFormatError(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> paths;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".scene") paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<SimSample> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(read_sample(p, setup));
  return out;
}

}  // namespace toc3d::sim
