#include "toc3d/run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace toc3d::prof {

std::string to_string(Precision p) { return p == Precision::f64 ? "f64" : "f32"; }

Precision parse_precision(const std::string& s) {
  if (s == "f64" || s == "double") return Precision::f64;
  if (s == "f32" || s == "float") return Precision::f32;
  throw std::invalid_argument("precision must be f64 or f32, got '" + s + "'");
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("trailing characters");
  return v;
}

long long parse_int(const std::string& s) {
  std::size_t used = 0;
  const long long v = std::stoll(s, &used);
  if (used != s.size()) throw std::invalid_argument("trailing characters");
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
  std::size_t used = 0;
  const std::uint64_t v = std::stoull(s, &used, 0);
  if (used != s.size()) throw std::invalid_argument("trailing characters");
  return v;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

template <typename T>
std::vector<T> split(const std::string& s) {
  std::vector<T> out;
  std::istringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    item = item.substr(b, item.find_last_not_of(" \t") - b + 1);
    if constexpr (std::is_floating_point_v<T>) {
      out.push_back(parse_double(item));
    } else {
      out.push_back(static_cast<T>(parse_int(item)));
    }
  }
  return out;
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

Field int_field(std::string sec, std::string key, int& ref) {
  return {std::move(sec), std::move(key), [&ref] { return std::to_string(ref); },
          [&ref](const std::string& s) { ref = static_cast<int>(parse_int(s)); }};
}

Field dbl_field(std::string sec, std::string key, double& ref) {
  return {std::move(sec), std::move(key), [&ref] { return fmt(ref); },
          [&ref](const std::string& s) { ref = parse_double(s); }};
}

Field u64_field(std::string sec, std::string key, std::uint64_t& ref) {
  return {std::move(sec), std::move(key), [&ref] { return std::to_string(ref); },
          [&ref](const std::string& s) { ref = parse_u64(s); }};
}

std::vector<Field> fields(RunConfig& c) {
  std::vector<Field> f;
  auto& e = c.encoder;
  f.push_back(int_field("encoder", "layers", e.layers));
  f.push_back(int_field("encoder", "dim", e.dim));
  f.push_back(int_field("encoder", "heads", e.heads));
  f.push_back(dbl_field("encoder", "mlp_ratio", e.mlp_ratio));
  f.push_back(int_field("encoder", "window_size", e.window_size));
  f.push_back({"encoder", "global_layers", [&e] { return join(e.global_attn_layers); },
               [&e](const std::string& s) { e.global_attn_layers = split<int>(s); }});
  f.push_back(int_field("encoder", "patch", e.patch));

  auto& sch = c.schedule;
  f.push_back({"schedule", "update_layers", [&sch] { return join(sch.update_layers); },
               [&sch](const std::string& s) { sch.update_layers = split<int>(s); }});
  f.push_back({"schedule", "ratios", [&sch] { return join(sch.ratios); },
               [&sch](const std::string& s) { sch.ratios = split<double>(s); }});

  f.push_back(int_field("scene", "views", c.rig.views));
  f.push_back(int_field("scene", "height", c.rig.height));
  f.push_back(int_field("scene", "width", c.rig.width));
  f.push_back(dbl_field("scene", "hfov_deg", c.rig.hfov_deg));
  f.push_back(dbl_field("scene", "mount_height", c.rig.mount_height));
  f.push_back(int_field("scene", "n_objects", c.scene.n_objects));
  f.push_back(int_field("scene", "n_frames", c.scene.n_frames));
  f.push_back(dbl_field("scene", "frame_dt", c.scene.frame_dt));
  f.push_back(dbl_field("scene", "v_max", c.scene.v_max));
  f.push_back(dbl_field("scene", "range_min", c.scene.range_min));
  f.push_back(dbl_field("scene", "range_max", c.scene.range_max));
  f.push_back(dbl_field("scene", "ego_speed_max", c.scene.ego_speed_max));
  f.push_back(dbl_field("scene", "yaw_rate_std", c.scene.yaw_rate_std));
  f.push_back(int_field("scene", "n_queries", c.queries.n_total));
  f.push_back(int_field("scene", "query_dim", c.queries.content_dim));
  f.push_back(dbl_field("scene", "query_noise", c.queries.noise_std));
  f.push_back(dbl_field("scene", "velocity_noise", c.queries.velocity_noise));
  f.push_back(dbl_field("scene", "background_range", c.queries.background_range));
  f.push_back(u64_field("scene", "embed_seed", c.tokens.embed_seed));
  f.push_back(dbl_field("scene", "clutter_std", c.tokens.clutter_std));
  f.push_back(dbl_field("scene", "token_noise", c.tokens.noise_std));

  f.push_back(int_field("train", "epochs", c.train.epochs));
  f.push_back(int_field("train", "batch_size", c.train.batch_size));
  f.push_back(dbl_field("train", "lr", c.train.lr));
  f.push_back(dbl_field("train", "momentum", c.train.momentum));
  f.push_back(dbl_field("train", "loss_weight", c.train.loss_weight));
  f.push_back(dbl_field("train", "alpha", c.train.alpha));
  f.push_back(dbl_field("train", "beta", c.train.beta));
  f.push_back(dbl_field("train", "grad_clip", c.train.grad_clip));
  f.push_back(int_field("train", "n_q", c.n_q));
  f.push_back(int_field("train", "samples", c.train_samples));
  f.push_back(int_field("train", "eval_samples", c.eval_samples));

  f.push_back(int_field("bench", "warmup", c.bench.warmup));
  f.push_back(int_field("bench", "iterations", c.bench.iterations));
  f.push_back(dbl_field("bench", "min_sample_ms", c.bench.min_sample_ms));
  f.push_back({"bench", "precision", [&c] { return to_string(c.precision); },
               [&c](const std::string& s) { c.precision = parse_precision(s); }});

  f.push_back(u64_field("run", "seed", c.seed));
  f.push_back({"run", "output_dir", [&c] { return c.output_dir.string(); },
               [&c](const std::string& s) { c.output_dir = s; }});
  return f;
}

}  // namespace

sim::SceneSetup RunConfig::setup() const {
  sim::SceneSetup s;
  s.rig = sim::CameraRig::surround(rig.views, rig.height, rig.width, rig.hfov_deg, rig.mount_height);
  s.patch = encoder.patch;
  s.scene = scene;
  s.queries = queries;
  s.tokens = tokens;
  s.tokens.dim = encoder.dim;
  return s;
}

TokenLattice RunConfig::lattice() const {
  return {rig.views, rig.height / encoder.patch, rig.width / encoder.patch};
}

void RunConfig::validate() const {
  encoder.validate();
  schedule.validate(encoder.layers);
  if (rig.views <= 0 || rig.height <= 0 || rig.width <= 0) throw std::invalid_argument("scene: empty rig");
  if (encoder.patch <= 0 || rig.height % encoder.patch || rig.width % encoder.patch) {
    throw std::invalid_argument("scene: image " + std::to_string(rig.height) + "x" + std::to_string(rig.width) +
                                " is not a multiple of patch " + std::to_string(encoder.patch));
  }
  if (!(rig.hfov_deg > 0.0 && rig.hfov_deg < 180.0)) throw std::invalid_argument("scene: hfov_deg out of (0, 180)");
  if (scene.n_objects < 0 || scene.n_frames < 2) throw std::invalid_argument("scene: need n_objects >= 0, n_frames >= 2");
  if (!(scene.range_min > 0.0 && scene.range_min <= scene.range_max)) {
    throw std::invalid_argument("scene: need 0 < range_min <= range_max");
  }
  if (queries.n_total < 1 || queries.content_dim < 1) throw std::invalid_argument("scene: empty query set");
  if (n_q < 1 || n_q > queries.n_total) {
    throw std::invalid_argument("train: n_q " + std::to_string(n_q) + " must be in [1, n_queries = " +
                                std::to_string(queries.n_total) + "]");
  }
  if (train.epochs < 1 || train.batch_size < 1 || !(train.lr > 0.0)) {
    throw std::invalid_argument("train: need epochs >= 1, batch_size >= 1, lr > 0");
  }
  if (train_samples < 1 || eval_samples < 0) throw std::invalid_argument("train: bad sample counts");
  if (bench.warmup < 0 || bench.iterations < 10) {
    throw std::invalid_argument("bench: need warmup >= 0 and iterations >= 10");
  }
  if (!(bench.min_sample_ms >= 0.0)) throw std::invalid_argument("bench: min_sample_ms must be >= 0");
}

std::string RunConfig::to_ini() const {
  RunConfig copy = *this;
  std::string out, section;
  for (const Field& f : fields(copy)) {
    if (f.section != section) {
      out += (section.empty() ? "[" : "\n[") + f.section + "]\n";
      section = f.section;
    }
    out += f.key + " = " + f.get() + "\n";
  }
  return out;
}

std::string RunConfig::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_ini()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig RunConfig::desk() { return {}; }

RunConfig RunConfig::bench_scale() {
  RunConfig c;
  c.rig.height = 160;
  c.rig.width = 400;
  c.precision = Precision::f32;
  return c;
}

RunConfig parse_run_config(const std::string& ini_text, const std::string& source) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::invalid_argument(source + ": " + e.message() + " at line " + std::to_string(e.line()));
  }
  RunConfig cfg;
  auto table = fields(cfg);
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw std::invalid_argument(source + ": key '" + section + "' outside any section");
    }
    bool known_section = false;
    for (const auto& f : table) known_section |= f.section == section;
    if (!known_section) throw std::invalid_argument(source + ": unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      auto it = std::find_if(table.begin(), table.end(),
                             [&](const Field& f) { return f.section == section && f.key == key; });
      if (it == table.end()) throw std::invalid_argument(source + ": unknown key '" + key + "' in [" + section + "]");
      try {
        it->set(value.data());
      } catch (const std::exception& e) {
        throw std::invalid_argument(source + ": [" + section + "] " + key + " = '" + value.data() +
                                    "' is invalid (" + e.what() + ")");
      }
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.string());
}

void apply_override(RunConfig& cfg, const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) throw std::invalid_argument("override '" + dotted_key + "' is not section.key");
  const std::string section = dotted_key.substr(0, dot);
  const std::string key = dotted_key.substr(dot + 1);
  auto table = fields(cfg);
  auto it = std::find_if(table.begin(), table.end(),
                         [&](const Field& f) { return f.section == section && f.key == key; });
  if (it == table.end()) throw std::invalid_argument("unknown setting '" + dotted_key + "'");
  try {
    it->set(value);
  } catch (const std::exception& e) {
    throw std::invalid_argument(dotted_key + " = '" + value + "' is invalid (" + e.what() + ")");
  }
}

void apply_seed_overrides(RunConfig& cfg, std::optional<std::uint64_t> flag_seed) {
  if (flag_seed) {
    cfg.seed = *flag_seed;
    return;
  }
  if (const char* env = std::getenv("TOC3D_SEED"); env && *env) {
    try {
      cfg.seed = parse_u64(env);
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string("TOC3D_SEED='") + env + "' is not an unsigned integer");
    }
  }
}

}  // namespace toc3d::prof
