#include "toc3d/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace toc3d {

namespace {

struct TensorRef {
  std::string name;
  double* data;
  Eigen::Index rows, cols;
};

struct Header {
  std::map<std::string, std::string> fields;
  std::vector<std::tuple<std::string, Eigen::Index, Eigen::Index>> table;

  const std::string& get(const std::string& key, const std::filesystem::path& path) const {
    auto it = fields.find(key);
    if (it == fields.end()) throw CheckpointError(path.string() + ": header is missing '" + key + "'");
    return it->second;
  }
};

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& magic,
                const std::vector<std::pair<std::string, std::string>>& fields, const std::vector<TensorRef>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out << magic << '\n';
  for (const auto& [k, v] : fields) out << k << ' ' << v << '\n';
  out << "tensors " << tensors.size() << '\n';
  for (const auto& t : tensors) out << t.name << ' ' << t.rows << ' ' << t.cols << '\n';
  out << "data\n";
  for (const auto& t : tensors) {
    out.write(reinterpret_cast<const char*>(t.data), static_cast<std::streamsize>(t.rows * t.cols * sizeof(double)));
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Header read_header(std::ifstream& in, const std::filesystem::path& path, const std::string& magic) {
  std::string line;
  if (!std::getline(in, line) || line != magic) {
    throw CheckpointError(path.string() + ": expected magic '" + magic + "', found '" + line + "'");
  }
  Header h;
  std::size_t n_tensors = 0;
  bool have_count = false;
  while (std::getline(in, line) && line != "data") {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (have_count) {
      Eigen::Index r = 0, c = 0;
      if (!(ls >> r >> c) || r < 0 || c < 0) throw CheckpointError(path.string() + ": bad shape row '" + line + "'");
      h.table.emplace_back(key, r, c);
    } else if (key == "tensors") {
      ls >> n_tensors;
      have_count = true;
    } else {
      std::string rest;
      std::getline(ls >> std::ws, rest);
      h.fields[key] = rest;
    }
  }
  if (line != "data") throw CheckpointError(path.string() + ": truncated header");
  if (h.table.size() != n_tensors) throw CheckpointError(path.string() + ": shape table length mismatch");
  return h;
}

void read_data(std::ifstream& in, const std::filesystem::path& path, const Header& h,
               const std::vector<TensorRef>& tensors) {
  if (tensors.size() != h.table.size()) {
    throw CheckpointError(path.string() + ": file has " + std::to_string(h.table.size()) + " tensors, expected " +
                          std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& [name, r, c] = h.table[i];
    const auto& t = tensors[i];
    if (name != t.name || r != t.rows || c != t.cols) {
      throw CheckpointError(path.string() + ": tensor " + std::to_string(i) + " is " + name + " " +
                            shape_string(r, c) + ", expected " + t.name + " " + shape_string(t.rows, t.cols));
    }
  }
  for (const auto& t : tensors) {
    in.read(reinterpret_cast<char*>(t.data), static_cast<std::streamsize>(t.rows * t.cols * sizeof(double)));
    if (!in) throw CheckpointError(path.string() + ": data ends early in " + t.name);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError(path.string() + ": trailing bytes");
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return in;
}

int to_int(const std::string& s, const std::filesystem::path& path) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw CheckpointError(path.string() + ": bad integer '" + s + "'");
  return v;
}

double to_double(const std::string& s, const std::filesystem::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw CheckpointError(path.string() + ": bad number '" + s + "'");
}

std::vector<TensorRef> scorer_tensors(mqts::ScorerParams& p) {
  std::vector<TensorRef> out;
  mqts::for_each_tensor(p, [&](const std::string& name, std::span<double> d, Eigen::Index r, Eigen::Index c) {
    out.push_back({name, d.data(), r, c});
  });
  return out;
}

template <typename W>
std::vector<TensorRef> encoder_tensors(W& w) {
  std::vector<TensorRef> out;
  auto vec = [&](const std::string& name, auto& v) { out.push_back({name, const_cast<double*>(v.data()), v.size(), 1}); };
  auto lin = [&](const std::string& name, auto& l) {
    out.push_back({name + ".weight", const_cast<double*>(l.weight.data()), l.weight.rows(), l.weight.cols()});
    vec(name + ".bias", l.bias);
  };
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    auto& b = w.blocks[i];
    const std::string pre = "blocks." + std::to_string(i) + ".";
    vec(pre + "ln1.gamma", b.ln1_gamma);
    vec(pre + "ln1.beta", b.ln1_beta);
    lin(pre + "attn.qkv", b.qkv);
    lin(pre + "attn.proj", b.proj);
    vec(pre + "ln2.gamma", b.ln2_gamma);
    vec(pre + "ln2.beta", b.ln2_beta);
    lin(pre + "mlp.fc1", b.fc1);
    lin(pre + "mlp.fc2", b.fc2);
  }
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s.empty() ? "-" : s;
}

}  // namespace

void save_scorer(const mqts::ScorerParams& params, const std::filesystem::path& path) {
  params.validate();
  const auto& m = params.motion;
  write_file(path, kScorerMagic,
             {{"pe_bands", std::to_string(m.pe.bands)},
              {"pe_include_input", m.pe.include_input ? "1" : "0"},
              {"v_max", fmt_double(m.norm.v_max)},
              {"horizon", fmt_double(m.norm.horizon)},
              {"ln_eps", fmt_double(m.ln_eps)}},
             scorer_tensors(const_cast<mqts::ScorerParams&>(params)));
}

mqts::ScorerParams load_scorer(const std::filesystem::path& path) {
  auto in = open_in(path);
  const Header h = read_header(in, path, kScorerMagic);
  if (h.table.size() < 3) throw CheckpointError(path.string() + ": shape table too short");
  const auto [n0, c_q, token_dim] = h.table[0];
  const auto [n1, head_rows, n_q] = h.table[2];
  if (n0 != "token_proj.weight" || n1 != "score_head.weight" || head_rows != 1) {
    throw CheckpointError(path.string() + ": unexpected tensor order");
  }
  motion::PEConfig pe;
  pe.bands = to_int(h.get("pe_bands", path), path);
  pe.include_input = to_int(h.get("pe_include_input", path), path) != 0;
  motion::MotionNormalization norm;
  norm.v_max = to_double(h.get("v_max", path), path);
  norm.horizon = to_double(h.get("horizon", path), path);

  Rng rng(0);
  mqts::ScorerParams p = mqts::ScorerParams::init(static_cast<int>(token_dim), static_cast<int>(c_q),
                                                  static_cast<int>(n_q), rng);
  p.motion = motion::MotionWeights::init(static_cast<int>(c_q), rng, pe, norm);
  p.motion.ln_eps = to_double(h.get("ln_eps", path), path);
  read_data(in, path, h, scorer_tensors(p));
  p.validate();
  return p;
}

void save_encoder(const router::EncoderWeights<double>& weights, const std::filesystem::path& path) {
  const auto& c = weights.config;
  c.validate();
  if (static_cast<int>(weights.blocks.size()) != c.layers) throw CheckpointError("save_encoder: block count mismatch");
  write_file(path, kEncoderMagic,
             {{"layers", std::to_string(c.layers)},
              {"dim", std::to_string(c.dim)},
              {"heads", std::to_string(c.heads)},
              {"mlp_ratio", fmt_double(c.mlp_ratio)},
              {"window_size", std::to_string(c.window_size)},
              {"global_layers", join_ints(c.global_attn_layers)},
              {"patch", std::to_string(c.patch)}},
             encoder_tensors(weights));
}

router::EncoderWeights<double> load_encoder(const std::filesystem::path& path) {
  auto in = open_in(path);
  const Header h = read_header(in, path, kEncoderMagic);
  router::EncoderConfig c;
  c.layers = to_int(h.get("layers", path), path);
  c.dim = to_int(h.get("dim", path), path);
  c.heads = to_int(h.get("heads", path), path);
  c.mlp_ratio = to_double(h.get("mlp_ratio", path), path);
  c.window_size = to_int(h.get("window_size", path), path);
  c.patch = to_int(h.get("patch", path), path);
  c.global_attn_layers.clear();
  const std::string& gl = h.get("global_layers", path);
  if (gl != "-") {
    std::istringstream ss(gl);
    std::string item;
    while (std::getline(ss, item, ',')) c.global_attn_layers.push_back(to_int(item, path));
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  auto w = router::zero_encoder(c);
  read_data(in, path, h, encoder_tensors(w));
  return w;
}

}  // namespace toc3d
