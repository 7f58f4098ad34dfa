#include "toc3d/heatmap_dump.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace toc3d::prof {

std::uint8_t to_gray(double score) {
  if (std::isnan(score)) throw std::invalid_argument("to_gray: NaN score");
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(score, 0.0, 1.0)));
}

namespace {

std::vector<int> cell_of(std::span<const TokenCoord> provenance, const TokenLattice& lattice) {
  if (static_cast<int>(provenance.size()) != lattice.size()) {
    throw std::invalid_argument("heatmap: provenance has " + std::to_string(provenance.size()) +
                                " entries for a lattice of " + std::to_string(lattice.size()));
  }
  std::vector<int> cells(provenance.size());
  std::vector<char> seen(provenance.size(), 0);
  for (std::size_t i = 0; i < provenance.size(); ++i) {
    const auto& c = provenance[i];
    if (c.view < 0 || c.view >= lattice.views || c.row < 0 || c.row >= lattice.rows || c.col < 0 ||
        c.col >= lattice.cols) {
      throw std::invalid_argument("heatmap: provenance entry " + std::to_string(i) + " lies outside the lattice");
    }
    const int idx = lattice.index(c);
    if (seen[idx]) throw std::invalid_argument("heatmap: lattice cell covered twice");
    seen[idx] = 1;
    cells[i] = idx;
  }
  return cells;
}

std::vector<GrayImage> blank_views(const TokenLattice& lattice) {
  return std::vector<GrayImage>(
      lattice.views, GrayImage{lattice.cols, lattice.rows, std::vector<std::uint8_t>(lattice.per_view(), 0)});
}

}  // namespace

std::vector<GrayImage> render_views(std::span<const double> scores, std::span<const TokenCoord> provenance,
                                    const TokenLattice& lattice) {
  if (scores.size() != provenance.size()) throw std::invalid_argument("heatmap: scores/provenance length mismatch");
  const auto cells = cell_of(provenance, lattice);
  auto views = blank_views(lattice);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int idx = cells[i];
    views[idx / lattice.per_view()].pixels[idx % lattice.per_view()] = to_gray(scores[i]);
  }
  return views;
}

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  int maxval = 0;
  GrayImage img;
  in >> magic >> img.width >> img.height >> maxval;
  if (magic != "P5" || maxval != 255 || img.width <= 0 || img.height <= 0) {
    throw std::runtime_error(path.string() + ": not an 8-bit binary PGM");
  }
  in.get();
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw std::runtime_error(path.string() + ": truncated pixel data");
  return img;
}

std::vector<std::filesystem::path> dump_heatmap(const mqts::ImportanceScore& score,
                                                std::span<const TokenCoord> provenance, const TokenLattice& lattice,
                                                const std::filesystem::path& dir, const std::string& prefix,
                                                const mqts::TokenPartition* salient) {
  const auto views = render_views(score.scores, provenance, lattice);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());

  std::vector<GrayImage> masks;
  if (salient) {
    if (salient->size() != lattice.size()) throw std::invalid_argument("heatmap: partition does not match lattice");
    const auto cells = cell_of(provenance, lattice);
    masks = blank_views(lattice);
    for (int i : salient->salient) {
      const int idx = cells.at(i);
      masks[idx / lattice.per_view()].pixels[idx % lattice.per_view()] = 255;
    }
  }
  std::vector<std::filesystem::path> paths;
  for (int v = 0; v < lattice.views; ++v) {
    const std::string stem = prefix + "_view" + std::to_string(v);
    paths.push_back(dir / (stem + ".pgm"));
    write_pgm(views[v], paths.back());
    if (salient) {
      paths.push_back(dir / (stem + "_salient.pgm"));
      write_pgm(masks[v], paths.back());
    }
  }
  return paths;
}

}  // namespace toc3d::prof
