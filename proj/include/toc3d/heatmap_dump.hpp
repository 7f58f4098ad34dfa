#pragma once

// Per-view 8-bit graymaps (binary PGM) of token scores on the patch lattice.

#include "toc3d/mqts.hpp"
#include "toc3d/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace toc3d::prof {

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// round(255 * clamp(s, 0, 1)).
std::uint8_t to_gray(double score);

/// provenance[i] is the lattice cell of score i; it must cover every cell of
/// `lattice` exactly once.
std::vector<GrayImage> render_views(std::span<const double> scores, std::span<const TokenCoord> provenance,
                                    const TokenLattice& lattice);

/// Writes <prefix>_view<k>.pgm per view and, when a partition is given,
/// <prefix>_view<k>_salient.pgm with salient cells at 255. Returns the paths.
std::vector<std::filesystem::path> dump_heatmap(const mqts::ImportanceScore& score,
                                                std::span<const TokenCoord> provenance, const TokenLattice& lattice,
                                                const std::filesystem::path& dir, const std::string& prefix,
                                                const mqts::TokenPartition* salient = nullptr);

void write_pgm(const GrayImage& image, const std::filesystem::path& path);
GrayImage read_pgm(const std::filesystem::path& path);

}  // namespace toc3d::prof
