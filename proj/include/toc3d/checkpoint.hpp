#pragma once

// Versioned binary weight files. Both formats start with a text magic line,
// then a small text header and shape table, then little-endian row-major
// float64 data in table order.

#include "toc3d/encoder.hpp"
#include "toc3d/mqts.hpp"

#include <filesystem>
#include <stdexcept>

namespace toc3d {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kScorerMagic = "TOC3D-SCORER v1";
inline constexpr const char* kEncoderMagic = "TOC3D-ENC v1";

void save_scorer(const mqts::ScorerParams& params, const std::filesystem::path& path);
mqts::ScorerParams load_scorer(const std::filesystem::path& path);

void save_encoder(const router::EncoderWeights<double>& weights, const std::filesystem::path& path);
router::EncoderWeights<double> load_encoder(const std::filesystem::path& path);

}  // namespace toc3d
