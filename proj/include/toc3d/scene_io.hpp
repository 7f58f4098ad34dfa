#pragma once

// One structured-text record per frame: a "TOC3D-SCENE v1" magic line
// followed by a JSON body with both frames, the history query set, the
// heatmap target and the token seed. Tokens are re-synthesized on load.

#include "toc3d/scene_sim.hpp"

#include <filesystem>
#include <stdexcept>
#include <vector>

namespace toc3d::sim {

inline constexpr const char* kSceneMagic = "TOC3D-SCENE v1";

class SceneFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_sample(const SimSample& sample, const std::filesystem::path& path);
SimSample read_sample(const std::filesystem::path& path, const SceneSetup& setup);

/// Writes frame_00000.scene, frame_00001.scene, ... and returns the paths.
std::vector<std::filesystem::path> write_dataset(std::span<const SimSample> samples,
                                                 const std::filesystem::path& dir);
/// Loads every *.scene file in name order.
std::vector<SimSample> read_dataset(const std::filesystem::path& dir, const SceneSetup& setup);

}  // namespace toc3d::sim
