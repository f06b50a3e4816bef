#pragma once

// Seeded synthetic test content.

#include <cstdint>
#include <vector>

#include "chromacodec/colorspace.hpp"

namespace chromacodec {

struct SyntheticConfig {
  std::size_t frames = 12;
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t rectangles = 3;
  std::uint64_t seed = 7;
};

// 4:4:4 frames of solid-color rectangles sliding over a mid-gray background.
// Each rectangle keeps its color and velocity and bounces off the borders.
std::vector<Frame> moving_rectangles(const SyntheticConfig& config);

}  // namespace chromacodec
