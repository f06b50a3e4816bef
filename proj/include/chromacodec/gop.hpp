#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "chromacodec/errors.hpp"

namespace chromacodec {

inline constexpr std::size_t kDefaultGopSize = 6;

struct GopStructure {
  std::size_t gop_size = kDefaultGopSize;
  std::size_t frame_count = 0;
  // {0, g, 2g, ...} below frame_count.
  std::vector<std::size_t> anchors;

  bool is_anchor(std::size_t frame) const { return frame % gop_size == 0; }
};

inline GopStructure split_gops(std::size_t frame_count, std::size_t gop_size) {
  if (gop_size == 0) throw ConfigError("gop size must be at least 1");
  GopStructure g;
  g.gop_size = gop_size;
  g.frame_count = frame_count;
  for (std::size_t i = 0; i < frame_count; i += gop_size) g.anchors.push_back(i);
  return g;
}

}  // namespace chromacodec
