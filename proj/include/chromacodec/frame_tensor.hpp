#pragma once

// 8-bit planes <-> network tensors. Samples map to (v - 128) / 128.

#include "chromacodec/colorspace.hpp"
#include "chromacodec/tensor.hpp"

namespace chromacodec {

// 1 x 1 x H x W
Tensor plane_to_tensor(const Plane& plane);
// 1 x 2 x H x W from two equally sized planes.
Tensor chroma_to_tensor(const Plane& cb, const Plane& cr);
// Channel `channel` of an N x C x H x W tensor (batch 0): clamp(round(128 + 128 v)).
Plane tensor_to_plane(const Tensor& t, std::size_t channel);

}  // namespace chromacodec
