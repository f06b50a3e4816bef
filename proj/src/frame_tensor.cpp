#include "chromacodec/frame_tensor.hpp"

#include <algorithm>
#include <cmath>

#include "chromacodec/errors.hpp"

namespace chromacodec {

namespace {

void append_normalised(std::vector<double>& out, const Plane& p) {
  for (std::uint8_t s : p.samples) out.push_back((static_cast<double>(s) - 128.0) / 128.0);
}

}  // namespace

Tensor plane_to_tensor(const Plane& plane) {
  std::vector<double> v;
  v.reserve(plane.size());
  append_normalised(v, plane);
  return Tensor::from_vector({1, 1, plane.height, plane.width}, std::move(v));
}

Tensor chroma_to_tensor(const Plane& cb, const Plane& cr) {
  if (cb.width != cr.width || cb.height != cr.height) {
    throw DimensionError("chroma planes differ in size");
  }
  std::vector<double> v;
  v.reserve(cb.size() * 2);
  append_normalised(v, cb);
  append_normalised(v, cr);
  return Tensor::from_vector({1, 2, cb.height, cb.width}, std::move(v));
}

Plane tensor_to_plane(const Tensor& t, std::size_t channel) {
  if (t.rank() != 4 || channel >= t.dim(1)) {
    throw DimensionError("tensor_to_plane: no channel " + std::to_string(channel) + " in " +
                         shape_string(t.shape()));
  }
  const std::size_t h = t.dim(2), w = t.dim(3);
  Plane p(w, h);
  const auto data = t.data().subspan(channel * h * w, h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    p.samples[i] = static_cast<std::uint8_t>(std::clamp(std::lround(128.0 + 128.0 * data[i]), 0L, 255L));
  }
  return p;
}

}  // namespace chromacodec
