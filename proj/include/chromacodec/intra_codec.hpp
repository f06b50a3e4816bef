#pragma once

// Minimal intra-only plane codec: 8x8 orthonormal DCT, uniform scalar
// quantisation and (run, level) exp-Golomb entropy coding.
//
// Payload layout, big-endian bit packing, blocks in raster order over the
// plane padded to a multiple of 8 by edge replication. Each block is a list of
// exp-Golomb pairs ue(run) ue(level) in zigzag order, where run in [0, 63]
// counts the zeros skipped since the previous coded coefficient and
// level = 2|z| - (z > 0 ? 1 : 0) for the nonzero quantised value z. A level of
// 0 never codes a coefficient, so the pair ue(0) ue(0) ("11") marks the end of
// the block. The final byte is zero padded.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "chromacodec/colorspace.hpp"

namespace chromacodec {

inline constexpr int kBlockSize = 8;
inline constexpr int kMaxQp = 51;

// Quantiser step 2^((qp - 4) / 6).
double qstep_for_qp(int qp);

struct CodecParams {
  int qp = 32;

  double qstep() const { return qstep_for_qp(qp); }
  void validate() const;
};

struct PlanePayload {
  std::vector<std::uint8_t> bytes;
  std::size_t bit_length = 0;

  friend bool operator==(const PlanePayload&, const PlanePayload&) = default;
};

using Block8 = std::array<double, 64>;

Block8 dct8(const Block8& block);
Block8 idct8(const Block8& coefficients);

// Raster index of the i-th coefficient in zigzag scan order.
const std::array<std::uint8_t, 64>& zigzag_order();

class BitWriter {
 public:
  void put_bit(bool bit);
  void put_bits(std::uint64_t value, int count);
  std::size_t bit_length() const { return bit_length_; }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  PlanePayload finish() const { return {bytes_, bit_length_}; }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t bit_length_ = 0;
};

class BitReader {
 public:
  BitReader(std::span<const std::uint8_t> bytes, std::size_t bit_length);
  explicit BitReader(std::span<const std::uint8_t> bytes)
      : BitReader(bytes, bytes.size() * 8) {}

  bool read_bit();
  std::size_t position() const { return position_; }
  std::size_t remaining() const { return bit_length_ - position_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t bit_length_;
  std::size_t position_ = 0;
};

// Order-0 exp-Golomb: 0 -> "1", 1 -> "010", 2 -> "011", 3 -> "00100", ...
void exp_golomb_write(BitWriter& writer, std::uint32_t value);
std::uint32_t exp_golomb_read(BitReader& reader);

std::uint32_t map_signed_level(int level);
int unmap_signed_level(std::uint32_t code);

PlanePayload encode_plane(const Plane& plane, const CodecParams& params);
// Throws DecodeError on truncated or malformed payloads.
Plane decode_plane(std::span<const std::uint8_t> payload, std::size_t width, std::size_t height,
                   const CodecParams& params);
inline Plane decode_plane(const PlanePayload& payload, std::size_t width, std::size_t height,
                          const CodecParams& params) {
  return decode_plane(payload.bytes, width, height, params);
}

}  // namespace chromacodec
