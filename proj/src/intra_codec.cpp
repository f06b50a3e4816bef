#include "chromacodec/intra_codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

#include "chromacodec/errors.hpp"

namespace chromacodec {

namespace {

// basis[u][x] = a(u) cos((2x + 1) u pi / 16)
const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> m{};
    for (int u = 0; u < 8; ++u) {
      const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) {
        m[u][x] = a * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
    }
    return m;
  }();
  return basis;
}

std::uint8_t clamp_sample(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

double qstep_for_qp(int qp) { return std::pow(2.0, (qp - 4) / 6.0); }

void CodecParams::validate() const {
  if (qp < 0 || qp > kMaxQp) {
    throw ConfigError("qp " + std::to_string(qp) + " outside [0, " + std::to_string(kMaxQp) + "]");
  }
}

Block8 dct8(const Block8& block) {
  const auto& c = dct_basis();
  Block8 tmp{}, out{};
  // rows: tmp[y][u] = sum_x block[y][x] c[u][x]
  for (int y = 0; y < 8; ++y)
    for (int u = 0; u < 8; ++u) {
      double acc = 0.0;
      for (int x = 0; x < 8; ++x) acc += block[y * 8 + x] * c[u][x];
      tmp[y * 8 + u] = acc;
    }
  // columns: out[v][u] = sum_y c[v][y] tmp[y][u]
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) {
      double acc = 0.0;
      for (int y = 0; y < 8; ++y) acc += c[v][y] * tmp[y * 8 + u];
      out[v * 8 + u] = acc;
    }
  return out;
}

Block8 idct8(const Block8& coefficients) {
  const auto& c = dct_basis();
  Block8 tmp{}, out{};
  for (int v = 0; v < 8; ++v)
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int u = 0; u < 8; ++u) acc += coefficients[v * 8 + u] * c[u][x];
      tmp[v * 8 + x] = acc;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int v = 0; v < 8; ++v) acc += c[v][y] * tmp[v * 8 + x];
      out[y * 8 + x] = acc;
    }
  return out;
}

const std::array<std::uint8_t, 64>& zigzag_order() {
  static const auto order = [] {
    std::array<std::uint8_t, 64> z{};
    int i = 0;
    for (int s = 0; s < 15; ++s) {
      // Even diagonals run bottom-left to top-right, odd ones the other way.
      for (int k = 0; k <= s; ++k) {
        const int row = (s % 2 == 0) ? s - k : k;
        const int col = s - row;
        if (row < 8 && col < 8) z[i++] = static_cast<std::uint8_t>(row * 8 + col);
      }
    }
    return z;
  }();
  return order;
}

void BitWriter::put_bit(bool bit) {
  if (bit_length_ % 8 == 0) bytes_.push_back(0);
  if (bit) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (bit_length_ % 8));
  ++bit_length_;
}

void BitWriter::put_bits(std::uint64_t value, int count) {
  for (int i = count - 1; i >= 0; --i) put_bit((value >> i) & 1u);
}

BitReader::BitReader(std::span<const std::uint8_t> bytes, std::size_t bit_length)
    : bytes_(bytes), bit_length_(bit_length) {
  if (bit_length > bytes.size() * 8) throw DecodeError("bit length exceeds payload size");
}

bool BitReader::read_bit() {
  if (position_ >= bit_length_) throw DecodeError("payload truncated");
  const bool bit = (bytes_[position_ / 8] >> (7 - position_ % 8)) & 1u;
  ++position_;
  return bit;
}

void exp_golomb_write(BitWriter& writer, std::uint32_t value) {
  const std::uint64_t code = static_cast<std::uint64_t>(value) + 1;
  const int length = std::bit_width(code);
  writer.put_bits(0, length - 1);
  writer.put_bits(code, length);
}

std::uint32_t exp_golomb_read(BitReader& reader) {
  int zeros = 0;
  while (!reader.read_bit()) {
    if (++zeros > 32) throw DecodeError("exp-Golomb prefix too long");
  }
  std::uint64_t code = 1;
  for (int i = 0; i < zeros; ++i) code = (code << 1) | (reader.read_bit() ? 1u : 0u);
  if (code - 1 > 0xffffffffull) throw DecodeError("exp-Golomb value overflow");
  return static_cast<std::uint32_t>(code - 1);
}

std::uint32_t map_signed_level(int level) {
  const auto mag = static_cast<std::uint32_t>(level < 0 ? -static_cast<long>(level) : level);
  return 2 * mag - (level > 0 ? 1u : 0u);
}

int unmap_signed_level(std::uint32_t code) {
  // odd codes are positive: 1 -> +1, 3 -> +2; even codes negative: 2 -> -1
  if (code % 2 == 1) return static_cast<int>((code + 1) / 2);
  return -static_cast<int>(code / 2);
}

PlanePayload encode_plane(const Plane& plane, const CodecParams& params) {
  params.validate();
  if (plane.width == 0 || plane.height == 0) throw ConfigError("encode_plane: empty plane");
  const double step = params.qstep();
  const std::size_t bw = (plane.width + 7) / 8, bh = (plane.height + 7) / 8;
  const auto& zz = zigzag_order();
  BitWriter writer;
  Block8 block{};
  for (std::size_t by = 0; by < bh; ++by) {
    for (std::size_t bx = 0; bx < bw; ++bx) {
      for (int y = 0; y < 8; ++y) {
        const std::size_t sy = std::min(by * 8 + y, plane.height - 1);
        for (int x = 0; x < 8; ++x) {
          const std::size_t sx = std::min(bx * 8 + x, plane.width - 1);
          block[y * 8 + x] = static_cast<double>(plane.at(sx, sy)) - 128.0;
        }
      }
      const Block8 coef = dct8(block);
      std::uint32_t run = 0;
      for (int i = 0; i < 64; ++i) {
        const long q = std::lround(coef[zz[i]] / step);
        if (q == 0) {
          ++run;
          continue;
        }
        exp_golomb_write(writer, run);
        exp_golomb_write(writer, map_signed_level(static_cast<int>(q)));
        run = 0;
      }
      exp_golomb_write(writer, 0);
      exp_golomb_write(writer, 0);
    }
  }
  return writer.finish();
}

Plane decode_plane(std::span<const std::uint8_t> payload, std::size_t width, std::size_t height,
                   const CodecParams& params) {
  params.validate();
  if (width == 0 || height == 0) throw ConfigError("decode_plane: empty plane");
  const double step = params.qstep();
  const std::size_t bw = (width + 7) / 8, bh = (height + 7) / 8;
  const auto& zz = zigzag_order();
  BitReader reader(payload);
  Plane out(width, height);
  for (std::size_t by = 0; by < bh; ++by) {
    for (std::size_t bx = 0; bx < bw; ++bx) {
      Block8 coef{};
      std::size_t pos = 0;
      while (true) {
        const std::uint32_t run = exp_golomb_read(reader);
        const std::uint32_t level = exp_golomb_read(reader);
        if (level == 0) {
          if (run != 0) throw DecodeError("malformed end-of-block symbol");
          break;
        }
        pos += run;
        if (pos >= 64) throw DecodeError("coefficient run past end of block");
        coef[zz[pos]] = unmap_signed_level(level) * step;
        ++pos;
      }
      const Block8 pixels = idct8(coef);
      for (int y = 0; y < 8; ++y) {
        const std::size_t oy = by * 8 + y;
        if (oy >= height) break;
        for (int x = 0; x < 8; ++x) {
          const std::size_t ox = bx * 8 + x;
          if (ox >= width) break;
          out.at(ox, oy) = clamp_sample(pixels[y * 8 + x] + 128.0);
        }
      }
    }
  }
  return out;
}

}  // namespace chromacodec
