#include "chromacodec/intra_codec.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <string>

#include "chromacodec/errors.hpp"

using namespace chromacodec;

namespace {

Plane noise_plane(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Plane p(w, h);
  for (auto& s : p.samples) s = static_cast<std::uint8_t>(rng() & 0xff);
  return p;
}

std::string bit_string(const BitWriter& w) {
  std::string s;
  for (std::size_t i = 0; i < w.bit_length(); ++i)
    s += ((w.bytes()[i / 8] >> (7 - i % 8)) & 1) ? '1' : '0';
  return s;
}

std::string code_of(std::uint32_t v) {
  BitWriter w;
  exp_golomb_write(w, v);
  return bit_string(w);
}

}  // namespace

TEST(Qstep, HevcStyleLaw) {
  EXPECT_DOUBLE_EQ(qstep_for_qp(4), 1.0);
  EXPECT_DOUBLE_EQ(qstep_for_qp(10), 2.0);
  EXPECT_NEAR(qstep_for_qp(32), std::pow(2.0, 28.0 / 6.0), 1e-12);
  EXPECT_GT(qstep_for_qp(0), 0.0);
  EXPECT_THROW(CodecParams{52}.validate(), ConfigError);
  EXPECT_THROW(CodecParams{-1}.validate(), ConfigError);
}

TEST(Dct, ConstantBlockHasOnlyDc) {
  Block8 b;
  b.fill(5.0);
  const Block8 c = dct8(b);
  EXPECT_NEAR(c[0], 40.0, 1e-12);
  for (int i = 1; i < 64; ++i) EXPECT_NEAR(c[i], 0.0, 1e-12);
}

TEST(Dct, InverseAndParseval) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-128.0, 128.0);
  for (int trial = 0; trial < 50; ++trial) {
    Block8 b;
    for (auto& v : b) v = u(rng);
    const Block8 c = dct8(b);
    const Block8 back = idct8(c);
    double ex = 0.0, ec = 0.0;
    for (int i = 0; i < 64; ++i) {
      EXPECT_NEAR(back[i], b[i], 1e-10);
      ex += b[i] * b[i];
      ec += c[i] * c[i];
    }
    EXPECT_NEAR(ex, ec, 1e-9 * std::max(1.0, ex));
  }
}

TEST(Zigzag, IsPermutationWithJpegPrefix) {
  const auto& z = zigzag_order();
  std::set<int> seen(z.begin(), z.end());
  EXPECT_EQ(seen.size(), 64u);
  const std::uint8_t prefix[] = {0, 1, 8, 16, 9, 2, 3, 10, 17, 24};
  for (int i = 0; i < 10; ++i) EXPECT_EQ(z[i], prefix[i]);
  EXPECT_EQ(z[63], 63);
}

TEST(ExpGolomb, KnownCodes) {
  EXPECT_EQ(code_of(0), "1");
  EXPECT_EQ(code_of(1), "010");
  EXPECT_EQ(code_of(2), "011");
  EXPECT_EQ(code_of(3), "00100");
  EXPECT_EQ(code_of(6), "00111");
  EXPECT_EQ(code_of(7), "0001000");
}

TEST(ExpGolomb, ExhaustiveRoundTrip) {
  BitWriter w;
  for (std::uint32_t v = 0; v <= 10000; ++v) exp_golomb_write(w, v);
  const auto p = w.finish();
  BitReader r(p.bytes, p.bit_length);
  for (std::uint32_t v = 0; v <= 10000; ++v) ASSERT_EQ(exp_golomb_read(r), v);
  EXPECT_EQ(r.remaining(), 0u);
  EXPECT_THROW(exp_golomb_read(r), DecodeError);
}

TEST(ExpGolomb, LargeValues) {
  BitWriter w;
  exp_golomb_write(w, 0xfffffffeu);
  const auto p = w.finish();
  BitReader r(p.bytes, p.bit_length);
  EXPECT_EQ(exp_golomb_read(r), 0xfffffffeu);
}

TEST(LevelMapping, SignedInterleave) {
  EXPECT_EQ(map_signed_level(1), 1u);
  EXPECT_EQ(map_signed_level(-1), 2u);
  EXPECT_EQ(map_signed_level(2), 3u);
  EXPECT_EQ(map_signed_level(-2), 4u);
  for (int z = -500; z <= 500; ++z) {
    if (z == 0) continue;
    EXPECT_EQ(unmap_signed_level(map_signed_level(z)), z);
  }
}

TEST(EncodePlane, ConstantMidGrayCodesOnlyEob) {
  const Plane p(64, 48, 128);
  for (int qp : {0, 27, 51}) {
    const auto payload = encode_plane(p, CodecParams{qp});
    const std::size_t blocks = 8 * 6;
    EXPECT_EQ(payload.bit_length, 2 * blocks);
    EXPECT_LT(payload.bytes.size(), 2 * blocks);
    EXPECT_EQ(decode_plane(payload, 64, 48, CodecParams{qp}), p);
  }
}

TEST(EncodePlane, EmptyPlaneRejected) {
  EXPECT_THROW(encode_plane(Plane(), CodecParams{}), ConfigError);
}

TEST(EncodePlane, BitrateStrictlyDecreasesWithQp) {
  const Plane p = noise_plane(64, 64, 42);
  std::size_t prev = SIZE_MAX;
  for (int qp : {27, 32, 37, 42}) {
    const std::size_t bits = encode_plane(p, CodecParams{qp}).bit_length;
    EXPECT_LT(bits, prev) << "qp " << qp;
    prev = bits;
  }
}

TEST(EncodePlane, PerBlockDistortionBound) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Plane p = noise_plane(64, 64, seed);
    for (int qp : {27, 32, 37, 42}) {
      const CodecParams params{qp};
      const Plane d = decode_plane(encode_plane(p, params), 64, 64, params);
      const double bound = std::pow(params.qstep() / 2.0, 2) + 0.5;
      for (std::size_t by = 0; by < 8; ++by)
        for (std::size_t bx = 0; bx < 8; ++bx) {
          double se = 0.0;
          for (std::size_t y = 0; y < 8; ++y)
            for (std::size_t x = 0; x < 8; ++x) {
              const double e = double(p.at(bx * 8 + x, by * 8 + y)) - d.at(bx * 8 + x, by * 8 + y);
              se += e * e;
            }
          EXPECT_LE(se / 64.0, bound) << "qp " << qp << " block " << bx << "," << by;
        }
    }
  }
}

TEST(EncodePlane, LowQpIsNearLossless) {
  const Plane p = noise_plane(16, 16, 9);
  const Plane d = decode_plane(encode_plane(p, CodecParams{0}), 16, 16, CodecParams{0});
  for (std::size_t i = 0; i < p.size(); ++i)
    EXPECT_LE(std::abs(int(p.samples[i]) - int(d.samples[i])), 1);
}

TEST(EncodePlane, Deterministic) {
  const Plane p = noise_plane(40, 24, 5);
  EXPECT_EQ(encode_plane(p, CodecParams{32}), encode_plane(p, CodecParams{32}));
}

TEST(EncodePlane, OddDimensionsCropBack) {
  Plane p(13, 9);
  for (std::size_t y = 0; y < 9; ++y)
    for (std::size_t x = 0; x < 13; ++x) p.at(x, y) = static_cast<std::uint8_t>(10 * x + 3 * y);
  const Plane d = decode_plane(encode_plane(p, CodecParams{4}), 13, 9, CodecParams{4});
  EXPECT_EQ(d.width, 13u);
  EXPECT_EQ(d.height, 9u);
  for (std::size_t i = 0; i < p.size(); ++i)
    EXPECT_LE(std::abs(int(p.samples[i]) - int(d.samples[i])), 2);
}

TEST(DecodePlane, TruncatedPayloadIsDecodeError) {
  const Plane p = noise_plane(16, 16, 11);
  auto payload = encode_plane(p, CodecParams{27});
  payload.bytes.resize(payload.bytes.size() / 2);
  EXPECT_THROW(decode_plane(payload, 16, 16, CodecParams{27}), DecodeError);
}

TEST(DecodePlane, RunPastBlockEndIsDecodeError) {
  BitWriter w;
  exp_golomb_write(w, 64);
  exp_golomb_write(w, 1);
  EXPECT_THROW(decode_plane(w.finish(), 8, 8, CodecParams{32}), DecodeError);
}
