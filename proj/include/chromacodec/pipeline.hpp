#pragma once

// GOP coding: full-color anchors through the intra codec, luma-only frames
// elsewhere, decoder-side colorization by the embedded generator.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "chromacodec/colorizer_net.hpp"
#include "chromacodec/colorspace.hpp"
#include "chromacodec/gop.hpp"
#include "chromacodec/intra_codec.hpp"

namespace chromacodec {

enum class FrameType : std::uint8_t { kAnchor = 0, kLumaOnly = 1 };

struct FrameRecord {
  FrameType type = FrameType::kAnchor;
  // Y, Cb, Cr for anchors (4:2:0 chroma); Y only otherwise.
  std::vector<std::vector<std::uint8_t>> planes;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

struct CompressedVideo {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  SubsamplingMode anchor_mode = SubsamplingMode::k420;
  std::uint8_t qp = 32;
  std::uint8_t gop_size = kDefaultGopSize;
  std::vector<std::uint8_t> weights;  // generator weight file bytes
  std::vector<FrameRecord> frames;

  GopStructure gop() const { return split_gops(frames.size(), gop_size); }
  friend bool operator==(const CompressedVideo&, const CompressedVideo&) = default;
};

struct EncodeOptions {
  int qp = 32;
  std::size_t gop_size = kDefaultGopSize;
  // Worker threads for per-frame work; output does not depend on it.
  std::size_t threads = 1;
};

// frames: 4:4:4, equal sizes, dims multiples of 8.
CompressedVideo encode_sequence(const std::vector<Frame>& frames, const EncodeOptions& options,
                                const GeneratorWeights& generator);
// Returns 4:4:4 frames. Throws DecodeError naming the frame on bad payloads.
std::vector<Frame> decode_sequence(const CompressedVideo& video, std::size_t threads = 1);

// Chroma prediction for one decoded luma plane: 128 + 128 * G(luma), clamped.
Frame colorize(const Plane& luma, const GeneratorWeights& generator);

// Container: "CGV1", u16 version, u16 width, u16 height, u8 anchor subsample
// code, u8 qp, u8 gop size, u32 frame count, u32 weight length + weights,
// then per frame u8 type and, per plane present, u32 length + payload.
// Integers are little-endian.
inline constexpr std::uint16_t kContainerVersion = 1;
std::vector<std::uint8_t> mux(const CompressedVideo& video);
CompressedVideo demux(std::span<const std::uint8_t> bytes);
void write_container(const std::filesystem::path& path, const CompressedVideo& video);
CompressedVideo read_container(const std::filesystem::path& path);

inline constexpr double kDefaultFps = 30.0;

struct BitrateReport {
  std::size_t frame_count = 0;
  double fps = kDefaultFps;
  std::uint64_t anchor_bits = 0;     // anchor plane payloads
  std::uint64_t luma_only_bits = 0;  // luma-only plane payloads
  std::uint64_t model_bits = 0;      // embedded weights
  std::uint64_t overhead_bits = 0;   // header, record types, length fields
  std::uint64_t total_bits = 0;      // the whole container
  std::uint64_t total_bits_without_model = 0;
  double kbps = 0.0;                 // total_bits based
  double kbps_without_model = 0.0;
};

// total_bits == 8 * mux(video).size().
BitrateReport bitrate_report(const CompressedVideo& video, double fps = kDefaultFps);

}  // namespace chromacodec
