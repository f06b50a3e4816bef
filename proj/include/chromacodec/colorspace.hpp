#pragma once

// 8-bit planar frames, full-range BT.601 RGB <-> YCbCr and chroma resampling.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace chromacodec {

enum class SubsamplingMode : std::uint8_t { k444 = 0, k422 = 1, k420 = 2, k400 = 3 };

std::string to_string(SubsamplingMode mode);
SubsamplingMode subsampling_from_string(const std::string& text);
SubsamplingMode subsampling_from_code(std::uint8_t code);

// Chroma plane dimensions for a luma size; ceiling division on odd sizes.
// Returns {0, 0} for 4:0:0.
std::pair<std::size_t, std::size_t> chroma_dims(SubsamplingMode mode, std::size_t width,
                                                std::size_t height);

struct Plane {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> samples;

  Plane() = default;
  Plane(std::size_t w, std::size_t h, std::uint8_t fill = 0);
  Plane(std::size_t w, std::size_t h, std::vector<std::uint8_t> data);

  std::uint8_t at(std::size_t x, std::size_t y) const { return samples[y * width + x]; }
  std::uint8_t& at(std::size_t x, std::size_t y) { return samples[y * width + x]; }
  std::size_t size() const { return samples.size(); }

  friend bool operator==(const Plane&, const Plane&) = default;
};

struct Frame {
  Plane y;
  std::optional<Plane> cb;
  std::optional<Plane> cr;
  SubsamplingMode mode = SubsamplingMode::k444;

  std::size_t width() const { return y.width; }
  std::size_t height() const { return y.height; }
  // Throws DimensionError if chroma presence or size disagrees with mode.
  void validate() const;

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct RgbFrame {
  Plane r, g, b;

  std::size_t width() const { return r.width; }
  std::size_t height() const { return r.height; }
  friend bool operator==(const RgbFrame&, const RgbFrame&) = default;
};

struct Ycc {
  std::uint8_t y, cb, cr;
  friend bool operator==(const Ycc&, const Ycc&) = default;
};

struct Rgb {
  std::uint8_t r, g, b;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

Ycc rgb_to_ycbcr(std::uint8_t r, std::uint8_t g, std::uint8_t b);
Rgb ycbcr_to_rgb(std::uint8_t y, std::uint8_t cb, std::uint8_t cr);

Frame rgb_to_ycbcr(const RgbFrame& rgb);
RgbFrame ycbcr_to_rgb(const Frame& frame);

// Box-average chroma reduction of a 4:4:4 frame, round-half-up. Odd edges
// replicate the last row/column.
Frame subsample(const Frame& frame, SubsamplingMode mode);
// Nearest-neighbour replication back to 4:4:4. Throws ConfigError on 4:0:0.
Frame upsample(const Frame& frame);

// Number of stored 8-bit samples.
std::size_t raw_volume(SubsamplingMode mode, std::size_t width, std::size_t height);
std::size_t raw_volume(const Frame& frame);
std::size_t raw_volume(std::span<const Frame> frames);

// Headerless frame-sequential planar files (I444, I422, I420, or Y-only 4:0:0).
std::vector<Frame> read_raw(std::istream& in, std::size_t width, std::size_t height,
                            SubsamplingMode mode);
std::vector<Frame> read_raw(const std::filesystem::path& path, std::size_t width,
                            std::size_t height, SubsamplingMode mode);
void write_raw(std::ostream& out, std::span<const Frame> frames);
void write_raw(const std::filesystem::path& path, std::span<const Frame> frames);

// Binary PPM (P6, maxval 255).
RgbFrame read_ppm(std::istream& in);
RgbFrame read_ppm(const std::filesystem::path& path);
void write_ppm(std::ostream& out, const RgbFrame& rgb);
void write_ppm(const std::filesystem::path& path, const RgbFrame& rgb);

}  // namespace chromacodec
