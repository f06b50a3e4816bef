#include "chromacodec/colorspace.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "chromacodec/errors.hpp"

namespace chromacodec {

namespace {

std::uint8_t clamp_round(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

std::size_t half_up(std::size_t n) { return (n + 1) / 2; }

void require_same_dims(const Plane& a, const Plane& b, const char* what) {
  if (a.width != b.width) {
    throw DimensionError(std::string(what) + ": width differs (" + std::to_string(a.width) +
                         " vs " + std::to_string(b.width) + ")");
  }
  if (a.height != b.height) {
    throw DimensionError(std::string(what) + ": height differs (" + std::to_string(a.height) +
                         " vs " + std::to_string(b.height) + ")");
  }
}

Plane downsample_plane(const Plane& p, std::size_t fx, std::size_t fy) {
  const std::size_t w = fx == 2 ? half_up(p.width) : p.width;
  const std::size_t h = fy == 2 ? half_up(p.height) : p.height;
  Plane out(w, h);
  const std::size_t count = fx * fy;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      unsigned total = 0;
      for (std::size_t dy = 0; dy < fy; ++dy) {
        const std::size_t sy = std::min(y * fy + dy, p.height - 1);
        for (std::size_t dx = 0; dx < fx; ++dx) {
          const std::size_t sx = std::min(x * fx + dx, p.width - 1);
          total += p.at(sx, sy);
        }
      }
      out.at(x, y) = static_cast<std::uint8_t>((total + count / 2) / count);
    }
  }
  return out;
}

Plane replicate_plane(const Plane& p, std::size_t width, std::size_t height) {
  Plane out(width, height);
  const std::size_t fx = width == p.width ? 1 : 2;
  const std::size_t fy = height == p.height ? 1 : 2;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) out.at(x, y) = p.at(x / fx, y / fy);
  }
  return out;
}

void read_exact(std::istream& in, std::uint8_t* dst, std::size_t n) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
}

}  // namespace

std::string to_string(SubsamplingMode mode) {
  switch (mode) {
    case SubsamplingMode::k444: return "444";
    case SubsamplingMode::k422: return "422";
    case SubsamplingMode::k420: return "420";
    case SubsamplingMode::k400: return "400";
  }
  return "?";
}

SubsamplingMode subsampling_from_string(const std::string& text) {
  if (text == "444" || text == "i444") return SubsamplingMode::k444;
  if (text == "422" || text == "i422") return SubsamplingMode::k422;
  if (text == "420" || text == "i420") return SubsamplingMode::k420;
  if (text == "400" || text == "y") return SubsamplingMode::k400;
  throw ConfigError("unknown subsampling mode '" + text + "'");
}

SubsamplingMode subsampling_from_code(std::uint8_t code) {
  if (code > 3) throw DataError("invalid subsampling code " + std::to_string(code));
  return static_cast<SubsamplingMode>(code);
}

std::pair<std::size_t, std::size_t> chroma_dims(SubsamplingMode mode, std::size_t width,
                                                std::size_t height) {
  switch (mode) {
    case SubsamplingMode::k444: return {width, height};
    case SubsamplingMode::k422: return {half_up(width), height};
    case SubsamplingMode::k420: return {half_up(width), half_up(height)};
    case SubsamplingMode::k400: return {0, 0};
  }
  return {0, 0};
}

Plane::Plane(std::size_t w, std::size_t h, std::uint8_t fill)
    : width(w), height(h), samples(w * h, fill) {}

Plane::Plane(std::size_t w, std::size_t h, std::vector<std::uint8_t> data)
    : width(w), height(h), samples(std::move(data)) {
  if (samples.size() != w * h) {
    throw DimensionError("plane of " + std::to_string(w) + "x" + std::to_string(h) + " given " +
                         std::to_string(samples.size()) + " samples");
  }
}

void Frame::validate() const {
  if (y.samples.size() != y.width * y.height) throw DimensionError("luma sample count mismatch");
  if (mode == SubsamplingMode::k400) {
    if (cb || cr) throw DimensionError("4:0:0 frame carries chroma planes");
    return;
  }
  if (!cb || !cr) throw DimensionError("frame in mode " + to_string(mode) + " lacks chroma");
  const auto [cw, ch] = chroma_dims(mode, y.width, y.height);
  for (const Plane* p : {&*cb, &*cr}) {
    if (p->width != cw) {
      throw DimensionError("chroma width " + std::to_string(p->width) + " != expected " +
                           std::to_string(cw) + " for mode " + to_string(mode));
    }
    if (p->height != ch) {
      throw DimensionError("chroma height " + std::to_string(p->height) + " != expected " +
                           std::to_string(ch) + " for mode " + to_string(mode));
    }
  }
}

Ycc rgb_to_ycbcr(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const double R = r, G = g, B = b;
  return {clamp_round(0.299 * R + 0.587 * G + 0.114 * B),
          clamp_round(128.0 - 0.168736 * R - 0.331264 * G + 0.5 * B),
          clamp_round(128.0 + 0.5 * R - 0.418688 * G - 0.081312 * B)};
}

Rgb ycbcr_to_rgb(std::uint8_t y, std::uint8_t cb, std::uint8_t cr) {
  const double Y = y, Cb = cb - 128.0, Cr = cr - 128.0;
  return {clamp_round(Y + 1.402 * Cr), clamp_round(Y - 0.344136 * Cb - 0.714136 * Cr),
          clamp_round(Y + 1.772 * Cb)};
}

Frame rgb_to_ycbcr(const RgbFrame& rgb) {
  require_same_dims(rgb.r, rgb.g, "rgb_to_ycbcr");
  require_same_dims(rgb.r, rgb.b, "rgb_to_ycbcr");
  const std::size_t w = rgb.width(), h = rgb.height();
  Frame f;
  f.mode = SubsamplingMode::k444;
  f.y = Plane(w, h);
  f.cb = Plane(w, h);
  f.cr = Plane(w, h);
  for (std::size_t i = 0; i < w * h; ++i) {
    const Ycc c = rgb_to_ycbcr(rgb.r.samples[i], rgb.g.samples[i], rgb.b.samples[i]);
    f.y.samples[i] = c.y;
    f.cb->samples[i] = c.cb;
    f.cr->samples[i] = c.cr;
  }
  return f;
}

RgbFrame ycbcr_to_rgb(const Frame& frame) {
  frame.validate();
  if (frame.mode != SubsamplingMode::k444) {
    throw ConfigError("ycbcr_to_rgb expects a 4:4:4 frame, got " + to_string(frame.mode));
  }
  const std::size_t w = frame.width(), h = frame.height();
  RgbFrame out{Plane(w, h), Plane(w, h), Plane(w, h)};
  for (std::size_t i = 0; i < w * h; ++i) {
    const Rgb c = ycbcr_to_rgb(frame.y.samples[i], frame.cb->samples[i], frame.cr->samples[i]);
    out.r.samples[i] = c.r;
    out.g.samples[i] = c.g;
    out.b.samples[i] = c.b;
  }
  return out;
}

Frame subsample(const Frame& frame, SubsamplingMode mode) {
  frame.validate();
  if (frame.mode != SubsamplingMode::k444) {
    throw ConfigError("subsample expects a 4:4:4 frame, got " + to_string(frame.mode));
  }
  Frame out;
  out.y = frame.y;
  out.mode = mode;
  switch (mode) {
    case SubsamplingMode::k444:
      out.cb = frame.cb;
      out.cr = frame.cr;
      break;
    case SubsamplingMode::k422:
      out.cb = downsample_plane(*frame.cb, 2, 1);
      out.cr = downsample_plane(*frame.cr, 2, 1);
      break;
    case SubsamplingMode::k420:
      out.cb = downsample_plane(*frame.cb, 2, 2);
      out.cr = downsample_plane(*frame.cr, 2, 2);
      break;
    case SubsamplingMode::k400:
      break;
  }
  return out;
}

Frame upsample(const Frame& frame) {
  frame.validate();
  if (frame.mode == SubsamplingMode::k400) {
    throw ConfigError("upsample: 4:0:0 frame has no chroma to upsample");
  }
  Frame out;
  out.y = frame.y;
  out.mode = SubsamplingMode::k444;
  out.cb = replicate_plane(*frame.cb, frame.width(), frame.height());
  out.cr = replicate_plane(*frame.cr, frame.width(), frame.height());
  return out;
}

std::size_t raw_volume(SubsamplingMode mode, std::size_t width, std::size_t height) {
  const auto [cw, ch] = chroma_dims(mode, width, height);
  return width * height + 2 * cw * ch;
}

std::size_t raw_volume(const Frame& frame) {
  frame.validate();
  return raw_volume(frame.mode, frame.width(), frame.height());
}

std::size_t raw_volume(std::span<const Frame> frames) {
  std::size_t total = 0;
  for (const auto& f : frames) total += raw_volume(f);
  return total;
}

std::vector<Frame> read_raw(std::istream& in, std::size_t width, std::size_t height,
                            SubsamplingMode mode) {
  if (width == 0 || height == 0) throw ConfigError("read_raw: dimensions must be positive");
  const auto [cw, ch] = chroma_dims(mode, width, height);
  std::vector<Frame> frames;
  while (true) {
    Frame f;
    f.mode = mode;
    f.y = Plane(width, height);
    read_exact(in, f.y.samples.data(), f.y.size());
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0 && in.eof()) break;
    if (got != f.y.size()) {
      throw DataError("raw input truncated inside frame " + std::to_string(frames.size()));
    }
    if (mode != SubsamplingMode::k400) {
      f.cb = Plane(cw, ch);
      f.cr = Plane(cw, ch);
      for (Plane* p : {&*f.cb, &*f.cr}) {
        read_exact(in, p->samples.data(), p->size());
        if (static_cast<std::size_t>(in.gcount()) != p->size()) {
          throw DataError("raw input truncated inside frame " + std::to_string(frames.size()));
        }
      }
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<Frame> read_raw(const std::filesystem::path& path, std::size_t width,
                            std::size_t height, SubsamplingMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_raw(in, width, height, mode);
}

void write_raw(std::ostream& out, std::span<const Frame> frames) {
  for (const auto& f : frames) {
    f.validate();
    auto put = [&](const Plane& p) {
      out.write(reinterpret_cast<const char*>(p.samples.data()),
                static_cast<std::streamsize>(p.size()));
    };
    put(f.y);
    if (f.cb) put(*f.cb);
    if (f.cr) put(*f.cr);
  }
  if (!out) throw DataError("write_raw: stream error");
}

void write_raw(const std::filesystem::path& path, std::span<const Frame> frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot create " + path.string());
  write_raw(out, frames);
}

namespace {

std::string ppm_token(std::istream& in) {
  std::string token;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  return token;
}

std::size_t ppm_number(std::istream& in) {
  const std::string t = ppm_token(in);
  if (t.empty() || !std::all_of(t.begin(), t.end(), [](char ch) { return std::isdigit(ch); })) {
    throw DataError("malformed PPM header field '" + t + "'");
  }
  return std::stoul(t);
}

}  // namespace

RgbFrame read_ppm(std::istream& in) {
  if (ppm_token(in) != "P6") throw DataError("not a binary PPM (P6) file");
  const std::size_t w = ppm_number(in), h = ppm_number(in), maxval = ppm_number(in);
  if (maxval != 255) throw DataError("only 8-bit PPM (maxval 255) is supported");
  if (w == 0 || h == 0) throw DataError("PPM with zero dimension");
  std::vector<std::uint8_t> raw(3 * w * h);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw DataError("PPM data truncated");
  RgbFrame f{Plane(w, h), Plane(w, h), Plane(w, h)};
  for (std::size_t i = 0; i < w * h; ++i) {
    f.r.samples[i] = raw[3 * i];
    f.g.samples[i] = raw[3 * i + 1];
    f.b.samples[i] = raw[3 * i + 2];
  }
  return f;
}

RgbFrame read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_ppm(in);
}

void write_ppm(std::ostream& out, const RgbFrame& rgb) {
  require_same_dims(rgb.r, rgb.g, "write_ppm");
  require_same_dims(rgb.r, rgb.b, "write_ppm");
  out << "P6\n" << rgb.width() << ' ' << rgb.height() << "\n255\n";
  std::vector<std::uint8_t> raw(3 * rgb.r.size());
  for (std::size_t i = 0; i < rgb.r.size(); ++i) {
    raw[3 * i] = rgb.r.samples[i];
    raw[3 * i + 1] = rgb.g.samples[i];
    raw[3 * i + 2] = rgb.b.samples[i];
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError("write_ppm: stream error");
}

void write_ppm(const std::filesystem::path& path, const RgbFrame& rgb) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot create " + path.string());
  write_ppm(out, rgb);
}

}  // namespace chromacodec
