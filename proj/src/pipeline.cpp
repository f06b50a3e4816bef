#include "chromacodec/pipeline.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <functional>
#include <iterator>
#include <thread>

#include "chromacodec/errors.hpp"
#include "chromacodec/frame_tensor.hpp"

namespace chromacodec {

namespace {

constexpr char kMagic[4] = {'C', 'G', 'V', '1'};

// Runs body(i) for i in [0, n) on up to `threads` workers. The first failure
// by index is rethrown so errors are deterministic too.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void put(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t take(int n, std::ptrdiff_t frame) {
    need(static_cast<std::size_t>(n), frame);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::vector<std::uint8_t> blob(std::size_t n, std::ptrdiff_t frame) {
    need(n, frame);
    std::vector<std::uint8_t> out(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, std::ptrdiff_t frame) const {
    if (bytes_.size() - pos_ < n) throw DecodeError("container truncated", frame);
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::size_t planes_for(FrameType type) { return type == FrameType::kAnchor ? 3 : 1; }

void check_frames(const std::vector<Frame>& frames) {
  if (frames.empty()) throw ConfigError("no frames to encode");
  const std::size_t w = frames[0].width(), h = frames[0].height();
  if (w == 0 || h == 0 || w % 8 != 0 || h % 8 != 0) {
    throw DimensionError("frame dims " + std::to_string(w) + "x" + std::to_string(h) +
                         " are not multiples of 8");
  }
  if (w > 65535 || h > 65535) throw DimensionError("frame dims exceed 65535");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Frame& f = frames[i];
    if (f.width() != w || f.height() != h) {
      throw DimensionError("frame " + std::to_string(i) + " size differs from frame 0");
    }
    if (f.mode != SubsamplingMode::k444) {
      throw ConfigError("frame " + std::to_string(i) + " is " + to_string(f.mode) + ", expected 4:4:4");
    }
    f.validate();
  }
}

}  // namespace

CompressedVideo encode_sequence(const std::vector<Frame>& frames, const EncodeOptions& options,
                                const GeneratorWeights& generator) {
  const CodecParams params{options.qp};
  params.validate();
  if (options.gop_size == 0 || options.gop_size > 255) throw ConfigError("gop size must be in [1, 255]");
  check_frames(frames);
  if (frames.size() > 0xFFFFFFFFu) throw ConfigError("too many frames");

  CompressedVideo video;
  video.width = static_cast<std::uint16_t>(frames[0].width());
  video.height = static_cast<std::uint16_t>(frames[0].height());
  video.anchor_mode = SubsamplingMode::k420;
  video.qp = static_cast<std::uint8_t>(options.qp);
  video.gop_size = static_cast<std::uint8_t>(options.gop_size);
  video.weights = serialize_weights(generator);
  video.frames.resize(frames.size());
  const GopStructure gop = split_gops(frames.size(), options.gop_size);

  parallel_for(frames.size(), options.threads, [&](std::size_t i) {
    FrameRecord& rec = video.frames[i];
    if (gop.is_anchor(i)) {
      rec.type = FrameType::kAnchor;
      const Frame sub = subsample(frames[i], SubsamplingMode::k420);
      for (const Plane* p : {&sub.y, &*sub.cb, &*sub.cr}) rec.planes.push_back(encode_plane(*p, params).bytes);
    } else {
      rec.type = FrameType::kLumaOnly;
      rec.planes.push_back(encode_plane(frames[i].y, params).bytes);
    }
  });
  return video;
}

Frame colorize(const Plane& luma, const GeneratorWeights& generator) {
  NoGradGuard guard;
  const Tensor chroma = generator_forward(plane_to_tensor(luma), generator);
  Frame f;
  f.mode = SubsamplingMode::k444;
  f.y = luma;
  f.cb = tensor_to_plane(chroma, 0);
  f.cr = tensor_to_plane(chroma, 1);
  return f;
}

std::vector<Frame> decode_sequence(const CompressedVideo& video, std::size_t threads) {
  const CodecParams params{video.qp};
  params.validate();
  const GopStructure gop = video.gop();
  const GeneratorWeights generator = deserialize_generator(video.weights);
  const std::size_t w = video.width, h = video.height;
  const auto [cw, ch] = chroma_dims(video.anchor_mode, w, h);

  std::vector<Frame> out(video.frames.size());
  parallel_for(video.frames.size(), threads, [&](std::size_t i) {
    const FrameRecord& rec = video.frames[i];
    const auto idx = static_cast<std::ptrdiff_t>(i);
    const FrameType expected = gop.is_anchor(i) ? FrameType::kAnchor : FrameType::kLumaOnly;
    if (rec.type != expected) throw DecodeError("frame type disagrees with the gop pattern", idx);
    if (rec.planes.size() != planes_for(rec.type)) throw DecodeError("wrong plane count", idx);
    try {
      if (rec.type == FrameType::kAnchor) {
        Frame sub;
        sub.mode = video.anchor_mode;
        sub.y = decode_plane(rec.planes[0], w, h, params);
        sub.cb = decode_plane(rec.planes[1], cw, ch, params);
        sub.cr = decode_plane(rec.planes[2], cw, ch, params);
        out[i] = upsample(sub);
      } else {
        out[i] = colorize(decode_plane(rec.planes[0], w, h, params), generator);
      }
    } catch (const DecodeError& e) {
      if (e.frame_index() >= 0) throw;
      throw DecodeError(e.what(), idx);
    }
  });
  return out;
}

std::vector<std::uint8_t> mux(const CompressedVideo& video) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put(out, kContainerVersion, 2);
  put(out, video.width, 2);
  put(out, video.height, 2);
  put(out, static_cast<std::uint8_t>(video.anchor_mode), 1);
  put(out, video.qp, 1);
  put(out, video.gop_size, 1);
  put(out, video.frames.size(), 4);
  put(out, video.weights.size(), 4);
  out.insert(out.end(), video.weights.begin(), video.weights.end());
  for (const FrameRecord& rec : video.frames) {
    if (rec.planes.size() != planes_for(rec.type)) throw ConfigError("frame record has wrong plane count");
    put(out, static_cast<std::uint8_t>(rec.type), 1);
    for (const auto& p : rec.planes) {
      put(out, p.size(), 4);
      out.insert(out.end(), p.begin(), p.end());
    }
  }
  return out;
}

CompressedVideo demux(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  const auto magic = in.blob(4, -1);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw DecodeError("not a CGV1 container");
  const auto version = in.take(2, -1);
  if (version != kContainerVersion) {
    throw DecodeError("unsupported container version " + std::to_string(version));
  }
  CompressedVideo v;
  v.width = static_cast<std::uint16_t>(in.take(2, -1));
  v.height = static_cast<std::uint16_t>(in.take(2, -1));
  try {
    v.anchor_mode = subsampling_from_code(static_cast<std::uint8_t>(in.take(1, -1)));
  } catch (const DataError& e) {
    throw DecodeError(e.what());
  }
  if (v.anchor_mode == SubsamplingMode::k400) throw DecodeError("anchors must carry chroma");
  v.qp = static_cast<std::uint8_t>(in.take(1, -1));
  v.gop_size = static_cast<std::uint8_t>(in.take(1, -1));
  const auto count = in.take(4, -1);
  if (v.width == 0 || v.height == 0 || v.width % 8 != 0 || v.height % 8 != 0) {
    throw DecodeError("bad frame dims in header");
  }
  if (v.qp > kMaxQp) throw DecodeError("bad qp in header");
  if (v.gop_size == 0) throw DecodeError("gop size 0 in header");
  // Each frame record needs at least 5 bytes.
  if (count > in.remaining() / 5) throw DecodeError("frame count exceeds container size");
  v.weights = in.blob(static_cast<std::size_t>(in.take(4, -1)), -1);
  const GopStructure gop = split_gops(count, v.gop_size);
  for (std::size_t i = 0; i < count; ++i) {
    const auto idx = static_cast<std::ptrdiff_t>(i);
    FrameRecord rec;
    const auto type = in.take(1, idx);
    if (type > 1) throw DecodeError("unknown frame type " + std::to_string(type), idx);
    rec.type = static_cast<FrameType>(type);
    if ((rec.type == FrameType::kAnchor) != gop.is_anchor(i)) {
      throw DecodeError("frame type disagrees with the gop pattern", idx);
    }
    for (std::size_t p = 0; p < planes_for(rec.type); ++p) {
      rec.planes.push_back(in.blob(static_cast<std::size_t>(in.take(4, idx)), idx));
    }
    v.frames.push_back(std::move(rec));
  }
  if (in.remaining() != 0) throw DecodeError("trailing bytes after the last frame");
  return v;
}

void write_container(const std::filesystem::path& path, const CompressedVideo& video) {
  const auto bytes = mux(video);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write to " + path.string() + " failed");
}

CompressedVideo read_container(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return demux(bytes);
}

BitrateReport bitrate_report(const CompressedVideo& video, double fps) {
  if (!(fps > 0.0)) throw ConfigError("fps must be positive");
  BitrateReport r;
  r.frame_count = video.frames.size();
  r.fps = fps;
  r.model_bits = 8ull * video.weights.size();
  std::uint64_t overhead_bytes = 4 + 2 + 2 + 2 + 1 + 1 + 1 + 4 + 4;
  for (const FrameRecord& rec : video.frames) {
    overhead_bytes += 1 + 4 * rec.planes.size();
    std::uint64_t bits = 0;
    for (const auto& p : rec.planes) bits += 8ull * p.size();
    (rec.type == FrameType::kAnchor ? r.anchor_bits : r.luma_only_bits) += bits;
  }
  r.overhead_bits = 8 * overhead_bytes;
  r.total_bits = r.anchor_bits + r.luma_only_bits + r.model_bits + r.overhead_bits;
  r.total_bits_without_model = r.total_bits - r.model_bits;
  if (r.frame_count > 0) {
    const double per = fps / (1000.0 * static_cast<double>(r.frame_count));
    r.kbps = static_cast<double>(r.total_bits) * per;
    r.kbps_without_model = static_cast<double>(r.total_bits_without_model) * per;
  }
  return r;
}

}  // namespace chromacodec
