#include "chromacodec/colorizer_net.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "chromacodec/errors.hpp"

namespace chromacodec {

namespace {

constexpr double kSlope = 0.2;

Tensor lrelu(const Tensor& x) { return leaky_relu(x, kSlope); }

void add_conv(WeightSet& w, const std::string& name, std::size_t cin, std::size_t cout,
              std::size_t k, std::mt19937_64& rng, bool with_bias = true) {
  const double bound = std::sqrt(3.0 / static_cast<double>(cin * k * k));
  w.add(name + ".w", Tensor::uniform({cout, cin, k, k}, -bound, bound, rng, true));
  if (with_bias) w.add(name + ".b", Tensor::zeros({cout}, true));
}

void add_conv_transpose(WeightSet& w, const std::string& name, std::size_t cin, std::size_t cout,
                        std::size_t k, std::mt19937_64& rng) {
  // Each output pixel of a stride-k, k x k transposed conv sees cin taps.
  const double bound = std::sqrt(3.0 / static_cast<double>(cin));
  w.add(name + ".w", Tensor::uniform({cin, cout, k, k}, -bound, bound, rng, true));
  w.add(name + ".b", Tensor::zeros({cout}, true));
}

Tensor conv(const Tensor& x, const WeightSet& w, const std::string& name, int stride = 1) {
  const Tensor& k = w.get(name + ".w");
  const int pad = static_cast<int>(k.dim(2) / 2);
  const Tensor bias = w.contains(name + ".b") ? w.get(name + ".b") : Tensor();
  return conv2d(x, k, bias, stride, pad);
}

Tensor upconv(const Tensor& x, const WeightSet& w, const std::string& name) {
  return conv_transpose2d(x, w.get(name + ".w"), w.get(name + ".b"), 2, 0);
}

struct Split {
  std::size_t a, b, c;
};

Split multires_split(std::size_t out) {
  if (out < 6) {
    throw ConfigError("multires block needs at least 6 output channels, got " +
                      std::to_string(out));
  }
  return {out / 6, out / 3, out - out / 6 - out / 3};
}

void record(ActivationTrace* trace, const std::string& name, const Tensor& t) {
  if (trace) (*trace)[name] = t.shape();
}

std::string level(const char* stem, int i) { return stem + std::to_string(i); }

// ---- little-endian byte helpers ----

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }
void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  for (int i = 0; i < 2; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class ByteCursor {
 public:
  explicit ByteCursor(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t take(int n) {
    if (pos_ + static_cast<std::size_t>(n) > bytes_.size()) {
      throw DataError("weight file truncated at byte " + std::to_string(pos_));
    }
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(take(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  double f64() { return std::bit_cast<double>(take(8)); }
  std::string text(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw DataError("weight file truncated in entry name");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> serialize(const NetworkConfig& config, const WeightSet& params,
                                    std::uint8_t kind) {
  config.validate();
  std::vector<std::uint8_t> out{'C', 'G', 'W', 'T'};
  put_u16(out, kWeightFormatVersion);
  put_u16(out, static_cast<std::uint16_t>(config.width));
  put_u16(out, static_cast<std::uint16_t>(config.height));
  put_u16(out, static_cast<std::uint16_t>(config.base_channels));
  put_u8(out, static_cast<std::uint8_t>((config.use_attention ? 1 : 0) | (config.use_glrc ? 2 : 0)));
  put_u8(out, kind);
  put_u32(out, static_cast<std::uint32_t>(params.entries().size()));
  for (const auto& [name, t] : params.entries()) {
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u8(out, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_f64(out, v);
  }
  return out;
}

std::pair<NetworkConfig, WeightSet> deserialize(std::span<const std::uint8_t> bytes,
                                                std::uint8_t expected_kind) {
  ByteCursor in(bytes);
  if (in.text(4) != "CGWT") throw DataError("not a weight file (bad magic)");
  const std::uint16_t version = in.u16();
  if (version != kWeightFormatVersion) {
    throw DataError("unsupported weight format version " + std::to_string(version));
  }
  NetworkConfig config;
  config.width = in.u16();
  config.height = in.u16();
  config.base_channels = in.u16();
  const std::uint8_t flags = in.u8();
  config.use_attention = flags & 1;
  config.use_glrc = flags & 2;
  const std::uint8_t kind = in.u8();
  if (kind != expected_kind) {
    throw DataError(std::string("weight file holds a ") + (kind == 0 ? "generator" : "discriminator"));
  }
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("weight file config invalid: ") + e.what());
  }
  // Layout reference for names and shapes.
  const WeightSet layout = kind == 0 ? init_generator(config, 0).params
                                     : init_discriminator(config, 0).params;
  const std::uint32_t count = in.u32();
  if (count != layout.entries().size()) {
    throw DataError("weight file has " + std::to_string(count) + " entries, config expects " +
                    std::to_string(layout.entries().size()));
  }
  WeightSet params;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string name = in.text(in.u16());
    const auto& [want_name, want] = layout.entries()[e];
    if (name != want_name) throw DataError("unexpected weight entry '" + name + "'");
    Shape shape(in.u8());
    for (auto& d : shape) d = in.u32();
    if (shape != want.shape()) {
      throw DataError("weight '" + name + "' has shape " + shape_string(shape) + ", expected " +
                      shape_string(want.shape()));
    }
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) {
      v = in.f64();
      if (!std::isfinite(v)) throw DataError("weight '" + name + "' holds a non-finite value");
    }
    params.add(name, Tensor::from_vector(shape, std::move(values), true));
  }
  if (!in.done()) throw DataError("trailing bytes after weight entries");
  return {config, std::move(params)};
}

}  // namespace

void NetworkConfig::validate() const {
  if (width == 0 || height == 0 || width % 8 != 0 || height % 8 != 0) {
    throw ConfigError("network dims must be positive multiples of 8, got " + std::to_string(width) +
                      "x" + std::to_string(height));
  }
  if (base_channels < 6) {
    throw ConfigError("base channels must be at least 6, got " + std::to_string(base_channels));
  }
  if (width > 65535 || height > 65535 || base_channels > 65535) {
    throw ConfigError("network config exceeds 16-bit fields");
  }
}

void WeightSet::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw ConfigError("duplicate weight name '" + name + "'");
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(value));
}

const Tensor& WeightSet::get(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("missing weight '" + name + "'");
  return entries_[it->second].second;
}

std::vector<Tensor> WeightSet::parameters() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

std::size_t WeightSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

WeightSet WeightSet::clone() const {
  WeightSet out;
  for (const auto& [name, t] : entries_) out.add(name, t.clone(true));
  return out;
}

void init_multires(WeightSet& w, const std::string& prefix, std::size_t in_channels,
                   std::size_t out_channels, std::mt19937_64& rng) {
  const Split s = multires_split(out_channels);
  add_conv(w, prefix + ".c1", in_channels, s.a, 3, rng);
  add_conv(w, prefix + ".c2", s.a, s.b, 3, rng);
  add_conv(w, prefix + ".c3", s.b, s.c, 3, rng);
  add_conv(w, prefix + ".shortcut", in_channels, out_channels, 1, rng);
}

Tensor multires_block(const Tensor& x, const WeightSet& w, const std::string& prefix) {
  const Tensor t1 = lrelu(conv(x, w, prefix + ".c1"));
  const Tensor t2 = lrelu(conv(t1, w, prefix + ".c2"));
  const Tensor t3 = lrelu(conv(t2, w, prefix + ".c3"));
  return lrelu(add(concat({t1, t2, t3}, 1), conv(x, w, prefix + ".shortcut")));
}

void init_optimized_rc(WeightSet& w, const std::string& prefix, std::size_t in_channels,
                       std::size_t out_channels, std::mt19937_64& rng) {
  for (int i = 0; i < kResidualBlocks; ++i) {
    const std::size_t cin = i == 0 ? in_channels : out_channels;
    const std::string block = prefix + ".r" + std::to_string(i + 1);
    add_conv(w, block + ".f3", cin, out_channels, 3, rng);
    add_conv(w, block + ".f1", cin, out_channels, 1, rng);
  }
  add_conv(w, prefix + ".glrc", in_channels, out_channels, 1, rng);
}

Tensor optimized_rc(const Tensor& x, const WeightSet& w, const std::string& prefix, bool use_glrc) {
  Tensor r = x;
  for (int i = 0; i < kResidualBlocks; ++i) {
    const std::string block = prefix + ".r" + std::to_string(i + 1);
    r = lrelu(add(conv(r, w, block + ".f3"), conv(r, w, block + ".f1")));
  }
  if (!use_glrc) return r;
  return add(conv(x, w, prefix + ".glrc"), r);
}

void init_self_attention(WeightSet& w, const std::string& prefix, std::size_t channels,
                         std::mt19937_64& rng) {
  const std::size_t reduced = (channels + 7) / 8;
  add_conv(w, prefix + ".f", channels, reduced, 1, rng);
  // A key bias shifts each softmax row by a constant and would never learn.
  add_conv(w, prefix + ".g", channels, reduced, 1, rng, false);
  add_conv(w, prefix + ".h", channels, channels, 1, rng);
  w.add(prefix + ".lambda", Tensor::scalar(0.0, true));
}

Tensor self_attention(const Tensor& x, const WeightSet& w, const std::string& prefix) {
  const std::size_t n = x.dim(0), c = x.dim(1), l = x.dim(2) * x.dim(3);
  const Tensor f = conv(x, w, prefix + ".f");
  const Tensor g = conv(x, w, prefix + ".g");
  const Tensor h = conv(x, w, prefix + ".h");
  const std::size_t d = f.dim(1);
  const Tensor o = attention(reshape(f, {n, d, l}), reshape(g, {n, d, l}), reshape(h, {n, c, l}));
  return add(mul_scalar(reshape(o, x.shape()), w.get(prefix + ".lambda")), x);
}

GeneratorWeights init_generator(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t c = config.base_channels;
  const std::size_t enc_in[4] = {1, c, c, 2 * c};
  const std::size_t enc_out[4] = {c, c, 2 * c, 2 * c};
  GeneratorWeights g{config, {}};
  WeightSet& w = g.params;
  for (int i = 0; i < 4; ++i) {
    init_multires(w, level("M", i + 1), enc_in[i], enc_out[i], rng);
    init_optimized_rc(w, level("A", i + 1) + ".rc", enc_out[i], enc_out[i], rng);
    init_self_attention(w, level("A", i + 1) + ".sa", enc_out[i], rng);
  }
  // D1 joins M4 and A4; D2..D4 upsample and join A3..A1.
  init_multires(w, "D1", 4 * c, 4 * c, rng);
  const std::size_t dec_in[4] = {0, 4 * c, 4 * c, 2 * c};
  const std::size_t dec_out[4] = {4 * c, 4 * c, 2 * c, 2 * c};
  for (int i = 1; i < 4; ++i) {
    const std::size_t up = dec_in[i] / 2;
    add_conv_transpose(w, level("U", i + 1), dec_in[i], up, 2, rng);
    init_multires(w, level("D", i + 1), up + enc_out[3 - i], dec_out[i], rng);
  }
  add_conv(w, "head", 2 * c, 2, 1, rng);
  return g;
}

Tensor generator_forward(const Tensor& luma, const GeneratorWeights& g, ActivationTrace* trace) {
  const NetworkConfig& cfg = g.config;
  if (luma.rank() != 4 || luma.dim(1) != 1) {
    throw DimensionError("generator expects N x 1 x H x W luma, got " + shape_string(luma.shape()));
  }
  if (luma.dim(2) % 8 != 0 || luma.dim(3) % 8 != 0) {
    throw DimensionError("generator input dims " + shape_string(luma.shape()) +
                         " are not multiples of 8");
  }
  const WeightSet& w = g.params;
  Tensor skips[4];
  Tensor m;
  Tensor x = luma;
  for (int i = 0; i < 4; ++i) {
    if (i > 0) x = maxpool2(m);
    m = multires_block(x, w, level("M", i + 1));
    record(trace, level("M", i + 1), m);
    Tensor a = optimized_rc(m, w, level("A", i + 1) + ".rc", cfg.use_glrc);
    if (cfg.use_attention) a = self_attention(a, w, level("A", i + 1) + ".sa");
    record(trace, level("A", i + 1), a);
    skips[i] = a;
  }
  Tensor d = multires_block(concat({m, skips[3]}, 1), w, "D1");
  record(trace, "D1", d);
  for (int i = 1; i < 4; ++i) {
    const Tensor up = upconv(d, w, level("U", i + 1));
    d = multires_block(concat({up, skips[3 - i]}, 1), w, level("D", i + 1));
    record(trace, level("D", i + 1), d);
  }
  return tanh(conv(d, w, "head"));
}

DiscriminatorWeights init_discriminator(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const std::size_t c = config.base_channels;
  DiscriminatorWeights d{config, {}};
  add_conv(d.params, "C1", 3, c, 3, rng);
  add_conv(d.params, "C2", c, c, 3, rng);
  add_conv(d.params, "C3", c, c, 3, rng);
  add_conv(d.params, "C4", c, c, 3, rng);
  add_conv(d.params, "C5", c, 1, 3, rng);
  return d;
}

Tensor discriminator_forward(const Tensor& image, const DiscriminatorWeights& d,
                             ActivationTrace* trace) {
  if (image.rank() != 4 || image.dim(1) != 3) {
    throw DimensionError("discriminator expects N x 3 x H x W, got " + shape_string(image.shape()));
  }
  if (image.dim(2) % 8 != 0 || image.dim(3) % 8 != 0) {
    throw DimensionError("discriminator input dims " + shape_string(image.shape()) +
                         " are not multiples of 8");
  }
  const WeightSet& w = d.params;
  Tensor x = image;
  const int strides[5] = {2, 2, 2, 1, 1};
  for (int i = 0; i < 5; ++i) {
    x = conv(x, w, level("C", i + 1), strides[i]);
    if (i < 4) x = lrelu(x);
    record(trace, level("C", i + 1), x);
  }
  return sigmoid(x);
}

std::vector<std::uint8_t> serialize_weights(const GeneratorWeights& g) {
  return serialize(g.config, g.params, 0);
}

std::vector<std::uint8_t> serialize_weights(const DiscriminatorWeights& d) {
  return serialize(d.config, d.params, 1);
}

GeneratorWeights deserialize_generator(std::span<const std::uint8_t> bytes) {
  auto [config, params] = deserialize(bytes, 0);
  return {config, std::move(params)};
}

DiscriminatorWeights deserialize_discriminator(std::span<const std::uint8_t> bytes) {
  auto [config, params] = deserialize(bytes, 1);
  return {config, std::move(params)};
}

void save_generator(const std::filesystem::path& path, const GeneratorWeights& g) {
  const auto bytes = serialize_weights(g);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

GeneratorWeights load_generator(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return deserialize_generator(bytes);
}

}  // namespace chromacodec
