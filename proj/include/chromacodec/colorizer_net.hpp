#pragma once

// Chroma generator (MultiResUNet with optimized residual skip paths and
// self-attention) and a patch discriminator, built on the tensor engine.
//
// Generator layout for base channels C on a W x H input:
//   M1 W     x H     x C    A1 = attention(rc(M1))
//   M2 W/2   x H/2   x C    A2
//   M3 W/4   x H/4   x 2C   A3
//   M4 W/8   x H/8   x 2C   A4
//   D1 W/8   x H/8   x 4C   multires(M4 ++ A4)
//   D2 W/4   x H/4   x 4C   multires(up(D1) ++ A3)
//   D3 W/2   x H/2   x 2C   multires(up(D2) ++ A2)
//   D4 W     x H     x 2C   multires(up(D3) ++ A1)
//   out      W x H x 2      tanh(conv1x1(D4))
// Discriminator: C1..C3 stride-2 3x3 convs to W/8 x H/8 x C, C4 stride 1,
// C5 to a single channel, sigmoid.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "chromacodec/tensor.hpp"

namespace chromacodec {

struct NetworkConfig {
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t base_channels = 8;
  bool use_attention = true;
  bool use_glrc = true;

  // Throws ConfigError: dims must be positive multiples of 8, C >= 6.
  void validate() const;
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

// Ordered named parameter collection.
class WeightSet {
 public:
  void add(const std::string& name, Tensor value);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  // Deep copy; the copies are fresh leaves that require grad.
  WeightSet clone() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

struct GeneratorWeights {
  NetworkConfig config;
  WeightSet params;
};

struct DiscriminatorWeights {
  NetworkConfig config;
  WeightSet params;
};

// Activation shapes by layer name (M1..M4, A1..A4, D1..D4, C1..C5).
using ActivationTrace = std::map<std::string, Shape>;

// Fan-in scaled uniform weights, zero biases, attention gains at 0.
GeneratorWeights init_generator(const NetworkConfig& config, std::uint64_t seed);
DiscriminatorWeights init_discriminator(const NetworkConfig& config, std::uint64_t seed);

// Building blocks. Each reads its parameters from `w` under `prefix`.
void init_multires(WeightSet& w, const std::string& prefix, std::size_t in_channels,
                   std::size_t out_channels, std::mt19937_64& rng);
Tensor multires_block(const Tensor& x, const WeightSet& w, const std::string& prefix);

void init_optimized_rc(WeightSet& w, const std::string& prefix, std::size_t in_channels,
                       std::size_t out_channels, std::mt19937_64& rng);
// Four chained residual blocks (3x3 conv + 1x1 shortcut) plus, when
// use_glrc, a 1x1 convolution of the block input added to the result.
Tensor optimized_rc(const Tensor& x, const WeightSet& w, const std::string& prefix, bool use_glrc);
inline constexpr int kResidualBlocks = 4;

void init_self_attention(WeightSet& w, const std::string& prefix, std::size_t channels,
                         std::mt19937_64& rng);
// y = lambda * o + x with o = softmax(f(x)^T g(x)) applied to h(x).
// The gain lives at prefix + ".lambda".
Tensor self_attention(const Tensor& x, const WeightSet& w, const std::string& prefix);

// luma: 1 x 1 x H x W in [-1, 1]; returns 1 x 2 x H x W in (-1, 1).
Tensor generator_forward(const Tensor& luma, const GeneratorWeights& g,
                         ActivationTrace* trace = nullptr);
// image: 1 x 3 x H x W (Y, Cb, Cr normalised); returns 1 x 1 x H/8 x W/8 in (0, 1).
Tensor discriminator_forward(const Tensor& image, const DiscriminatorWeights& d,
                             ActivationTrace* trace = nullptr);

// Weight file: "CGWT", u16 version, u16 W, u16 H, u16 C, u8 flags
// (bit0 attention, bit1 glrc), u8 kind (0 generator, 1 discriminator),
// u32 entry count, then per entry u16 name length, name bytes, u8 rank,
// u32 dims, little-endian f64 values.
inline constexpr std::uint16_t kWeightFormatVersion = 1;

std::vector<std::uint8_t> serialize_weights(const GeneratorWeights& g);
std::vector<std::uint8_t> serialize_weights(const DiscriminatorWeights& d);
// Throws DataError on malformed input or names/shapes that disagree with the
// embedded config.
GeneratorWeights deserialize_generator(std::span<const std::uint8_t> bytes);
DiscriminatorWeights deserialize_discriminator(std::span<const std::uint8_t> bytes);

void save_generator(const std::filesystem::path& path, const GeneratorWeights& g);
GeneratorWeights load_generator(const std::filesystem::path& path);

}  // namespace chromacodec
