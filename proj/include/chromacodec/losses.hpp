#pragma once

// Adversarial, pixel, content and color losses plus their weighted mix.
// Every function returns a one-element tensor and stays differentiable in
// its generated-side argument.

#include <cstdint>
#include <string>
#include <vector>

#include "chromacodec/tensor.hpp"

namespace chromacodec {

inline constexpr double kLogFloor = 1e-12;

// mean(-log max(d, 1e-12))
Tensor gan_loss(const Tensor& d_fake);
// mean(-log d_real - log(1 - d_fake)), both floored at 1e-12.
Tensor discriminator_loss(const Tensor& d_real, const Tensor& d_fake);
// Mean squared difference.
Tensor mse_loss(const Tensor& gen, const Tensor& target);

// Fixed feature map psi for the content loss. Weights never require grad.
class FeatureExtractor {
 public:
  struct Layer {
    Tensor weight;  // Cout x Cin x k x k
    Tensor bias;    // Cout
    int stride = 1;
  };

  // psi(x) = x.
  static FeatureExtractor identity();
  // Four seeded 3x3 conv + relu layers (in -> 8 -> 16 -> 16 -> 32, strides 1, 2, 1, 2).
  static FeatureExtractor random_pyramid(std::size_t in_channels, std::uint64_t seed);
  // Imported conv + relu stack, e.g. the early layers of a pretrained network.
  static FeatureExtractor from_layers(std::vector<Layer> layers);

  Tensor operator()(const Tensor& x) const;
  const std::vector<Layer>& layers() const { return layers_; }

 private:
  std::vector<Layer> layers_;
};

// L1 distance of extractor responses divided by the feature element count.
Tensor content_loss(const FeatureExtractor& psi, const Tensor& gen, const Tensor& target);

struct GaussianKernel {
  std::size_t size = 21;
  double theta = 1.0;
  double sigma_x = 3.0, sigma_y = 3.0;
  double mu_x = 0.0, mu_y = 0.0;
  // Row-major size x size, index (l + r) * size + (k + r) for offsets in [-r, r].
  std::vector<double> values;

  double at(int k, int l) const;
};

// theta * exp(-(k - mu_x)^2 / (2 sigma_x) - (l - mu_y)^2 / (2 sigma_y)), not normalised.
GaussianKernel gaussian_kernel(double theta, double sigma = 3.0, std::size_t size = 21);

struct ColorLossParams {
  double theta_gen = 0.062;
  double theta_target = 0.065;
  double sigma = 3.0;
  std::size_t size = 21;
};

// mean((gen * G_gen - target * G_target)^2), per-channel blur with zero
// "same" padding.
Tensor color_loss(const Tensor& gen, const Tensor& target, const ColorLossParams& params = {});
// Channel-wise blur used by color_loss.
Tensor gaussian_blur(const Tensor& x, const GaussianKernel& kernel);

struct LossWeights {
  double gan = 1.0;
  double mse = 100.0;
  double content = 1000.0;
  double color = 100.0;

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

// Loss-function ablation groups:
//   G1 gan + mse, G2 G1 + color, G3 G1 + content, G4 all four.
enum class LossGroup { kG1 = 1, kG2 = 2, kG3 = 3, kG4 = 4 };
LossWeights weights_for_group(LossGroup group);
LossGroup loss_group_from_string(const std::string& text);

struct LossTerms {
  Tensor gan, mse, content, color;
};

struct MixedLoss {
  Tensor total;
  double gan = 0.0, mse = 0.0, content = 0.0, color = 0.0;
};

double mixed_loss(const LossWeights& w, double gan, double mse, double content, double color);
// Terms with zero weight are not added to the graph; their value is still reported.
MixedLoss mixed_loss(const LossWeights& w, const LossTerms& terms);

}  // namespace chromacodec
