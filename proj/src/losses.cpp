#include "chromacodec/losses.hpp"

#include <cmath>

#include "chromacodec/errors.hpp"

namespace chromacodec {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

}  // namespace

Tensor gan_loss(const Tensor& d_fake) { return mean(scale(log_floor(d_fake, kLogFloor), -1.0)); }

Tensor discriminator_loss(const Tensor& d_real, const Tensor& d_fake) {
  require_same_shape(d_real, d_fake, "discriminator_loss");
  const Tensor real_term = log_floor(d_real, kLogFloor);
  const Tensor fake_term = log_floor(affine(d_fake, -1.0, 1.0), kLogFloor);
  return mean(scale(add(real_term, fake_term), -1.0));
}

Tensor mse_loss(const Tensor& gen, const Tensor& target) {
  require_same_shape(gen, target, "mse_loss");
  return mean(square(sub(gen, target)));
}

FeatureExtractor FeatureExtractor::identity() { return FeatureExtractor{}; }

FeatureExtractor FeatureExtractor::random_pyramid(std::size_t in_channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t widths[5] = {in_channels, 8, 16, 16, 32};
  const int strides[4] = {1, 2, 1, 2};
  std::vector<Layer> layers;
  for (int i = 0; i < 4; ++i) {
    const double bound = std::sqrt(6.0 / static_cast<double>(widths[i] * 9));
    Layer l;
    l.weight = Tensor::uniform({widths[i + 1], widths[i], 3, 3}, -bound, bound, rng);
    l.bias = Tensor::zeros({widths[i + 1]});
    l.stride = strides[i];
    layers.push_back(std::move(l));
  }
  return from_layers(std::move(layers));
}

FeatureExtractor FeatureExtractor::from_layers(std::vector<Layer> layers) {
  FeatureExtractor f;
  for (auto& l : layers) {
    if (l.weight.rank() != 4 || l.weight.dim(2) != l.weight.dim(3) || l.weight.dim(2) % 2 == 0) {
      throw ConfigError("extractor layer needs an odd square Cout x Cin x k x k kernel, got " +
                        shape_string(l.weight.shape()));
    }
    // Frozen: detached copies that never require grad.
    l.weight = l.weight.detach();
    if (l.bias.defined()) l.bias = l.bias.detach();
    f.layers_.push_back(std::move(l));
  }
  return f;
}

Tensor FeatureExtractor::operator()(const Tensor& x) const {
  Tensor h = x;
  for (const auto& l : layers_) {
    h = relu(conv2d(h, l.weight, l.bias, l.stride, static_cast<int>(l.weight.dim(2) / 2)));
  }
  return h;
}

Tensor content_loss(const FeatureExtractor& psi, const Tensor& gen, const Tensor& target) {
  require_same_shape(gen, target, "content_loss");
  Tensor target_features;
  {
    NoGradGuard guard;
    target_features = psi(target);
  }
  return mean(abs(sub(psi(gen), target_features.detach())));
}

double GaussianKernel::at(int k, int l) const {
  const int r = static_cast<int>(size / 2);
  if (k < -r || k > r || l < -r || l > r) throw DimensionError("kernel offset out of range");
  return values[static_cast<std::size_t>(l + r) * size + static_cast<std::size_t>(k + r)];
}

GaussianKernel gaussian_kernel(double theta, double sigma, std::size_t size) {
  if (size % 2 == 0 || size == 0) throw ConfigError("gaussian kernel size must be odd");
  if (!(sigma > 0.0)) throw ConfigError("gaussian sigma must be positive");
  if (!(theta > 0.0)) throw ConfigError("gaussian theta must be positive");
  GaussianKernel g;
  g.size = size;
  g.theta = theta;
  g.sigma_x = g.sigma_y = sigma;
  g.values.resize(size * size);
  const int r = static_cast<int>(size / 2);
  for (int l = -r; l <= r; ++l)
    for (int k = -r; k <= r; ++k) {
      const double dk = k - g.mu_x, dl = l - g.mu_y;
      g.values[static_cast<std::size_t>(l + r) * size + static_cast<std::size_t>(k + r)] =
          theta * std::exp(-dk * dk / (2.0 * g.sigma_x) - dl * dl / (2.0 * g.sigma_y));
    }
  return g;
}

Tensor gaussian_blur(const Tensor& x, const GaussianKernel& kernel) {
  if (x.rank() != 4) throw DimensionError("gaussian_blur expects NCHW, got " + shape_string(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Tensor k = Tensor::from_vector({1, 1, kernel.size, kernel.size}, kernel.values);
  const Tensor planes = reshape(x, {n * c, 1, h, w});
  return reshape(conv2d(planes, k, Tensor(), 1, static_cast<int>(kernel.size / 2)), {n, c, h, w});
}

Tensor color_loss(const Tensor& gen, const Tensor& target, const ColorLossParams& params) {
  require_same_shape(gen, target, "color_loss");
  const Tensor blurred_gen = gaussian_blur(gen, gaussian_kernel(params.theta_gen, params.sigma, params.size));
  Tensor blurred_target;
  {
    NoGradGuard guard;
    blurred_target = gaussian_blur(target, gaussian_kernel(params.theta_target, params.sigma, params.size));
  }
  return mean(square(sub(blurred_gen, blurred_target.detach())));
}

void LossWeights::validate() const {
  for (double a : {gan, mse, content, color}) {
    if (!std::isfinite(a) || a < 0.0) throw ConfigError("loss weights must be finite and >= 0");
  }
}

LossWeights weights_for_group(LossGroup group) {
  LossWeights w;
  switch (group) {
    case LossGroup::kG1: w.content = 0.0; w.color = 0.0; break;
    case LossGroup::kG2: w.content = 0.0; break;
    case LossGroup::kG3: w.color = 0.0; break;
    case LossGroup::kG4: break;
  }
  return w;
}

LossGroup loss_group_from_string(const std::string& text) {
  if (text == "G1" || text == "g1") return LossGroup::kG1;
  if (text == "G2" || text == "g2") return LossGroup::kG2;
  if (text == "G3" || text == "g3") return LossGroup::kG3;
  if (text == "G4" || text == "g4") return LossGroup::kG4;
  throw ConfigError("unknown loss group '" + text + "' (expected G1..G4)");
}

double mixed_loss(const LossWeights& w, double gan, double mse, double content, double color) {
  return w.gan * gan + w.mse * mse + w.content * content + w.color * color;
}

MixedLoss mixed_loss(const LossWeights& w, const LossTerms& terms) {
  w.validate();
  MixedLoss out;
  const std::pair<double, const Tensor*> parts[4] = {
      {w.gan, &terms.gan}, {w.mse, &terms.mse}, {w.content, &terms.content}, {w.color, &terms.color}};
  double* values[4] = {&out.gan, &out.mse, &out.content, &out.color};
  for (int i = 0; i < 4; ++i) {
    const auto [alpha, t] = parts[i];
    if (!t->defined()) {
      if (alpha != 0.0) throw ConfigError("mixed_loss: weighted term is missing");
      continue;
    }
    *values[i] = t->item();
    if (alpha == 0.0) continue;
    const Tensor weighted = scale(*t, alpha);
    out.total = out.total.defined() ? add(out.total, weighted) : weighted;
  }
  if (!out.total.defined()) out.total = Tensor::scalar(0.0);
  return out;
}

}  // namespace chromacodec
