#pragma once

// Adam and the adversarial training loop over anchor-frame pairs.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "chromacodec/colorizer_net.hpp"
#include "chromacodec/colorspace.hpp"
#include "chromacodec/losses.hpp"

namespace chromacodec {

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  // One update from the parameters' current gradients. Parameters that have
  // never received a gradient are left alone.
  void step();
  std::size_t steps_taken() const { return t_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

struct TrainConfig {
  AdamConfig adam;
  std::size_t steps = 300;
  std::uint64_t seed = 7;
  LossWeights weights;
  ColorLossParams color;
  std::size_t d_steps_per_g_step = 1;
  // Seed of the frozen content-loss feature extractor.
  std::uint64_t extractor_seed = 1234;

  void validate() const;
};

struct TrainingPair {
  Tensor input;   // 1 x 1 x H x W decoded luma, normalised
  Tensor target;  // 1 x 2 x H x W pristine chroma, normalised
};

// Anchor frames {0, g, 2g, ...} of a 4:4:4 sequence. Luma passes through the
// intra codec at qp; chroma is taken untouched.
std::vector<TrainingPair> build_training_set(const std::vector<Frame>& sequence,
                                             std::size_t gop_size, int qp);

struct LossRecord {
  std::size_t step = 0;
  double gan = 0.0, mse = 0.0, content = 0.0, color = 0.0;
  double total = 0.0;
  double discriminator = 0.0;
};

struct TrainResult {
  GeneratorWeights generator;
  DiscriminatorWeights discriminator;
  std::vector<LossRecord> history;
};

// Generator-side loss terms for one pair: 3-channel (luma, chroma) images
// feed the discriminator and the content extractor.
MixedLoss generator_objective(const GeneratorWeights& g, const DiscriminatorWeights& d,
                              const FeatureExtractor& psi, const TrainingPair& pair,
                              const TrainConfig& config);

using TrainCallback = std::function<void(const LossRecord&)>;

// Inputs are deep-copied; the returned weights are the trained copies.
// Throws NumericError naming the step when a loss or weight turns non-finite.
TrainResult train(const GeneratorWeights& generator, const DiscriminatorWeights& discriminator,
                  const std::vector<TrainingPair>& pairs, const TrainConfig& config,
                  const TrainCallback& on_step = {});

// Header: step,L_GAN,L_MSE,L_content,L_color,L_f,L_D
void write_history_csv(std::ostream& out, const std::vector<LossRecord>& history);

}  // namespace chromacodec
