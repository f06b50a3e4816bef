#include "chromacodec/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "chromacodec/errors.hpp"
#include "chromacodec/frame_tensor.hpp"
#include "chromacodec/gop.hpp"
#include "chromacodec/intra_codec.hpp"

namespace chromacodec {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
}

Adam::Adam(std::vector<Tensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double mhat = m[k] / c1, vhat = v[k] / c2;
      w[k] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

void TrainConfig::validate() const {
  adam.validate();
  weights.validate();
  if (d_steps_per_g_step == 0) throw ConfigError("d_steps_per_g_step must be at least 1");
}

std::vector<TrainingPair> build_training_set(const std::vector<Frame>& sequence,
                                             std::size_t gop_size, int qp) {
  const CodecParams params{qp};
  params.validate();
  std::vector<TrainingPair> pairs;
  for (std::size_t idx : split_gops(sequence.size(), gop_size).anchors) {
    const Frame& f = sequence[idx];
    if (f.mode != SubsamplingMode::k444 || !f.cb || !f.cr) {
      throw ConfigError("training frames must be 4:4:4, frame " + std::to_string(idx) + " is " +
                        to_string(f.mode));
    }
    f.validate();
    const Plane decoded = decode_plane(encode_plane(f.y, params), f.width(), f.height(), params);
    pairs.push_back({plane_to_tensor(decoded), chroma_to_tensor(*f.cb, *f.cr)});
  }
  return pairs;
}

MixedLoss generator_objective(const GeneratorWeights& g, const DiscriminatorWeights& d,
                              const FeatureExtractor& psi, const TrainingPair& pair,
                              const TrainConfig& config) {
  const Tensor gen = generator_forward(pair.input, g);
  const Tensor fake = concat({pair.input, gen}, 1);
  const LossWeights& w = config.weights;
  LossTerms terms;
  if (w.gan > 0.0) terms.gan = gan_loss(discriminator_forward(fake, d));
  terms.mse = mse_loss(gen, pair.target);
  if (w.content > 0.0) terms.content = content_loss(psi, fake, concat({pair.input, pair.target}, 1));
  if (w.color > 0.0) terms.color = color_loss(gen, pair.target, config.color);
  return mixed_loss(w, terms);
}

TrainResult train(const GeneratorWeights& generator, const DiscriminatorWeights& discriminator,
                  const std::vector<TrainingPair>& pairs, const TrainConfig& config,
                  const TrainCallback& on_step) {
  config.validate();
  if (pairs.empty() && config.steps > 0) throw ConfigError("no training pairs");
  for (const auto& p : pairs) {
    if (p.input.rank() != 4 || p.target.rank() != 4 || p.input.dim(1) != 1 ||
        p.target.dim(1) != 2 || p.input.dim(2) != p.target.dim(2) ||
        p.input.dim(3) != p.target.dim(3)) {
      throw DimensionError("training pair shapes " + shape_string(p.input.shape()) + " / " +
                           shape_string(p.target.shape()) + " do not match");
    }
  }
  TrainResult result{{generator.config, generator.params.clone()},
                     {discriminator.config, discriminator.params.clone()},
                     {}};
  const GeneratorWeights& g = result.generator;
  const DiscriminatorWeights& d = result.discriminator;
  Adam g_opt(g.params.parameters(), config.adam);
  Adam d_opt(d.params.parameters(), config.adam);
  const FeatureExtractor psi = FeatureExtractor::random_pyramid(3, config.extractor_seed);
  const bool adversarial = config.weights.gan > 0.0;

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(pairs.size());
  std::size_t cursor = order.size();
  for (std::size_t step = 0; step < config.steps; ++step) {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const TrainingPair& pair = pairs[order[cursor++]];
    LossRecord rec;
    rec.step = step;
    try {
      if (adversarial) {
        const Tensor real = concat({pair.input, pair.target}, 1);
        for (std::size_t k = 0; k < config.d_steps_per_g_step; ++k) {
          Tensor fake;
          {
            NoGradGuard guard;
            fake = concat({pair.input, generator_forward(pair.input, g)}, 1);
          }
          const Tensor loss_d =
              discriminator_loss(discriminator_forward(real, d), discriminator_forward(fake, d));
          loss_d.backward();
          d_opt.step();
          rec.discriminator = loss_d.item();
        }
      }
      const MixedLoss loss = generator_objective(g, d, psi, pair, config);
      rec.gan = loss.gan;
      rec.mse = loss.mse;
      rec.content = loss.content;
      rec.color = loss.color;
      rec.total = loss.total.item();
      if (loss.total.requires_grad()) {
        loss.total.backward();
        g_opt.step();
      }
      for (const auto& p : g.params.entries())
        for (double v : p.second.data())
          if (!std::isfinite(v)) throw NumericError("weight " + p.first + " is not finite");
    } catch (const NumericError& e) {
      throw NumericError("training step " + std::to_string(step) + ": " + e.what());
    }
    result.history.push_back(rec);
    if (on_step) on_step(rec);
  }
  return result;
}

void write_history_csv(std::ostream& out, const std::vector<LossRecord>& history) {
  out << "step,L_GAN,L_MSE,L_content,L_color,L_f,L_D\n";
  const auto old = out.precision(12);
  for (const auto& r : history) {
    out << r.step << ',' << r.gan << ',' << r.mse << ',' << r.content << ',' << r.color << ','
        << r.total << ',' << r.discriminator << '\n';
  }
  out.precision(old);
}

}  // namespace chromacodec
