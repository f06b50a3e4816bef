#include "chromacodec/colorizer_net.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "chromacodec/errors.hpp"

using namespace chromacodec;

namespace {

NetworkConfig tiny(std::size_t w = 16, std::size_t h = 16, std::size_t c = 8) {
  NetworkConfig cfg;
  cfg.width = w;
  cfg.height = h;
  cfg.base_channels = c;
  return cfg;
}

Tensor random_input(Shape shape, std::uint64_t seed, bool rg = false) {
  std::mt19937_64 rng(seed);
  return Tensor::uniform(std::move(shape), -1.0, 1.0, rng, rg);
}

// Scalar probe: sum(out * R) for a fixed random R.
Tensor project(const Tensor& out, std::uint64_t seed) {
  return sum(mul(out, random_input(out.shape(), seed)));
}

void set_lambdas(WeightSet& w, double value) {
  for (auto& [name, t] : w.entries())
    if (name.ends_with(".lambda")) const_cast<Tensor&>(t).mutable_data()[0] = value;
}

void zero_matching(WeightSet& w, const std::string& needle) {
  for (auto& [name, t] : w.entries())
    if (name.find(needle) != std::string::npos)
      for (auto& v : const_cast<Tensor&>(t).mutable_data()) v = 0.0;
}

bool same_values(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a.at(i) != b.at(i)) return false;
  return true;
}

GradCheckOptions sampled(std::size_t n) {
  GradCheckOptions o;
  o.max_checks_per_tensor = n;
  return o;
}

}  // namespace

TEST(NetworkConfig, Validation) {
  EXPECT_NO_THROW(tiny().validate());
  EXPECT_THROW(tiny(12, 16).validate(), ConfigError);
  EXPECT_THROW(tiny(16, 0).validate(), ConfigError);
  EXPECT_THROW(tiny(16, 16, 5).validate(), ConfigError);
  EXPECT_THROW(init_generator(tiny(16, 20), 1), ConfigError);
}

TEST(MultiRes, ShapeAndChannelLaw) {
  std::mt19937_64 rng(1);
  WeightSet w;
  init_multires(w, "m", 8, 12, rng);
  const Tensor y = multires_block(random_input({1, 8, 16, 16}, 2), w, "m");
  EXPECT_EQ(y.shape(), (Shape{1, 12, 16, 16}));
  EXPECT_EQ(w.get("m.c1.w").dim(0), 2u);
  EXPECT_EQ(w.get("m.c2.w").dim(0), 4u);
  EXPECT_EQ(w.get("m.c3.w").dim(0), 6u);
}

TEST(MultiRes, OddSplitsGiveRemainderToLastBranch) {
  std::mt19937_64 rng(1);
  WeightSet w;
  init_multires(w, "m", 3, 7, rng);
  EXPECT_EQ(w.get("m.c1.w").dim(0), 1u);
  EXPECT_EQ(w.get("m.c2.w").dim(0), 2u);
  EXPECT_EQ(w.get("m.c3.w").dim(0), 4u);
}

TEST(MultiRes, TooFewOutputChannels) {
  std::mt19937_64 rng(1);
  WeightSet w;
  EXPECT_THROW(init_multires(w, "m", 4, 5, rng), ConfigError);
}

TEST(MultiRes, ZeroInputZeroOutput) {
  std::mt19937_64 rng(3);
  WeightSet w;
  init_multires(w, "m", 4, 6, rng);
  const Tensor y = multires_block(Tensor::zeros({1, 4, 8, 8}), w, "m");
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(MultiRes, GradientCheck) {
  std::mt19937_64 rng(4);
  WeightSet w;
  init_multires(w, "m", 3, 6, rng);
  const Tensor x = random_input({1, 3, 6, 6}, 5, true);
  auto leaves = w.parameters();
  leaves.push_back(x);
  const double err = grad_check_leaves([&] { return project(multires_block(x, w, "m"), 6); },
                                       leaves, 7);
  EXPECT_LE(err, 1e-4);
}

TEST(OptimizedRc, ZeroResidualsLeaveExactlyTheGlrcBranch) {
  std::mt19937_64 rng(8);
  WeightSet w;
  init_optimized_rc(w, "rc", 5, 7, rng);
  zero_matching(w, ".r");
  const Tensor x = random_input({1, 5, 8, 8}, 9);
  const Tensor out = optimized_rc(x, w, "rc", true);
  const Tensor glrc = conv2d(x, w.get("rc.glrc.w"), w.get("rc.glrc.b"));
  EXPECT_TRUE(same_values(out, glrc));
}

TEST(OptimizedRc, GlrcToggleDropsTheLongSkip) {
  std::mt19937_64 rng(10);
  WeightSet w;
  init_optimized_rc(w, "rc", 6, 6, rng);
  const Tensor x = random_input({1, 6, 8, 8}, 11);
  const Tensor without = optimized_rc(x, w, "rc", false);
  const Tensor with = optimized_rc(x, w, "rc", true);
  EXPECT_FALSE(same_values(with, without));
  zero_matching(w, ".glrc");
  EXPECT_TRUE(same_values(optimized_rc(x, w, "rc", true), without));
  // Zero residual weights with the toggle off: nothing is left.
  zero_matching(w, ".r");
  const Tensor empty = optimized_rc(x, w, "rc", false);
  for (double v : empty.data()) EXPECT_EQ(v, 0.0);
}

TEST(OptimizedRc, ZeroedBlocksLeaveTheLongSkipExactly) {
  std::mt19937_64 rng(14);
  WeightSet w;
  init_optimized_rc(w, "rc", 5, 7, rng);
  zero_matching(w, ".r");
  const Tensor x = random_input({1, 5, 8, 8}, 15);
  EXPECT_TRUE(same_values(optimized_rc(x, w, "rc", true), conv2d(x, w.get("rc.glrc.w"), w.get("rc.glrc.b"))));
}

TEST(OptimizedRc, GradientCheckThroughFourBlocks) {
  std::mt19937_64 rng(12);
  WeightSet w;
  init_optimized_rc(w, "rc", 3, 4, rng);
  const Tensor x = random_input({1, 3, 5, 5}, 13, true);
  auto leaves = w.parameters();
  leaves.push_back(x);
  const double err =
      grad_check_leaves([&] { return project(optimized_rc(x, w, "rc", true), 14); }, leaves, 15);
  EXPECT_LE(err, 1e-4);
}

TEST(SelfAttention, ZeroGainIsExactIdentity) {
  std::mt19937_64 rng(16);
  WeightSet w;
  init_self_attention(w, "sa", 9, rng);
  EXPECT_EQ(w.get("sa.lambda").item(), 0.0);
  EXPECT_EQ(w.get("sa.f.w").dim(0), 2u);
  const Tensor x = random_input({1, 9, 6, 5}, 17);
  EXPECT_TRUE(same_values(self_attention(x, w, "sa"), x));
}

TEST(SelfAttention, AttentionRowsSumToOne) {
  std::mt19937_64 rng(18);
  WeightSet w;
  init_self_attention(w, "sa", 8, rng);
  const Tensor x = random_input({1, 8, 4, 4}, 19);
  const Tensor f = reshape(conv2d(x, w.get("sa.f.w"), w.get("sa.f.b")), {1, 16});
  const Tensor g = reshape(conv2d(x, w.get("sa.g.w"), Tensor()), {1, 16});
  const Tensor p = softmax(matmul(transpose(f), g), 1);
  for (std::size_t i = 0; i < 16; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 16; ++j) s += p.at(i * 16 + j);
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(SelfAttention, GradientCheckIncludingGain) {
  std::mt19937_64 rng(20);
  WeightSet w;
  init_self_attention(w, "sa", 8, rng);
  set_lambdas(w, 0.5);
  const Tensor x = random_input({1, 8, 4, 3}, 21, true);
  auto leaves = w.parameters();
  leaves.push_back(x);
  const double err =
      grad_check_leaves([&] { return project(self_attention(x, w, "sa"), 22); }, leaves, 23);
  EXPECT_LE(err, 1e-4);
  // The gain itself must receive a gradient once it is nonzero.
  project(self_attention(x, w, "sa"), 22).backward();
  EXPECT_NE(w.get("sa.lambda").grad()[0], 0.0);
}

TEST(Generator, ShapeTableAtDeskConfig) {
  const auto g = init_generator(tiny(64, 64, 8), 1);
  ActivationTrace trace;
  const Tensor out = generator_forward(random_input({1, 1, 64, 64}, 2), g, &trace);
  EXPECT_EQ(out.shape(), (Shape{1, 2, 64, 64}));
  const std::map<std::string, Shape> want = {
      {"M1", {1, 8, 64, 64}},  {"A1", {1, 8, 64, 64}},  {"M2", {1, 8, 32, 32}},
      {"A2", {1, 8, 32, 32}},  {"M3", {1, 16, 16, 16}}, {"A3", {1, 16, 16, 16}},
      {"M4", {1, 16, 8, 8}},   {"A4", {1, 16, 8, 8}},   {"D1", {1, 32, 8, 8}},
      {"D2", {1, 32, 16, 16}}, {"D3", {1, 16, 32, 32}}, {"D4", {1, 16, 64, 64}},
  };
  for (const auto& [name, shape] : want) EXPECT_EQ(trace.at(name), shape) << name;
  for (double v : out.data()) {
    EXPECT_GT(v, -1.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Generator, ShapeLawHoldsForOtherConfigs) {
  for (auto [w, h, c] : {std::tuple{16, 24, 6}, {32, 8, 7}, {8, 16, 10}}) {
    const auto g = init_generator(tiny(w, h, c), 3);
    ActivationTrace t;
    const Tensor out = generator_forward(random_input({1, 1, std::size_t(h), std::size_t(w)}, 4), g, &t);
    const std::size_t W = w, H = h, C = c;
    EXPECT_EQ(out.shape(), (Shape{1, 2, H, W}));
    EXPECT_EQ(t.at("M1"), (Shape{1, C, H, W}));
    EXPECT_EQ(t.at("A2"), (Shape{1, C, H / 2, W / 2}));
    EXPECT_EQ(t.at("M3"), (Shape{1, 2 * C, H / 4, W / 4}));
    EXPECT_EQ(t.at("A4"), (Shape{1, 2 * C, H / 8, W / 8}));
    EXPECT_EQ(t.at("D1"), (Shape{1, 4 * C, H / 8, W / 8}));
    EXPECT_EQ(t.at("D2"), (Shape{1, 4 * C, H / 4, W / 4}));
    EXPECT_EQ(t.at("D3"), (Shape{1, 2 * C, H / 2, W / 2}));
    EXPECT_EQ(t.at("D4"), (Shape{1, 2 * C, H, W}));
  }
}

TEST(Generator, RejectsBadInput) {
  const auto g = init_generator(tiny(), 1);
  EXPECT_THROW(generator_forward(Tensor::zeros({1, 1, 12, 16}), g), DimensionError);
  EXPECT_THROW(generator_forward(Tensor::zeros({1, 2, 16, 16}), g), DimensionError);
}

TEST(Generator, DeterministicPerSeed) {
  const Tensor x = random_input({1, 1, 16, 16}, 5);
  const Tensor a = generator_forward(x, init_generator(tiny(), 7));
  const Tensor b = generator_forward(x, init_generator(tiny(), 7));
  const Tensor c = generator_forward(x, init_generator(tiny(), 8));
  EXPECT_TRUE(same_values(a, b));
  EXPECT_FALSE(same_values(a, c));
}

TEST(Generator, ZeroGainAttentionMatchesAttentionOff) {
  NetworkConfig on = tiny(), off = tiny();
  off.use_attention = false;
  const Tensor x = random_input({1, 1, 16, 16}, 6);
  EXPECT_TRUE(same_values(generator_forward(x, init_generator(on, 9)),
                          generator_forward(x, init_generator(off, 9))));
  auto g = init_generator(on, 9);
  set_lambdas(g.params, 0.3);
  EXPECT_FALSE(same_values(generator_forward(x, g), generator_forward(x, init_generator(off, 9))));
}

TEST(Generator, GlrcToggleChangesOutput) {
  NetworkConfig off = tiny();
  off.use_glrc = false;
  const Tensor x = random_input({1, 1, 16, 16}, 6);
  EXPECT_FALSE(same_values(generator_forward(x, init_generator(tiny(), 9)),
                           generator_forward(x, init_generator(off, 9))));
}

TEST(Generator, EndToEndGradientCheck) {
  auto g = init_generator(tiny(), 11);
  set_lambdas(g.params, 0.5);
  const Tensor x = random_input({1, 1, 16, 16}, 12, true);
  auto leaves = g.params.parameters();
  leaves.push_back(x);
  GradCheckOptions opts = sampled(3);
  opts.skip_kinks = true;
  const auto report =
      grad_check_report([&] { return project(generator_forward(x, g), 13); }, leaves, 14, opts);
  EXPECT_LE(report.max_rel_error, 1e-3);
  EXPECT_GT(report.checked, 400u);
  EXPECT_LE(report.skipped_kinks * 5, report.checked + report.skipped_kinks);
}

TEST(Discriminator, PatchMapShapeAndRange) {
  const auto d = init_discriminator(tiny(64, 64, 8), 1);
  ActivationTrace t;
  const Tensor out = discriminator_forward(random_input({1, 3, 64, 64}, 2), d, &t);
  EXPECT_EQ(out.shape(), (Shape{1, 1, 8, 8}));
  EXPECT_EQ(t.at("C1"), (Shape{1, 8, 32, 32}));
  EXPECT_EQ(t.at("C2"), (Shape{1, 8, 16, 16}));
  EXPECT_EQ(t.at("C3"), (Shape{1, 8, 8, 8}));
  EXPECT_EQ(t.at("C4"), (Shape{1, 8, 8, 8}));
  EXPECT_EQ(t.at("C5"), (Shape{1, 1, 8, 8}));
  for (double v : out.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Discriminator, InputReceivesGradient) {
  const auto d = init_discriminator(tiny(), 3);
  const Tensor x = random_input({1, 3, 16, 16}, 4, true);
  mean(discriminator_forward(x, d)).backward();
  double mag = 0.0;
  for (double v : x.grad()) mag += std::fabs(v);
  EXPECT_GT(mag, 0.0);
}

TEST(Discriminator, GradientCheck) {
  const auto d = init_discriminator(tiny(), 5);
  const Tensor x = random_input({1, 3, 16, 16}, 6, true);
  auto leaves = d.params.parameters();
  leaves.push_back(x);
  const double err = grad_check_leaves([&] { return project(discriminator_forward(x, d), 7); },
                                       leaves, 8, sampled(8));
  EXPECT_LE(err, 1e-3);
}

TEST(Weights, SerializationRoundTripIsByteExact) {
  auto g = init_generator(tiny(16, 24, 6), 21);
  set_lambdas(g.params, 0.125);
  const auto bytes = serialize_weights(g);
  const auto back = deserialize_generator(bytes);
  EXPECT_EQ(back.config, g.config);
  EXPECT_EQ(serialize_weights(back), bytes);
  const Tensor x = random_input({1, 1, 24, 16}, 22);
  EXPECT_TRUE(same_values(generator_forward(x, g), generator_forward(x, back)));

  const auto d = init_discriminator(tiny(), 23);
  const auto dbytes = serialize_weights(d);
  EXPECT_EQ(serialize_weights(deserialize_discriminator(dbytes)), dbytes);
  EXPECT_THROW(deserialize_generator(dbytes), DataError);
}

TEST(Weights, HeaderLayout) {
  NetworkConfig cfg = tiny(32, 16, 8);
  cfg.use_glrc = false;
  const auto bytes = serialize_weights(init_generator(cfg, 1));
  ASSERT_GT(bytes.size(), 16u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CGWT");
  EXPECT_EQ(bytes[4] | (bytes[5] << 8), kWeightFormatVersion);
  EXPECT_EQ(bytes[6] | (bytes[7] << 8), 32);
  EXPECT_EQ(bytes[8] | (bytes[9] << 8), 16);
  EXPECT_EQ(bytes[10] | (bytes[11] << 8), 8);
  EXPECT_EQ(bytes[12], 1);  // attention on, glrc off
  EXPECT_EQ(bytes[13], 0);
}

TEST(Weights, CorruptInputsAreDataErrors) {
  const auto bytes = serialize_weights(init_generator(tiny(), 1));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_generator(bad_magic), DataError);
  EXPECT_THROW(deserialize_generator(std::span(bytes).first(bytes.size() - 3)), DataError);
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_generator(trailing), DataError);
  auto wrong_c = bytes;
  wrong_c[10] = 9;  // config now disagrees with the stored shapes
  EXPECT_THROW(deserialize_generator(wrong_c), DataError);
  auto nan = bytes;
  for (int i = 0; i < 8; ++i) nan[nan.size() - 8 + i] = 0xff;
  EXPECT_THROW(deserialize_generator(nan), DataError);
}

TEST(Weights, FileRoundTrip) {
  const auto g = init_generator(tiny(), 31);
  const auto path = std::filesystem::temp_directory_path() / "chromacodec_weights_test.cgwt";
  save_generator(path, g);
  EXPECT_EQ(serialize_weights(load_generator(path)), serialize_weights(g));
  std::filesystem::remove(path);
  EXPECT_THROW(load_generator(path), DataError);
}
