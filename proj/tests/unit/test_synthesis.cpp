#include <gtest/gtest.h>

#include "dyntex/synthesis.hpp"
#include "oracles.hpp"
#include "test_nets.hpp"

namespace dyntex {
namespace {

using testing::conv;
using testing::descriptor;
using testing::pool;
using testing::relu;

Tensor<double> rnd(Shape s, std::uint64_t seed, double std = 30.0) {
  return Tensor<double>::filled(std::move(s), GaussianFill{0.0, std, seed});
}

std::shared_ptr<const Network<double>> tiny_net() {
  static const auto net = std::make_shared<const Network<double>>(make_random_network<double>(
      descriptor({conv("c1", 3, 4, 3, 1), relu("r1"), pool("p1", PoolMode::avg), conv("c2", 4, 6, 3, 1)}), 3));
  return net;
}

const std::vector<std::string> kLayers{"c1", "c2"};

std::vector<Tensor<double>> smooth_video(std::size_t t, std::size_t side, std::uint64_t seed) {
  // Moving sinusoidal pattern plus a little noise.
  std::vector<Tensor<double>> v;
  for (std::size_t i = 0; i < t; ++i) {
    auto f = rnd(Shape{side, side, 3}, seed * 100 + i, 5.0);
    for (std::size_t y = 0; y < side; ++y)
      for (std::size_t x = 0; x < side; ++x)
        for (std::size_t c = 0; c < 3; ++c)
          f[(y * side + x) * 3 + c] += 40.0 * std::sin(0.7 * static_cast<double>(x + 2 * i) + 0.3 * c) *
                                       std::cos(0.5 * static_cast<double>(y));
    v.push_back(std::move(f));
  }
  return v;
}

SynthesisConfig<double> make_config(const std::vector<Tensor<double>>& source, std::size_t dt, std::size_t iters) {
  SynthesisConfig<double> cfg;
  cfg.net = tiny_net();
  cfg.target = std::make_shared<const TextureStatistics<double>>(
      compute_statistics<double>(source, *cfg.net, kLayers, dt, {1.0, 1.0}));
  cfg.lbfgs.max_iters = iters;
  cfg.n_frames_out = dt;
  cfg.seed = 42;
  return cfg;
}

void expect_non_increasing(const OptimizationTrace& t) {
  double prev = t.initial.loss;
  for (const auto& r : t.iterations) {
    EXPECT_LE(r.loss, prev);
    prev = r.loss;
  }
}

TEST(Synthesis, NoiseFramesDependOnSeedAndIndex) {
  auto cfg = make_config(smooth_video(2, 8, 1), 2, 1);
  const auto a = noise_frame(cfg, 0), b = noise_frame(cfg, 1);
  EXPECT_NE(a, b);
  EXPECT_EQ(a, noise_frame(cfg, 0));
  EXPECT_EQ(a.shape(), Shape({8, 8, 3}));
  cfg.seed = 43;
  EXPECT_NE(a, noise_frame(cfg, 0));
}

TEST(Synthesis, JointInitWithSingleFrameWindowIsStaticSynthesis) {
  auto cfg = make_config(smooth_video(1, 8, 2), 1, 30);
  const auto [frames, trace] = init_frames_joint(cfg);
  ASSERT_EQ(frames.size(), 1u);
  // Replaying the same optimization through the static single-frame objective.
  const Objective<double> obj = [&](const Tensor<double>& x, Tensor<double>& g) {
    Tensor<double> frame_grad;
    const double loss =
        frame_loss_grad(x.reshaped(Shape{8, 8, 3}), WindowContext<double>{}, *cfg.target, *cfg.net, frame_grad).total;
    g = std::move(frame_grad).reshaped(x.shape());
    return loss;
  };
  const auto ref = minimize(obj, noise_frame(cfg, 0).reshaped(Shape{1, 8, 8, 3}), cfg.lbfgs);
  EXPECT_EQ(trace.initial.loss, ref.trace.initial.loss);
  EXPECT_EQ(trace.final_loss(), ref.trace.final_loss());
  EXPECT_LT(trace.final_loss(), trace.initial.loss);
}

TEST(Synthesis, JointInitReducesLossByHundredfold) {
  auto cfg = make_config(smooth_video(2, 32, 3), 2, 500);
  const auto [frames, trace] = init_frames_joint(cfg);
  ASSERT_EQ(frames.size(), 2u);
  EXPECT_LE(trace.final_loss(), 0.01 * trace.initial.loss);
  expect_non_increasing(trace);
}

TEST(Synthesis, DifferentSeedsGiveDifferentFramesOfComparableLoss) {
  auto cfg = make_config(smooth_video(2, 12, 4), 2, 150);
  const auto [fa, ta] = init_frames_joint(cfg);
  cfg.seed = 7;
  const auto [fb, tb] = init_frames_joint(cfg);
  EXPECT_GT(oracle::max_abs_diff(fa[0], fb[0]), 0.0);
  const double hi = std::max(ta.final_loss(), tb.final_loss()), lo = std::min(ta.final_loss(), tb.final_loss());
  EXPECT_LE(hi, 10.0 * lo);
}

TEST(Synthesis, FixedPointStaysPut) {
  const auto frame = smooth_video(1, 8, 5).front();
  const std::vector<Tensor<double>> source(2, frame);
  auto cfg = make_config(source, 2, 50);
  const auto ctx = make_context<double>(*cfg.net, std::span(source).first(1), kLayers);
  const auto [out, trace] = synthesize_frame<double>(ctx, cfg, 1, frame);
  EXPECT_LE(trace.initial.loss, 1e-10);
  EXPECT_LE(trace.initial.grad_norm, 1e-6);
  EXPECT_EQ(out, frame);
}

TEST(Synthesis, SequentialFrameReducesLossAndTraceIsMonotone) {
  auto cfg = make_config(smooth_video(3, 16, 6), 2, 200);
  const auto prev = smooth_video(1, 16, 7);
  const auto ctx = make_context<double>(*cfg.net, prev, kLayers);
  const auto [out, trace] = synthesize_frame(ctx, cfg, 1);
  EXPECT_LT(trace.final_loss(), 0.05 * trace.initial.loss);
  expect_non_increasing(trace);
  EXPECT_LE(trace.iterations.size(), 200u);
}

TEST(Generate, LengthEqualToWindowIsJustJointInit) {
  auto cfg = make_config(smooth_video(3, 8, 8), 2, 20);
  cfg.n_frames_out = 2;
  const auto video = generate(cfg);
  const auto [frames, trace] = init_frames_joint(cfg);
  ASSERT_EQ(video.frames.size(), 2u);
  EXPECT_EQ(video.frames[0], frames[0]);
  EXPECT_EQ(video.frames[1], frames[1]);
}

TEST(Generate, ExampleFramesOnlyWhenLengthMatches) {
  const auto source = smooth_video(3, 8, 9);
  auto cfg = make_config(source, 3, 20);
  cfg.init_mode = InitMode::from_example;
  cfg.example_frames = {source[0], source[1]};
  cfg.n_frames_out = 2;
  std::size_t callbacks = 0;
  cfg.on_frame = [&](std::size_t, const OptimizationTrace& t) {
    ++callbacks;
    EXPECT_TRUE(t.iterations.empty());
  };
  const auto video = generate(cfg);
  ASSERT_EQ(video.frames.size(), 2u);
  EXPECT_EQ(video.frames[0], source[0]);
  EXPECT_EQ(video.frames[1], source[1]);
  EXPECT_TRUE(video.results[0].from_example && video.results[1].from_example);
  EXPECT_EQ(callbacks, 2u);
}

TEST(Generate, ContextIsAlwaysThePreviousOutputFrames) {
  const auto source = smooth_video(4, 8, 10);
  auto cfg = make_config(source, 3, 25);
  cfg.init_mode = InitMode::from_example;
  cfg.example_frames = {source[2], source[3]};
  cfg.n_frames_out = 6;
  const auto video = generate(cfg);
  ASSERT_EQ(video.frames.size(), 6u);
  EXPECT_EQ(video.frames[0], source[2]);
  EXPECT_EQ(video.frames[1], source[3]);
  for (std::size_t t = 2; t < 6; ++t) {
    const auto ctx = make_context<double>(*cfg.net, std::span(video.frames).subspan(t - 2, 2), kLayers);
    Tensor<double> g;
    const double loss = frame_loss_grad(video.frames[t], ctx, *cfg.target, *cfg.net, g).total;
    EXPECT_EQ(loss, video.results[t].trace.final_loss()) << "frame " << t;
    EXPECT_FALSE(video.results[t].from_example);
  }
}

TEST(Generate, DeterministicAndLengthIndependent) {
  auto cfg = make_config(smooth_video(3, 8, 11), 2, 15);
  cfg.n_frames_out = 4;
  const auto a = generate(cfg);
  const auto b = generate(cfg);
  cfg.n_frames_out = 7;
  const auto longer = generate(cfg);
  ASSERT_EQ(longer.frames.size(), 7u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a.frames[i], b.frames[i]);
    EXPECT_EQ(a.frames[i], longer.frames[i]);
  }
}

TEST(Generate, FrameLossDoesNotCollapseOverTwentyFrames) {
  auto cfg = make_config(smooth_video(3, 8, 12), 2, 100);
  cfg.n_frames_out = 20;
  const auto video = generate(cfg);
  ASSERT_EQ(video.frames.size(), 20u);
  const double first = video.results[2].trace.final_loss();
  const double last = video.results[19].trace.final_loss();
  EXPECT_LE(last, 10.0 * first);
}

TEST(Generate, ValidationErrors) {
  const auto source = smooth_video(3, 8, 13);
  auto cfg = make_config(source, 3, 5);
  cfg.n_frames_out = 2;
  EXPECT_THROW(generate(cfg), Error);
  cfg.init_mode = InitMode::from_example;
  cfg.example_frames = {source[0]};
  cfg.n_frames_out = 5;
  try {
    generate(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::consistency);
  }
  cfg.example_frames = {source[0], rnd(Shape{4, 4, 3}, 1)};
  EXPECT_THROW(generate(cfg), Error);
}

}  // namespace
}  // namespace dyntex
