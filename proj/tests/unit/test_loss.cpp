#include <gtest/gtest.h>

#include "dyntex/loss.hpp"
#include "oracles.hpp"
#include "test_nets.hpp"

namespace dyntex {
namespace {

using testing::conv;
using testing::descriptor;
using testing::pool;
using testing::relu;

Tensor<double> rnd(Shape s, std::uint64_t seed, double std = 1.0) {
  return Tensor<double>::filled(std::move(s), GaussianFill{0.0, std, seed});
}

std::vector<Tensor<double>> random_video(std::size_t t, Shape s, std::uint64_t seed) {
  std::vector<Tensor<double>> v;
  for (std::size_t i = 0; i < t; ++i) v.push_back(rnd(s, seed * 1000 + i));
  return v;
}

double frame_loss(const Tensor<double>& x, const WindowContext<double>& ctx, const TextureStatistics<double>& target,
                  const Network<double>& net) {
  Tensor<double> g;
  return frame_loss_grad(x, ctx, target, net, g).total;
}

TEST(LayerLoss, Examples) {
  const auto g = rnd(Shape{4, 4}, 1);
  EXPECT_EQ(layer_loss(g, g, 2), 0.0);
  EXPECT_EQ(layer_loss(Tensor<double>(Shape{1, 1}, {3.0}), Tensor<double>(Shape{1, 1}, {1.0}), 1), 1.0);
  const auto a = rnd(Shape{4, 4}, 2), b = rnd(Shape{4, 4}, 3);
  const double base = layer_loss(a, b, 2);
  const double c = 3.0;
  EXPECT_NEAR(layer_loss(axpby(c, a, 0.0, a), axpby(c, b, 0.0, b), 2), c * c * base, 1e-12 * c * c * base);
  EXPECT_THROW(layer_loss(a, Tensor<double>(Shape{2, 2}), 2), Error);
}

class LossFixture : public ::testing::Test {
 protected:
  LossFixture()
      : net(make_random_network<double>(descriptor({conv("c1", 3, 4, 3, 1), relu("r1"), pool("p1", PoolMode::avg),
                                                    conv("c2", 4, 5, 3, 1)}),
                                        5)) {}
  TextureStatistics<double> target_from(const std::vector<Tensor<double>>& video, std::size_t dt,
                                        std::vector<double> w = {1.0, 1.0}) const {
    return compute_statistics<double>(video, net, layers, dt, w);
  }
  double kink_free_step(const std::vector<Tensor<double>>& frames, const std::vector<Tensor<double>>& dirs,
                        double h) const;
  Network<double> net;
  std::vector<std::string> layers{"c1", "c2"};
  Shape frame{8, 8, 3};
};

// Largest step h/2^k for which every frame moved by +-step along its
// direction stays on the same ReLU / max-pool piece.
double LossFixture::kink_free_step(const std::vector<Tensor<double>>& frames, const std::vector<Tensor<double>>& dirs,
                                   double h) const {
  for (int tries = 0; tries < 12; ++tries, h *= 0.5) {
    bool ok = true;
    for (std::size_t k = 0; k < frames.size() && ok; ++k) {
      const auto same = oracle::same_piece_as(net, frames[k]);
      ok = same(axpby(1.0, frames[k], h, dirs[k])) && same(axpby(1.0, frames[k], -h, dirs[k]));
    }
    if (ok) return h;
  }
  return h;
}

TEST_F(LossFixture, FixedPointGivesZeroLossAndGradient) {
  for (std::size_t dt = 1; dt <= 3; ++dt) {
    const auto video = random_video(dt, frame, dt);
    const auto target = target_from(video, dt);
    const auto ctx = make_context<double>(net, std::span(video).first(dt - 1), layers);
    Tensor<double> grad;
    const auto loss = frame_loss_grad(video.back(), ctx, target, net, grad);
    EXPECT_EQ(loss.total, 0.0);
    EXPECT_EQ(max_abs(grad), 0.0);
    std::vector<Tensor<double>> grads;
    EXPECT_EQ(joint_loss_grad<double>(video, target, net, grads).total, 0.0);
    for (const auto& g : grads) EXPECT_EQ(max_abs(g), 0.0);
  }
}

TEST_F(LossFixture, FrameGradientMatchesFiniteDifferences) {
  const auto target = target_from(random_video(4, frame, 1), 2);
  const auto prev = random_video(1, frame, 2);
  const auto ctx = make_context<double>(net, prev, layers);
  const auto x = rnd(frame, 3);
  Tensor<double> grad;
  frame_loss_grad(x, ctx, target, net, grad);
  const auto numeric =
      oracle::central_difference([&](const Tensor<double>& p) { return frame_loss(p, ctx, target, net); }, x, 1e-4,
                                 oracle::same_piece_as(net, x));
  EXPECT_LE(oracle::max_relative_error(grad, numeric), 1e-5);
}

TEST_F(LossFixture, BreakdownTotalsAndNonNegativity) {
  const auto target = target_from(random_video(3, frame, 4), 2, {0.5, 2.0});
  const auto ctx = make_context<double>(net, random_video(1, frame, 5), layers);
  Tensor<double> grad;
  const auto loss = frame_loss_grad(rnd(frame, 6), ctx, target, net, grad);
  double sum = 0.0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    EXPECT_GE(loss.per_layer.at(layers[l]), 0.0);
    sum += target.layer_weights[l] * loss.per_layer.at(layers[l]);
  }
  EXPECT_NEAR(loss.total, sum, 1e-12 * sum);
  EXPECT_GT(loss.total, 0.0);
}

TEST_F(LossFixture, SingleFrameWindowMatchesStaticTextureLoss) {
  const auto target = target_from(random_video(1, frame, 7), 1, {0.7, 1.3});
  std::map<std::string, Tensor<double>> grams;
  for (const auto& l : layers) grams.emplace(l, target.grams.at(l).values);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto x = rnd(frame, 100 + seed);
    Tensor<double> grad;
    const double loss = frame_loss_grad(x, WindowContext<double>{}, target, net, grad).total;
    const auto ref = oracle::static_texture_loss(net, x, layers, {0.7, 1.3}, grams);
    EXPECT_LE(std::abs(loss - ref.loss), 1e-12 * ref.loss);
    EXPECT_LE(oracle::max_abs_diff(grad, ref.grad), 1e-12 * max_abs(ref.grad));
  }
}

TEST_F(LossFixture, JointDirectionalDerivative) {
  for (std::size_t dt = 2; dt <= 3; ++dt) {
    const auto target = target_from(random_video(4, frame, 10 + dt), dt);
    const auto frames = random_video(dt, frame, 20 + dt);
    std::vector<Tensor<double>> grads;
    joint_loss_grad<double>(frames, target, net, grads);
    const auto dirs = random_video(dt, frame, 30 + dt);
    auto eval = [&](double t) {
      std::vector<Tensor<double>> moved;
      for (std::size_t k = 0; k < dt; ++k) moved.push_back(axpby(1.0, frames[k], t, dirs[k]));
      std::vector<Tensor<double>> unused;
      return joint_loss_grad<double>(moved, target, net, unused).total;
    };
    const double h = kink_free_step(frames, dirs, 1e-4);
    const double numeric = (eval(h) - eval(-h)) / (2 * h);
    double analytic = 0.0;
    for (std::size_t k = 0; k < dt; ++k) analytic += dot(grads[k], dirs[k]);
    EXPECT_LE(std::abs(analytic - numeric) / std::abs(numeric), 1e-5) << "dt=" << dt;

    // Perturbing one frame only probes that frame's gradient.
    for (std::size_t k = 0; k < dt; ++k) {
      auto one = [&](double t) {
        std::vector<Tensor<double>> moved = frames;
        moved[k] = axpby(1.0, frames[k], t, dirs[k]);
        std::vector<Tensor<double>> unused;
        return joint_loss_grad<double>(moved, target, net, unused).total;
      };
      std::vector<Tensor<double>> only_k(dt);
      for (std::size_t j = 0; j < dt; ++j) only_k[j] = j == k ? dirs[j] : Tensor<double>(frame);
      const double hk = kink_free_step(frames, only_k, 1e-4);
      const double num_k = (one(hk) - one(-hk)) / (2 * hk);
      EXPECT_LE(std::abs(dot(grads[k], dirs[k]) - num_k) / std::abs(num_k), 1e-5) << "frame " << k;
    }
  }
}

TEST_F(LossFixture, FrameGradientEqualsLastJointGradient) {
  for (std::size_t dt = 1; dt <= 3; ++dt) {
    const auto target = target_from(random_video(4, frame, 40 + dt), dt);
    const auto frames = random_video(dt, frame, 50 + dt);
    std::vector<Tensor<double>> grads;
    const double joint = joint_loss_grad<double>(frames, target, net, grads).total;
    const auto ctx = make_context<double>(net, std::span(frames).first(dt - 1), layers);
    Tensor<double> grad;
    const double single = frame_loss_grad(frames.back(), ctx, target, net, grad).total;
    EXPECT_EQ(single, joint);
    EXPECT_LE(oracle::max_abs_diff(grad, grads.back()), 1e-12 * std::max(1.0, max_abs(grad)));
  }
}

TEST_F(LossFixture, DoublingWeightsDoublesLossAndGradient) {
  auto target = target_from(random_video(3, frame, 60), 2, {0.3, 1.7});
  const auto ctx = make_context<double>(net, random_video(1, frame, 61), layers);
  const auto x = rnd(frame, 62);
  Tensor<double> g1, g2;
  const double l1 = frame_loss_grad(x, ctx, target, net, g1).total;
  for (double& w : target.layer_weights) w *= 2.0;
  const double l2 = frame_loss_grad(x, ctx, target, net, g2).total;
  EXPECT_EQ(l2, 2.0 * l1);
  EXPECT_EQ(g2, axpby(2.0, g1, 0.0, g1));
}

TEST_F(LossFixture, ContextAndFrameCountErrors) {
  const auto target = target_from(random_video(3, frame, 70), 3);
  const auto ctx = make_context<double>(net, random_video(1, frame, 71), layers);
  Tensor<double> g;
  try {
    frame_loss_grad(rnd(frame, 72), ctx, target, net, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::consistency);
  }
  std::vector<Tensor<double>> grads;
  EXPECT_THROW(joint_loss_grad<double>(random_video(2, frame, 73), target, net, grads), Error);
  const auto ctx2 = make_context<double>(net, random_video(2, frame, 74), layers);
  EXPECT_THROW(frame_loss_grad(rnd(Shape{4, 4, 3}, 75), ctx2, target, net, g), Error);
}

TEST(LossFeatureLevel, GramGradientOnFourBySixFeatures) {
  // The identity network makes the feature matrix the image itself: two
  // 2x2x3 frames give a 4x6 window matrix F with N = 3.
  const auto net = testing::identity_network<double>();
  const std::vector<Tensor<double>> src = random_video(2, Shape{2, 2, 3}, 80);
  const auto target = compute_statistics<double>(src, net, {"id"}, 2, {1.0});
  const auto frames = random_video(2, Shape{2, 2, 3}, 81);
  std::vector<Tensor<double>> grads;
  joint_loss_grad<double>(frames, target, net, grads);

  // Explicit (1/(M N^2)) F (G - G_target), split by column block.
  const std::size_t m = 4, n = 3;
  Tensor<double> f(Shape{m, 2 * n});
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) f.at(r, b * n + c) = frames[b][r * n + c];
  const auto g = oracle::naive_gram(f);
  const auto& t = target.grams.at("id").values;
  auto energy = [&](const Tensor<double>& ff) {
    const auto gg = oracle::naive_gram(ff);
    double e = 0.0;
    for (std::size_t i = 0; i < gg.size(); ++i) e += (gg[i] - t[i]) * (gg[i] - t[i]);
    return e / (4.0 * n * n);
  };
  const auto numeric = oracle::central_difference(energy, f, 1e-5);
  Tensor<double> formula(Shape{m, 2 * n});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t a = 0; a < 2 * n; ++a) {
      double s = 0.0;
      for (std::size_t k = 0; k < 2 * n; ++k) s += f.at(r, k) * (g.at(k, a) - t.at(k, a));
      formula.at(r, a) = s / (static_cast<double>(m) * n * n);
    }
  EXPECT_LE(oracle::max_relative_error(formula, numeric), 1e-8);

  Tensor<double> analytic(Shape{m, 2 * n});
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) analytic.at(r, b * n + c) = grads[b][r * n + c];
  EXPECT_LE(oracle::max_relative_error(analytic, numeric), 1e-8);
}

}  // namespace
}  // namespace dyntex
