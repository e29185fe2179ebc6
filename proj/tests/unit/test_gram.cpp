#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dyntex/container.hpp"
#include "dyntex/gram.hpp"
#include "oracles.hpp"
#include "test_nets.hpp"

namespace dyntex {
namespace {

namespace fs = std::filesystem;

Tensor<double> rnd(Shape s, std::uint64_t seed) { return Tensor<double>::filled(std::move(s), GaussianFill{0.0, 1.0, seed}); }

std::vector<Tensor<double>> random_video(std::size_t t, std::size_t h, std::size_t w, std::uint64_t seed) {
  std::vector<Tensor<double>> v;
  for (std::size_t i = 0; i < t; ++i) v.push_back(rnd(Shape{h, w, 3}, seed * 1000 + i));
  return v;
}

Tensor<double> block(const Tensor<double>& g, std::size_t n, std::size_t a, std::size_t b) {
  Tensor<double> out(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = g.at(a * n + i, b * n + j);
  return out;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::invalid_argument;
}

TEST(ConcatWindow, SingleFrameIsUnchanged) {
  const auto f = rnd(Shape{4, 3}, 1);
  const std::vector<Tensor<double>> one{f};
  EXPECT_EQ(concat_window<double>(one), f);
}

TEST(ConcatWindow, TwoColumnVectors) {
  const std::vector<Tensor<double>> two{Tensor<double>(Shape{2, 1}, {1, 2}), Tensor<double>(Shape{2, 1}, {3, 4})};
  EXPECT_EQ(concat_window<double>(two), Tensor<double>(Shape{2, 2}, {1, 3, 2, 4}));
}

TEST(ConcatWindow, BlocksEqualTheirSources) {
  const std::vector<Tensor<double>> src{rnd(Shape{4, 2}, 1), rnd(Shape{4, 2}, 2), rnd(Shape{4, 2}, 3)};
  const auto cat = concat_window<double>(src);
  ASSERT_EQ(cat.shape(), Shape({4, 6}));
  for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(column_block(cat, 2 * b, 2), src[b]);
}

TEST(ConcatWindow, Errors) {
  EXPECT_EQ(code_of([] { concat_window<double>(std::span<const Tensor<double>>{}); }), ErrorCode::invalid_argument);
  const std::vector<Tensor<double>> bad{rnd(Shape{4, 2}, 1), rnd(Shape{3, 2}, 2)};
  EXPECT_EQ(code_of([&] { concat_window<double>(bad); }), ErrorCode::shape_mismatch);
}

TEST(Gram, Examples) {
  EXPECT_EQ(gram(Tensor<double>(Shape{2, 2}, {1, 0, 0, 1})), Tensor<double>(Shape{2, 2}, {0.5, 0, 0, 0.5}));
  EXPECT_EQ(gram(Tensor<double>(Shape{2, 2}, {1, 2, 3, 4})), Tensor<double>(Shape{2, 2}, {5, 7, 7, 10}));
  EXPECT_EQ(gram(Tensor<double>(Shape{3, 2})), Tensor<double>(Shape{2, 2}));
}

TEST(Gram, MatchesElementwiseOracleAndIsSymmetricPsd) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto f = rnd(Shape{7, 5}, seed);
    const auto g = gram(f);
    EXPECT_LE(oracle::max_abs_diff(g, oracle::naive_gram(f)), 1e-12);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(g.at(i, j), g.at(j, i));
    for (std::uint64_t k = 0; k < 5; ++k) {
      const auto v = rnd(Shape{5, 1}, 100 + k);
      EXPECT_GE(matmul_tn(v, matmul(g, v))[0], -1e-6);
    }
  }
}

class WindowStats : public ::testing::Test {
 protected:
  WindowStats() : net(make_random_network<double>(testing::two_layer_descriptor(), 7)) {}
  TextureStatistics<double> stats(const std::vector<Tensor<double>>& frames, std::size_t dt) const {
    return compute_statistics<double>(frames, net, layers, dt, {1.0, 1.0});
  }
  Network<double> net;
  std::vector<std::string> layers{"conv1", "conv2"};
};

TEST_F(WindowStats, MatchesBruteForceWindowsForAllSmallCases) {
  for (std::size_t t = 1; t <= 5; ++t)
    for (std::size_t dt = 1; dt <= std::min<std::size_t>(3, t); ++dt) {
      const auto video = random_video(t, 6, 5, t * 10 + dt);
      const auto s = stats(video, dt);
      for (const auto& l : layers) {
        const auto& g = s.grams.at(l).values;
        EXPECT_LE(oracle::max_abs_diff(g, oracle::brute_force_window_gram(net, video, l, dt)), 1e-10)
            << "T=" << t << " dt=" << dt << " " << l;
        // Diagonal blocks: window-average of per-frame static Grams.
        const std::size_t n = g.dim(0) / dt, windows = t - dt + 1;
        for (std::size_t a = 0; a < dt; ++a) {
          Tensor<double> expect(Shape{n, n});
          for (std::size_t i = 0; i < windows; ++i) {
            const auto sg = oracle::naive_gram(oracle::activation_matrix(net, video[i + a], l));
            for (std::size_t e = 0; e < sg.size(); ++e) expect[e] += sg[e] / static_cast<double>(windows);
          }
          EXPECT_LE(oracle::max_abs_diff(block(g, n, a, a), expect), 1e-10);
        }
      }
    }
}

TEST_F(WindowStats, SingleWindowEqualsGramOfConcatenation) {
  const auto video = random_video(3, 5, 5, 2);
  const auto s = stats(video, 3);
  for (const auto& l : layers) {
    std::vector<Tensor<double>> feats;
    for (const auto& f : video) feats.push_back(feature_matrix(forward_features(net, f, {l}).activations.at(l)));
    EXPECT_EQ(s.grams.at(l).values, gram(concat_window<double>(feats)));
  }
}

TEST_F(WindowStats, StaticReductionForOneFrame) {
  const auto video = random_video(1, 6, 6, 3);
  const auto s = stats(video, 1);
  for (const auto& l : layers) {
    EXPECT_LE(oracle::max_abs_diff(s.grams.at(l).values, oracle::naive_gram(oracle::activation_matrix(net, video[0], l))),
              1e-12);
  }
}

TEST_F(WindowStats, ConstantVideoIsLengthIndependent) {
  const auto frame = rnd(Shape{6, 6, 3}, 4);
  const auto short_stats = stats(std::vector<Tensor<double>>(2, frame), 2);
  const auto long_stats = stats(std::vector<Tensor<double>>(7, frame), 2);
  for (const auto& l : layers) {
    const auto& g = long_stats.grams.at(l).values;
    EXPECT_LE(oracle::max_abs_diff(g, short_stats.grams.at(l).values), 1e-10);
    const auto sg = oracle::naive_gram(oracle::activation_matrix(net, frame, l));
    const std::size_t n = sg.dim(0);
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b) EXPECT_LE(oracle::max_abs_diff(block(g, n, a, b), sg), 1e-10);
  }
}

TEST_F(WindowStats, ParameterCountGrowsWithSquareOfWindow) {
  const auto video = random_video(4, 4, 4, 5);
  for (std::size_t dt = 1; dt <= 4; ++dt) {
    const auto s = stats(video, dt);
    const std::size_t n = 5;
    EXPECT_EQ(s.grams.at("conv2").values.size(), dt * dt * n * n);
    EXPECT_EQ(s.grams.at("conv2").channels(), n);
  }
  // N = 64, dt = 2 and 4.
  const auto wide = make_random_network<double>(testing::descriptor({testing::conv("c", 3, 64, 1, 0)}), 1);
  const auto frames = random_video(4, 2, 2, 6);
  const auto static_count = compute_statistics<double>(frames, wide, {"c"}, 1, {1.0}).grams.at("c").values.size();
  EXPECT_EQ(static_count, 64u * 64u);
  EXPECT_EQ(compute_statistics<double>(frames, wide, {"c"}, 2, {1.0}).grams.at("c").values.size(), 4 * static_count);
  EXPECT_EQ(compute_statistics<double>(frames, wide, {"c"}, 4, {1.0}).grams.at("c").values.size(), 16 * static_count);
}

TEST_F(WindowStats, ReversalPermutesBlocks) {
  const std::size_t dt = 3;
  auto video = random_video(5, 5, 4, 8);
  const auto fwd = stats(video, dt);
  std::reverse(video.begin(), video.end());
  const auto rev = stats(video, dt);
  for (const auto& l : layers) {
    const auto& g = fwd.grams.at(l).values;
    const auto& r = rev.grams.at(l).values;
    const std::size_t n = g.dim(0) / dt;
    // P G^T P with P reversing the block order.
    const auto gt = transpose(g);
    for (std::size_t a = 0; a < dt; ++a)
      for (std::size_t b = 0; b < dt; ++b)
        EXPECT_LE(oracle::max_abs_diff(block(r, n, a, b), block(gt, n, dt - 1 - a, dt - 1 - b)), 1e-10);
    EXPECT_GT(oracle::max_abs_diff(block(r, n, 0, 1), block(g, n, 0, 1)), 1e-3);
  }
}

TEST_F(WindowStats, PeriodicVideoIsShiftInvariantOverFullPeriods) {
  const std::size_t period = 3, dt = 2;
  const auto base = random_video(period, 5, 5, 9);
  std::vector<Tensor<double>> video;
  for (std::size_t i = 0; i < 20; ++i) video.push_back(base[i % period]);
  // Two full periods of windows: 2 * period windows need 2 * period + dt - 1 frames.
  const std::size_t len = 2 * period + dt - 1;
  const auto ref = stats(std::vector<Tensor<double>>(video.begin(), video.begin() + len), dt);
  for (std::size_t start = 1; start < 2 * period; ++start) {
    const auto s = stats(std::vector<Tensor<double>>(video.begin() + start, video.begin() + start + len), dt);
    for (const auto& l : layers)
      EXPECT_LE(oracle::max_abs_diff(s.grams.at(l).values, ref.grams.at(l).values), 1e-10) << "start " << start;
  }
}

TEST_F(WindowStats, Errors) {
  const auto video = random_video(2, 4, 4, 10);
  try {
    stats(video, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::consistency);
    EXPECT_NE(std::string(e.what()).find("T < \xCE\x94t"), std::string::npos);
  }
  EXPECT_THROW(compute_statistics<double>(video, net, {}, 1, {}), Error);
  EXPECT_EQ(code_of([&] { compute_statistics<double>(video, net, {"nope"}, 1, {1.0}); }), ErrorCode::unknown_layer);
}

class StatisticsFile : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() / ("dyntex_gram_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto net = make_random_network<float>(testing::two_layer_descriptor(), 3);
    std::vector<Tensor<float>> frames;
    for (std::size_t i = 0; i < 4; ++i) frames.push_back(Tensor<float>::filled(Shape{6, 5, 3}, GaussianFill{0.0, 1.0, i}));
    stats = compute_statistics<float>(frames, net, {"conv1", "conv2"}, 2, {1.0, 0.5});
    path = dir / "tex.dtxs";
  }
  void TearDown() override { fs::remove_all(dir); }

  nlohmann::json sidecar() const {
    std::ifstream in(sidecar_path(path));
    return nlohmann::json::parse(in);
  }
  void write_sidecar(const nlohmann::json& j) const { std::ofstream(sidecar_path(path)) << j.dump(); }

  fs::path dir, path;
  TextureStatistics<float> stats;
};

TEST_F(StatisticsFile, RoundTripIsBitExact) {
  save_statistics(stats, path);
  const auto back = load_statistics(path);
  EXPECT_EQ(back.delta_t, stats.delta_t);
  EXPECT_EQ(back.layer_names, stats.layer_names);
  EXPECT_EQ(back.layer_weights, stats.layer_weights);
  EXPECT_EQ(back.source.frame_count, 4u);
  EXPECT_EQ(back.source.height, 6u);
  EXPECT_EQ(back.source.width, 5u);
  for (const auto& [name, g] : stats.grams) {
    EXPECT_EQ(back.grams.at(name).values, g.values);
    EXPECT_EQ(back.grams.at(name).delta_t, 2u);
  }
  EXPECT_EQ(sidecar().at("format_version").get<int>(), kStatisticsFormatVersion);
}

TEST_F(StatisticsFile, MissingSidecar) {
  save_statistics(stats, path);
  fs::remove(sidecar_path(path));
  EXPECT_EQ(code_of([&] { load_statistics(path); }), ErrorCode::missing_metadata);
}

TEST_F(StatisticsFile, DeltaTDisagreeingWithGramSide) {
  save_statistics(stats, path);
  auto j = sidecar();
  j["delta_t"] = 3;
  write_sidecar(j);
  EXPECT_EQ(code_of([&] { load_statistics(path); }), ErrorCode::consistency);
}

TEST_F(StatisticsFile, VersionMismatch) {
  save_statistics(stats, path);
  auto j = sidecar();
  j["format_version"] = 99;
  write_sidecar(j);
  EXPECT_EQ(code_of([&] { load_statistics(path); }), ErrorCode::bad_version);
}

TEST_F(StatisticsFile, MissingGramTensor) {
  save_statistics(stats, path);
  auto j = sidecar();
  j["layer_names"].push_back("conv9");
  j["layer_weights"].push_back(1.0);
  write_sidecar(j);
  EXPECT_EQ(code_of([&] { load_statistics(path); }), ErrorCode::missing_tensor);
}

TEST_F(StatisticsFile, CorruptPayload) {
  save_statistics(stats, path);
  auto bytes = read_file_bytes(path);
  bytes.resize(bytes.size() - 1);
  write_file_bytes(path, bytes);
  EXPECT_EQ(code_of([&] { load_statistics(path); }), ErrorCode::truncated);
}

TEST_F(StatisticsFile, NonPositiveWeightRejected) {
  stats.layer_weights[0] = 0.0;
  EXPECT_EQ(code_of([&] { validate(stats); }), ErrorCode::consistency);
}

}  // namespace
}  // namespace dyntex
