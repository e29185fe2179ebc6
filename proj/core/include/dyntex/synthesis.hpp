#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "dyntex/gram.hpp"
#include "dyntex/lbfgs.hpp"
#include "dyntex/loss.hpp"
#include "dyntex/network.hpp"

namespace dyntex {

enum class InitMode { noise_joint, from_example };

template <typename T>
struct SynthesisConfig {
  std::shared_ptr<const TextureStatistics<T>> target;
  std::shared_ptr<const Network<T>> net;
  std::size_t n_frames_out = 1;
  InitMode init_mode = InitMode::noise_joint;
  /// from_example: exactly delta_t - 1 preprocessed frames.
  std::vector<Tensor<T>> example_frames;
  std::uint64_t seed = 0;
  LbfgsConfig lbfgs;
  /// White-noise start: N(0, noise_std) in preprocessed space, times noise_scale.
  double noise_std = 1.0;
  double noise_scale = 25.0;
  /// Called after each output frame is final (index, trace). Joint
  /// initialization reports every frame of the window with the shared trace.
  std::function<void(std::size_t, const OptimizationTrace&)> on_frame;

  std::size_t delta_t() const { return target->delta_t; }
  /// [H, W, C] of every output frame, from the statistics' source metadata.
  Shape frame_shape() const;
  void validate() const;
};

struct FrameResult {
  /// Trace of the optimization that produced the frame; empty (no
  /// iterations, zero loss) for frames copied from the example.
  OptimizationTrace trace;
  bool from_example = false;
};

template <typename T>
struct GeneratedVideo {
  std::vector<Tensor<T>> frames;  // preprocessed space
  std::vector<FrameResult> results;
};

/// Noise tensor for output frame `frame_index`, seeded with seed ^ frame_index.
template <typename T>
Tensor<T> noise_frame(const SynthesisConfig<T>& cfg, std::size_t frame_index);

/// Jointly optimizes the first delta_t frames from noise, stacked as one
/// [delta_t, H, W, C] optimization vector.
template <typename T>
std::pair<std::vector<Tensor<T>>, OptimizationTrace> init_frames_joint(const SynthesisConfig<T>& cfg);

/// Optimizes one frame with `context` held fixed. Starts from `init` when
/// given, otherwise from noise_frame(cfg, frame_index).
template <typename T>
std::pair<Tensor<T>, OptimizationTrace> synthesize_frame(const WindowContext<T>& context,
                                                          const SynthesisConfig<T>& cfg,
                                                          std::size_t frame_index,
                                                          std::optional<Tensor<T>> init = std::nullopt);

/// Full sequence of exactly n_frames_out frames. Each new frame sees the
/// previous delta_t - 1 output frames as context.
template <typename T>
GeneratedVideo<T> generate(const SynthesisConfig<T>& cfg);

}  // namespace dyntex
