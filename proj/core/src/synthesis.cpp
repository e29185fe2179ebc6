#include "dyntex/synthesis.hpp"

#include <set>

namespace dyntex {

template <typename T>
Shape SynthesisConfig<T>::frame_shape() const {
  return Shape{target->source.height, target->source.width, target->source.channels};
}

template <typename T>
void SynthesisConfig<T>::validate() const {
  if (!target || !net) throw Error(ErrorCode::invalid_argument, "synthesis: statistics and network are required");
  dyntex::validate(*target);
  lbfgs.validate();
  for (const std::string& name : target->layer_names) {
    const auto idx = net->descriptor().find(name);
    if (!idx) throw Error(ErrorCode::consistency, "synthesis: network has no layer '" + name + "'");
    const std::size_t channels = net->descriptor().channels_after(*idx);
    if (target->grams.at(name).channels() != channels) {
      throw Error(ErrorCode::consistency, "synthesis: statistics for '" + name + "' have " +
                                              std::to_string(target->grams.at(name).channels()) +
                                              " channels, network produces " + std::to_string(channels));
    }
  }
  if (target->source.channels != net->descriptor().input_channels) {
    throw Error(ErrorCode::consistency, "synthesis: statistics frames have " +
                                            std::to_string(target->source.channels) +
                                            " channels, network expects " +
                                            std::to_string(net->descriptor().input_channels));
  }
  if (!(noise_std >= 0.0) || !(noise_scale >= 0.0)) {
    throw Error(ErrorCode::invalid_argument, "synthesis: noise parameters must be >= 0");
  }
  const std::size_t dt = delta_t();
  if (init_mode == InitMode::noise_joint) {
    if (n_frames_out < dt) {
      throw Error(ErrorCode::consistency, "synthesis: n_frames_out=" + std::to_string(n_frames_out) +
                                              " < Δt=" + std::to_string(dt) + " with joint noise init");
    }
  } else {
    if (example_frames.size() != dt - 1) {
      throw Error(ErrorCode::consistency, "synthesis: from_example needs exactly Δt-1=" + std::to_string(dt - 1) +
                                              " frames, got " + std::to_string(example_frames.size()));
    }
    for (const auto& f : example_frames) require_same_shape(f.shape(), frame_shape(), "synthesis example frame");
    if (n_frames_out < dt - 1) {
      throw Error(ErrorCode::consistency, "synthesis: n_frames_out=" + std::to_string(n_frames_out) +
                                              " is shorter than the " + std::to_string(dt - 1) +
                                              " example frames");
    }
  }
}

template <typename T>
Tensor<T> noise_frame(const SynthesisConfig<T>& cfg, std::size_t frame_index) {
  const std::uint64_t seed = cfg.seed ^ static_cast<std::uint64_t>(frame_index);
  return Tensor<T>::filled(cfg.frame_shape(), GaussianFill{0.0, cfg.noise_std * cfg.noise_scale, seed});
}

template <typename T>
std::pair<std::vector<Tensor<T>>, OptimizationTrace> init_frames_joint(const SynthesisConfig<T>& cfg) {
  cfg.validate();
  const std::size_t dt = cfg.delta_t();
  const Shape fs = cfg.frame_shape();
  const std::size_t per_frame = fs.numel();

  Tensor<T> x0(Shape{dt, fs[0], fs[1], fs[2]});
  for (std::size_t b = 0; b < dt; ++b) {
    const Tensor<T> noise = noise_frame(cfg, b);
    std::copy(noise.data(), noise.data() + per_frame, x0.data() + b * per_frame);
  }

  auto unstack = [&](const Tensor<T>& stacked) {
    std::vector<Tensor<T>> frames;
    for (std::size_t b = 0; b < dt; ++b) {
      std::vector<T> v(stacked.data() + b * per_frame, stacked.data() + (b + 1) * per_frame);
      frames.emplace_back(fs, std::move(v));
    }
    return frames;
  };
  const Objective<T> objective = [&](const Tensor<T>& x, Tensor<T>& grad) {
    const auto frames = unstack(x);
    std::vector<Tensor<T>> grads;
    const LossBreakdown loss = joint_loss_grad(std::span<const Tensor<T>>(frames), *cfg.target, *cfg.net, grads);
    grad = Tensor<T>(x.shape());
    for (std::size_t b = 0; b < dt; ++b) std::copy(grads[b].data(), grads[b].data() + per_frame, grad.data() + b * per_frame);
    return loss.total;
  };

  try {
    auto result = minimize(objective, std::move(x0), cfg.lbfgs);
    return {unstack(result.x), std::move(result.trace)};
  } catch (const Error& e) {
    throw Error(e.code(), "joint initialization of frames 0.." + std::to_string(dt - 1) + ": " + e.what());
  }
}

template <typename T>
std::pair<Tensor<T>, OptimizationTrace> synthesize_frame(const WindowContext<T>& context,
                                                          const SynthesisConfig<T>& cfg,
                                                          std::size_t frame_index,
                                                          std::optional<Tensor<T>> init) {
  if (context.size() + 1 != cfg.delta_t()) {
    throw Error(ErrorCode::consistency, "synthesize_frame: context holds " + std::to_string(context.size()) +
                                            " frames, Δt-1=" + std::to_string(cfg.delta_t() - 1) + " required");
  }
  for (const auto& f : context.frames) require_same_shape(f.shape(), cfg.frame_shape(), "synthesize_frame context");
  Tensor<T> x0 = init ? std::move(*init) : noise_frame(cfg, frame_index);
  require_same_shape(x0.shape(), cfg.frame_shape(), "synthesize_frame init");

  const Objective<T> objective = [&](const Tensor<T>& x, Tensor<T>& grad) {
    return frame_loss_grad(x, context, *cfg.target, *cfg.net, grad).total;
  };
  try {
    auto result = minimize(objective, std::move(x0), cfg.lbfgs);
    return {std::move(result.x), std::move(result.trace)};
  } catch (const Error& e) {
    throw Error(e.code(), "frame " + std::to_string(frame_index) + ": " + e.what());
  }
}

template <typename T>
GeneratedVideo<T> generate(const SynthesisConfig<T>& cfg) {
  cfg.validate();
  const std::size_t dt = cfg.delta_t();
  const auto& layers = cfg.target->layer_names;
  const std::set<std::string> requested(layers.begin(), layers.end());
  GeneratedVideo<T> video;
  WindowContext<T> context;

  auto features_of = [&](const Tensor<T>& frame) {
    std::map<std::string, Tensor<T>> out;
    for (auto& [name, act] : forward_features(*cfg.net, frame, requested).activations) {
      out.emplace(name, feature_matrix(act));
    }
    return out;
  };
  auto emit = [&](Tensor<T> frame, FrameResult result) {
    if (dt > 1) push_context(context, frame, features_of(frame), dt - 1);
    if (cfg.on_frame) cfg.on_frame(video.frames.size(), result.trace);
    video.frames.push_back(std::move(frame));
    video.results.push_back(std::move(result));
  };

  if (cfg.init_mode == InitMode::noise_joint) {
    auto [frames, trace] = init_frames_joint(cfg);
    for (auto& f : frames) emit(std::move(f), FrameResult{trace, false});
  } else {
    for (const auto& f : cfg.example_frames) {
      if (video.frames.size() == cfg.n_frames_out) break;
      emit(f, FrameResult{{}, true});
    }
  }

  while (video.frames.size() < cfg.n_frames_out) {
    const std::size_t index = video.frames.size();
    auto [frame, trace] = synthesize_frame(context, cfg, index);
    emit(std::move(frame), FrameResult{std::move(trace), false});
  }
  return video;
}

#define DYNTEX_INSTANTIATE(T)                                                                           \
  template struct SynthesisConfig<T>;                                                                   \
  template Tensor<T> noise_frame(const SynthesisConfig<T>&, std::size_t);                               \
  template std::pair<std::vector<Tensor<T>>, OptimizationTrace> init_frames_joint(                      \
      const SynthesisConfig<T>&);                                                                       \
  template std::pair<Tensor<T>, OptimizationTrace> synthesize_frame(                                    \
      const WindowContext<T>&, const SynthesisConfig<T>&, std::size_t, std::optional<Tensor<T>>);       \
  template GeneratedVideo<T> generate(const SynthesisConfig<T>&);

DYNTEX_INSTANTIATE(float)
DYNTEX_INSTANTIATE(double)

#undef DYNTEX_INSTANTIATE

}  // namespace dyntex
