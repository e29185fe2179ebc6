#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "dyntex/gram.hpp"
#include "dyntex/network.hpp"

namespace dyntex {

struct LossBreakdown {
  double total = 0.0;
  std::map<std::string, double> per_layer;  // E_l, unweighted
};

/// The delta_t - 1 frames preceding the frame being synthesized, with their
/// feature matrices ([M_l, N_l] per texture layer) computed once.
template <typename T>
struct WindowContext {
  std::vector<Tensor<T>> frames;
  std::vector<std::map<std::string, Tensor<T>>> features;

  std::size_t size() const noexcept { return frames.size(); }
};

/// Builds a context by running each frame through the network once.
template <typename T>
WindowContext<T> make_context(const Network<T>& net, std::span<const Tensor<T>> frames,
                              const std::vector<std::string>& layers);

/// Appends a frame whose features are already known, dropping the oldest
/// frame once `capacity` is exceeded.
template <typename T>
void push_context(WindowContext<T>& ctx, Tensor<T> frame, std::map<std::string, Tensor<T>> features,
                  std::size_t capacity);

/// sum_ij (G_window - G_target)_ij^2 / (4 N^2)
template <typename T>
double layer_loss(const Tensor<T>& window_gram, const Tensor<T>& target_gram, std::size_t channels);

/// Loss of the window (ctx frames, then `frame`) against the target and its
/// gradient with respect to `frame` only.
template <typename T>
LossBreakdown frame_loss_grad(const Tensor<T>& frame, const WindowContext<T>& ctx,
                              const TextureStatistics<T>& target, const Network<T>& net, Tensor<T>& grad);

/// Same window loss with gradients for every frame of the window.
template <typename T>
LossBreakdown joint_loss_grad(std::span<const Tensor<T>> frames, const TextureStatistics<T>& target,
                              const Network<T>& net, std::vector<Tensor<T>>& grads);

}  // namespace dyntex
