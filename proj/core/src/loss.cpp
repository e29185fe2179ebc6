#include "dyntex/loss.hpp"

#include <set>

namespace dyntex {

namespace {

template <typename T>
std::set<std::string> layer_set(const TextureStatistics<T>& target) {
  return {target.layer_names.begin(), target.layer_names.end()};
}

template <typename T>
std::map<std::string, Tensor<T>> feature_matrices(const FeatureStack<T>& stack) {
  std::map<std::string, Tensor<T>> out;
  for (const auto& [name, act] : stack.activations) out.emplace(name, feature_matrix(act));
  return out;
}

/// Evaluates the single-window loss over `window` (feature matrices per
/// frame) and, for each frame index in `grad_frames`, the per-layer
/// activation gradients ready for backward_to_input.
template <typename T>
LossBreakdown window_loss(const std::vector<const std::map<std::string, Tensor<T>>*>& window,
                          const TextureStatistics<T>& target, const std::vector<std::size_t>& grad_frames,
                          const std::vector<std::map<std::string, Shape>>& activation_shapes,
                          std::vector<std::map<std::string, Tensor<T>>>& layer_grads) {
  LossBreakdown loss;
  layer_grads.assign(grad_frames.size(), {});
  for (std::size_t l = 0; l < target.layer_names.size(); ++l) {
    const std::string& name = target.layer_names[l];
    const double weight = target.layer_weights[l];
    const Tensor<T>& target_gram = target.grams.at(name).values;

    std::vector<Tensor<T>> blocks;
    blocks.reserve(window.size());
    for (const auto* f : window) blocks.push_back(f->at(name));
    const Tensor<T> features = concat_window(std::span<const Tensor<T>>(blocks));
    const std::size_t m = features.dim(0);
    const std::size_t n = blocks.front().dim(1);
    if (target_gram.shape() != Shape{features.dim(1), features.dim(1)}) {
      throw Error(ErrorCode::shape_mismatch, "layer '" + name + "': window Gram side " +
                                                 std::to_string(features.dim(1)) + " vs target " +
                                                 target_gram.shape().to_string());
    }
    const Tensor<T> diff = axpby(1.0, gram(features), -1.0, target_gram);
    const double e = frobenius_sq(diff) / (4.0 * static_cast<double>(n) * static_cast<double>(n));
    loss.per_layer[name] = e;
    loss.total += weight * e;

    // dE/dF = F (G - G_target) / (M N^2); frame b owns column block b.
    const double scale = weight / (static_cast<double>(m) * static_cast<double>(n) * static_cast<double>(n));
    for (std::size_t k = 0; k < grad_frames.size(); ++k) {
      const std::size_t b = grad_frames[k];
      Tensor<T> d_block = matmul(features, column_block(diff, b * n, n));
      for (T& v : d_block.values()) v = static_cast<T>(static_cast<double>(v) * scale);
      layer_grads[k].emplace(name, std::move(d_block).reshaped(activation_shapes[k].at(name)));
    }
  }
  return loss;
}

template <typename T>
std::map<std::string, Shape> shapes_of(const FeatureStack<T>& stack) {
  std::map<std::string, Shape> out;
  for (const auto& [name, act] : stack.activations) out.emplace(name, act.shape());
  return out;
}

}  // namespace

template <typename T>
WindowContext<T> make_context(const Network<T>& net, std::span<const Tensor<T>> frames,
                              const std::vector<std::string>& layers) {
  const std::set<std::string> requested(layers.begin(), layers.end());
  WindowContext<T> ctx;
  for (const auto& f : frames) {
    ctx.frames.push_back(f);
    ctx.features.push_back(feature_matrices(forward_features(net, f, requested)));
  }
  return ctx;
}

template <typename T>
void push_context(WindowContext<T>& ctx, Tensor<T> frame, std::map<std::string, Tensor<T>> features,
                  std::size_t capacity) {
  ctx.frames.push_back(std::move(frame));
  ctx.features.push_back(std::move(features));
  while (ctx.frames.size() > capacity) {
    ctx.frames.erase(ctx.frames.begin());
    ctx.features.erase(ctx.features.begin());
  }
}

template <typename T>
double layer_loss(const Tensor<T>& window_gram, const Tensor<T>& target_gram, std::size_t channels) {
  require_same_shape(window_gram.shape(), target_gram.shape(), "layer_loss");
  if (channels == 0) throw Error(ErrorCode::invalid_argument, "layer_loss: channel count must be >= 1");
  const double n = static_cast<double>(channels);
  return frobenius_sq(axpby(1.0, window_gram, -1.0, target_gram)) / (4.0 * n * n);
}

template <typename T>
LossBreakdown frame_loss_grad(const Tensor<T>& frame, const WindowContext<T>& ctx,
                              const TextureStatistics<T>& target, const Network<T>& net, Tensor<T>& grad) {
  if (ctx.size() + 1 != target.delta_t) {
    throw Error(ErrorCode::consistency, "frame_loss_grad: context holds " + std::to_string(ctx.size()) +
                                            " frames, Δt=" + std::to_string(target.delta_t) + " needs " +
                                            std::to_string(target.delta_t - 1));
  }
  for (const auto& f : ctx.frames) require_same_shape(f.shape(), frame.shape(), "frame_loss_grad context");

  const FeatureStack<T> stack = forward_features(net, frame, layer_set(target));
  const auto own = feature_matrices(stack);
  std::vector<const std::map<std::string, Tensor<T>>*> window;
  for (const auto& f : ctx.features) window.push_back(&f);
  window.push_back(&own);

  std::vector<std::map<std::string, Tensor<T>>> layer_grads;
  const LossBreakdown loss =
      window_loss(window, target, {target.delta_t - 1}, {shapes_of(stack)}, layer_grads);
  grad = backward_to_input(net, stack, layer_grads.front());
  return loss;
}

template <typename T>
LossBreakdown joint_loss_grad(std::span<const Tensor<T>> frames, const TextureStatistics<T>& target,
                              const Network<T>& net, std::vector<Tensor<T>>& grads) {
  if (frames.size() != target.delta_t) {
    throw Error(ErrorCode::consistency, "joint_loss_grad: got " + std::to_string(frames.size()) +
                                            " frames, Δt=" + std::to_string(target.delta_t));
  }
  for (const auto& f : frames) require_same_shape(f.shape(), frames.front().shape(), "joint_loss_grad frames");

  const auto requested = layer_set(target);
  std::vector<FeatureStack<T>> stacks;
  std::vector<std::map<std::string, Tensor<T>>> features;
  std::vector<std::map<std::string, Shape>> shapes;
  std::vector<std::size_t> all;
  for (std::size_t b = 0; b < frames.size(); ++b) {
    stacks.push_back(forward_features(net, frames[b], requested));
    features.push_back(feature_matrices(stacks.back()));
    shapes.push_back(shapes_of(stacks.back()));
    all.push_back(b);
  }
  std::vector<const std::map<std::string, Tensor<T>>*> window;
  for (const auto& f : features) window.push_back(&f);

  std::vector<std::map<std::string, Tensor<T>>> layer_grads;
  const LossBreakdown loss = window_loss(window, target, all, shapes, layer_grads);
  grads.clear();
  for (std::size_t b = 0; b < frames.size(); ++b) grads.push_back(backward_to_input(net, stacks[b], layer_grads[b]));
  return loss;
}

#define DYNTEX_INSTANTIATE(T)                                                                          \
  template WindowContext<T> make_context(const Network<T>&, std::span<const Tensor<T>>,                \
                                         const std::vector<std::string>&);                             \
  template void push_context(WindowContext<T>&, Tensor<T>, std::map<std::string, Tensor<T>>,           \
                             std::size_t);                                                             \
  template double layer_loss(const Tensor<T>&, const Tensor<T>&, std::size_t);                         \
  template LossBreakdown frame_loss_grad(const Tensor<T>&, const WindowContext<T>&,                    \
                                         const TextureStatistics<T>&, const Network<T>&, Tensor<T>&);  \
  template LossBreakdown joint_loss_grad(std::span<const Tensor<T>>, const TextureStatistics<T>&,      \
                                         const Network<T>&, std::vector<Tensor<T>>&);

DYNTEX_INSTANTIATE(float)
DYNTEX_INSTANTIATE(double)

#undef DYNTEX_INSTANTIATE

}  // namespace dyntex
