#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dyntex/layers.hpp"
#include "dyntex/tensor.hpp"

namespace dyntex {

enum class LayerKind { conv, relu, pool };

struct ConvSpec {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t zero_padding = 0;
};

struct PoolSpec {
  PoolMode mode = PoolMode::avg;
  std::size_t window = 2;
  std::size_t stride = 2;
};

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::relu;
  ConvSpec conv;  // meaningful for kind == conv
  PoolSpec pool;  // meaningful for kind == pool
};

enum class ChannelOrder { rgb, bgr };

/// Mapping from 8-bit RGB pixels to network input: reorder channels, then
/// subtract `channel_means` (given in network channel order).
struct Preprocessing {
  std::array<double, 3> channel_means{0.0, 0.0, 0.0};
  ChannelOrder channel_order = ChannelOrder::rgb;
};

struct NetworkDescriptor {
  std::vector<LayerSpec> layers;
  std::size_t input_channels = 3;
  Preprocessing preprocessing;

  /// Index of the named layer, or nullopt.
  std::optional<std::size_t> find(const std::string& name) const;
  /// Channel count produced by layer `index`.
  std::size_t channels_after(std::size_t index) const;
  /// Output [H,W,C] of layer `index` for an input of `height` x `width`.
  Shape output_shape(std::size_t index, std::size_t height, std::size_t width) const;
};

/// Checks the descriptor invariants: unique names, positive kernel and pool
/// sizes, and a consistent channel chain. Throws consistency otherwise.
void validate(const NetworkDescriptor& descriptor);

NetworkDescriptor parse_descriptor(const std::string& json_text);
std::string descriptor_to_json(const NetworkDescriptor& descriptor);
NetworkDescriptor load_descriptor(const std::filesystem::path& path);
void save_descriptor(const NetworkDescriptor& descriptor, const std::filesystem::path& path);

template <typename T>
struct ConvWeights {
  Tensor<T> kernel;  // [out, in, kh, kw]
  Tensor<T> bias;    // [out]
  Tensor<T> packed;  // [kh, kw, in, out], derived from kernel
};

/// Fixed-weight feed-forward network. Immutable once constructed and safe to
/// share between threads.
template <typename T>
class Network {
 public:
  /// Takes weights keyed by conv layer name; every conv layer must be present
  /// with exactly its declared kernel and bias shapes.
  Network(NetworkDescriptor descriptor, std::map<std::string, std::pair<Tensor<T>, Tensor<T>>> weights);

  const NetworkDescriptor& descriptor() const noexcept { return descriptor_; }
  const ConvWeights<T>& weights(const std::string& layer) const;
  const std::map<std::string, ConvWeights<T>>& all_weights() const noexcept { return weights_; }

  template <typename U>
  Network<U> cast() const {
    std::map<std::string, std::pair<Tensor<U>, Tensor<U>>> w;
    for (const auto& [name, cw] : weights_) w.emplace(name, std::pair{cw.kernel.template cast<U>(), cw.bias.template cast<U>()});
    return Network<U>(descriptor_, std::move(w));
  }

 private:
  NetworkDescriptor descriptor_;
  std::map<std::string, ConvWeights<T>> weights_;
};

/// Reads the JSON descriptor and the DTXW weights container. Errors: io,
/// bad_magic, bad_version, truncated, missing_tensor, shape_mismatch.
Network<float> load_network(const std::filesystem::path& descriptor_file,
                            const std::filesystem::path& weights_file);

/// Writes `<layer>.weight` and `<layer>.bias` for every conv layer, in
/// descriptor order.
void save_weights(const Network<float>& net, const std::filesystem::path& weights_file);

/// He-style random weights (normal, std sqrt(2 / fan_in)) and small random
/// biases, drawn from the counter generator; reproducible per seed.
template <typename T>
Network<T> make_random_network(const NetworkDescriptor& descriptor, std::uint64_t seed);

/// Activations of the requested layers plus what the reverse pass needs.
template <typename T>
struct FeatureStack {
  struct LayerCache {
    Shape input_shape;
    Tensor<T> relu_input;  // relu layers only
    PoolCache pool;        // pool layers only
  };

  Shape input_shape;
  std::map<std::string, Tensor<T>> activations;  // each [H_l, W_l, N_l]
  std::vector<LayerCache> cache;                 // one per executed layer, in order

  std::size_t executed_layers() const noexcept { return cache.size(); }
};

/// Runs the network up to the deepest requested layer. Errors: unknown_layer,
/// shape_mismatch for a wrong input channel count.
template <typename T>
FeatureStack<T> forward_features(const Network<T>& net, const Tensor<T>& image,
                                 const std::set<std::string>& requested_layers);

/// Pulls the per-layer gradients back to the input image and sums them.
/// Errors: shape_mismatch, unknown_layer (name absent or not executed).
template <typename T>
Tensor<T> backward_to_input(const Network<T>& net, const FeatureStack<T>& stack,
                            const std::map<std::string, Tensor<T>>& layer_grads);

std::string_view to_string(LayerKind kind) noexcept;
std::string_view to_string(PoolMode mode) noexcept;
std::string_view to_string(ChannelOrder order) noexcept;

}  // namespace dyntex
