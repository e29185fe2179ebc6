#pragma once

// Descriptor builders for the small random networks used across the suites.

#include <string>
#include <vector>

#include "dyntex/network.hpp"

namespace dyntex::testing {

inline LayerSpec conv(std::string name, std::size_t in, std::size_t out, std::size_t k, std::size_t pad,
                      std::size_t stride = 1) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::conv;
  l.conv = ConvSpec{out, in, k, k, stride, pad};
  return l;
}

inline LayerSpec relu(std::string name) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::relu;
  return l;
}

inline LayerSpec pool(std::string name, PoolMode mode, std::size_t window = 2, std::size_t stride = 2) {
  LayerSpec l;
  l.name = std::move(name);
  l.kind = LayerKind::pool;
  l.pool = PoolSpec{mode, window, stride};
  return l;
}

inline NetworkDescriptor descriptor(std::vector<LayerSpec> layers, std::size_t input_channels = 3) {
  NetworkDescriptor d;
  d.layers = std::move(layers);
  d.input_channels = input_channels;
  return d;
}

/// conv1_1 .. conv5_1 with ReLU and 2x2 pooling in between, the same layer
/// pattern as the VGG-19 prefix but with a handful of channels.
inline NetworkDescriptor five_block_descriptor(PoolMode mode = PoolMode::avg, std::size_t width = 8) {
  const std::size_t c1 = width, c2 = width + width / 2, c3 = 2 * width, c4 = 2 * width, c5 = 2 * width;
  return descriptor({conv("conv1_1", 3, c1, 3, 1), relu("relu1_1"), pool("pool1", mode),
                     conv("conv2_1", c1, c2, 3, 1), relu("relu2_1"), pool("pool2", mode),
                     conv("conv3_1", c2, c3, 3, 1), relu("relu3_1"), pool("pool3", mode),
                     conv("conv4_1", c3, c4, 3, 1), relu("relu4_1"), pool("pool4", mode),
                     conv("conv5_1", c4, c5, 3, 1)});
}

inline const std::vector<std::string>& five_layers() {
  static const std::vector<std::string> names{"conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1"};
  return names;
}

/// Two conv layers with a ReLU between; features taken at both convs.
inline NetworkDescriptor two_layer_descriptor(std::size_t c1 = 4, std::size_t c2 = 5) {
  return descriptor({conv("conv1", 3, c1, 3, 1), relu("relu1"), conv("conv2", c1, c2, 3, 1)});
}

/// Identity network: a single 1x1 conv whose kernel is the 3x3 identity.
template <typename T>
Network<T> identity_network() {
  NetworkDescriptor d = descriptor({conv("id", 3, 3, 1, 0)});
  Tensor<T> k(Shape{3, 3, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) k[c * 3 + c] = T{1};
  std::map<std::string, std::pair<Tensor<T>, Tensor<T>>> w;
  w.emplace("id", std::pair{std::move(k), Tensor<T>(Shape{3})});
  return Network<T>(std::move(d), std::move(w));
}

}  // namespace dyntex::testing
