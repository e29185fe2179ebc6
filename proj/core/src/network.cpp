#include "dyntex/network.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dyntex/container.hpp"
#include "dyntex/random.hpp"

namespace dyntex {

using nlohmann::json;

std::string_view to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::pool: return "pool";
  }
  return "?";
}

std::string_view to_string(PoolMode mode) noexcept { return mode == PoolMode::max ? "max" : "avg"; }

std::string_view to_string(ChannelOrder order) noexcept {
  return order == ChannelOrder::rgb ? "RGB" : "BGR";
}

std::optional<std::size_t> NetworkDescriptor::find(const std::string& name) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].name == name) return i;
  return std::nullopt;
}

std::size_t NetworkDescriptor::channels_after(std::size_t index) const {
  std::size_t channels = input_channels;
  for (std::size_t i = 0; i <= index && i < layers.size(); ++i)
    if (layers[i].kind == LayerKind::conv) channels = layers[i].conv.out_channels;
  return channels;
}

Shape NetworkDescriptor::output_shape(std::size_t index, std::size_t height, std::size_t width) const {
  std::size_t h = height, w = width, c = input_channels;
  for (std::size_t i = 0; i <= index && i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    if (l.kind == LayerKind::conv) {
      h = window_output_extent(h, l.conv.kernel_h, l.conv.stride, l.conv.zero_padding, l.name.c_str());
      w = window_output_extent(w, l.conv.kernel_w, l.conv.stride, l.conv.zero_padding, l.name.c_str());
      c = l.conv.out_channels;
    } else if (l.kind == LayerKind::pool) {
      h = window_output_extent(h, l.pool.window, l.pool.stride, 0, l.name.c_str());
      w = window_output_extent(w, l.pool.window, l.pool.stride, 0, l.name.c_str());
    }
  }
  return Shape{h, w, c};
}

void validate(const NetworkDescriptor& d) {
  if (d.input_channels == 0) throw Error(ErrorCode::consistency, "descriptor: input_channels must be >= 1");
  std::set<std::string> names;
  std::size_t channels = d.input_channels;
  for (const LayerSpec& l : d.layers) {
    if (l.name.empty()) throw Error(ErrorCode::consistency, "descriptor: layer with empty name");
    if (!names.insert(l.name).second) {
      throw Error(ErrorCode::consistency, "descriptor: duplicate layer name '" + l.name + "'");
    }
    if (l.kind == LayerKind::conv) {
      const ConvSpec& c = l.conv;
      if (c.kernel_h == 0 || c.kernel_w == 0 || c.stride == 0 || c.out_channels == 0) {
        throw Error(ErrorCode::consistency, "descriptor: conv layer '" + l.name + "' has a zero extent");
      }
      if (c.in_channels != channels) {
        throw Error(ErrorCode::consistency, "descriptor: conv layer '" + l.name + "' expects " +
                                                std::to_string(c.in_channels) + " input channels but receives " +
                                                std::to_string(channels));
      }
      channels = c.out_channels;
    } else if (l.kind == LayerKind::pool) {
      if (l.pool.window == 0 || l.pool.stride == 0) {
        throw Error(ErrorCode::consistency, "descriptor: pool layer '" + l.name + "' has a zero extent");
      }
    }
  }
}

namespace {

LayerKind parse_kind(const std::string& s) {
  if (s == "conv") return LayerKind::conv;
  if (s == "relu") return LayerKind::relu;
  if (s == "pool") return LayerKind::pool;
  throw Error(ErrorCode::consistency, "descriptor: unknown layer kind '" + s + "'");
}

PoolMode parse_pool_mode(const std::string& s) {
  if (s == "max") return PoolMode::max;
  if (s == "avg") return PoolMode::avg;
  throw Error(ErrorCode::consistency, "descriptor: unknown pool mode '" + s + "'");
}

ChannelOrder parse_order(const std::string& s) {
  if (s == "RGB" || s == "rgb") return ChannelOrder::rgb;
  if (s == "BGR" || s == "bgr") return ChannelOrder::bgr;
  throw Error(ErrorCode::consistency, "descriptor: unknown channel order '" + s + "'");
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

NetworkDescriptor parse_descriptor(const std::string& json_text) {
  NetworkDescriptor d;
  try {
    const json doc = json::parse(json_text);
    d.input_channels = doc.value("input_channels", std::size_t{3});
    if (doc.contains("preprocessing")) {
      const json& pre = doc.at("preprocessing");
      const auto means = pre.value("channel_means", std::vector<double>{0.0, 0.0, 0.0});
      if (means.size() != 3) throw Error(ErrorCode::consistency, "descriptor: channel_means needs 3 values");
      std::copy(means.begin(), means.end(), d.preprocessing.channel_means.begin());
      d.preprocessing.channel_order = parse_order(pre.value("channel_order", std::string("RGB")));
    }
    for (const json& jl : doc.at("layers")) {
      LayerSpec l;
      l.name = jl.at("name").get<std::string>();
      l.kind = parse_kind(jl.at("kind").get<std::string>());
      if (l.kind == LayerKind::conv) {
        const json& c = jl.at("conv");
        l.conv.out_channels = c.at("out_channels").get<std::size_t>();
        l.conv.in_channels = c.at("in_channels").get<std::size_t>();
        l.conv.kernel_h = c.at("kernel_h").get<std::size_t>();
        l.conv.kernel_w = c.at("kernel_w").get<std::size_t>();
        l.conv.stride = c.value("stride", std::size_t{1});
        l.conv.zero_padding = c.value("zero_padding", std::size_t{0});
      } else if (l.kind == LayerKind::pool) {
        const json& p = jl.at("pool");
        l.pool.mode = parse_pool_mode(p.at("mode").get<std::string>());
        l.pool.window = p.at("window").get<std::size_t>();
        l.pool.stride = p.value("stride", l.pool.window);
      }
      d.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::corrupt, std::string("descriptor: malformed JSON: ") + e.what());
  }
  validate(d);
  return d;
}

std::string descriptor_to_json(const NetworkDescriptor& d) {
  json doc;
  doc["input_channels"] = d.input_channels;
  doc["preprocessing"] = {
      {"channel_means", std::vector<double>(d.preprocessing.channel_means.begin(),
                                            d.preprocessing.channel_means.end())},
      {"channel_order", std::string(to_string(d.preprocessing.channel_order))}};
  json layers = json::array();
  for (const LayerSpec& l : d.layers) {
    json jl = {{"name", l.name}, {"kind", std::string(to_string(l.kind))}};
    if (l.kind == LayerKind::conv) {
      jl["conv"] = {{"out_channels", l.conv.out_channels}, {"in_channels", l.conv.in_channels},
                    {"kernel_h", l.conv.kernel_h},         {"kernel_w", l.conv.kernel_w},
                    {"stride", l.conv.stride},             {"zero_padding", l.conv.zero_padding}};
    } else if (l.kind == LayerKind::pool) {
      jl["pool"] = {{"mode", std::string(to_string(l.pool.mode))},
                    {"window", l.pool.window},
                    {"stride", l.pool.stride}};
    }
    layers.push_back(std::move(jl));
  }
  doc["layers"] = std::move(layers);
  return doc.dump(2) + "\n";
}

NetworkDescriptor load_descriptor(const std::filesystem::path& path) {
  try {
    return parse_descriptor(read_text(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::io) throw;
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void save_descriptor(const NetworkDescriptor& descriptor, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  out << descriptor_to_json(descriptor);
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

template <typename T>
Network<T>::Network(NetworkDescriptor descriptor,
                    std::map<std::string, std::pair<Tensor<T>, Tensor<T>>> weights)
    : descriptor_(std::move(descriptor)) {
  validate(descriptor_);
  for (const LayerSpec& l : descriptor_.layers) {
    if (l.kind != LayerKind::conv) continue;
    auto it = weights.find(l.name);
    if (it == weights.end()) {
      throw Error(ErrorCode::missing_tensor, "no weights for conv layer '" + l.name + "'");
    }
    auto& [kernel, bias] = it->second;
    const Shape want_k{l.conv.out_channels, l.conv.in_channels, l.conv.kernel_h, l.conv.kernel_w};
    const Shape want_b{l.conv.out_channels};
    if (kernel.shape() != want_k) {
      throw Error(ErrorCode::shape_mismatch, "layer '" + l.name + "': weight shape " +
                                                 kernel.shape().to_string() + ", descriptor expects " +
                                                 want_k.to_string());
    }
    if (bias.shape() != want_b) {
      throw Error(ErrorCode::shape_mismatch, "layer '" + l.name + "': bias shape " +
                                                 bias.shape().to_string() + ", descriptor expects " +
                                                 want_b.to_string());
    }
    if (!all_finite(kernel) || !all_finite(bias)) {
      throw Error(ErrorCode::non_finite, "layer '" + l.name + "' has non-finite weights");
    }
    ConvWeights<T> cw{std::move(kernel), std::move(bias), {}};
    cw.packed = pack_kernel(cw.kernel);
    weights_.emplace(l.name, std::move(cw));
  }
}

template <typename T>
const ConvWeights<T>& Network<T>::weights(const std::string& layer) const {
  auto it = weights_.find(layer);
  if (it == weights_.end()) throw Error(ErrorCode::unknown_layer, "no conv layer named '" + layer + "'");
  return it->second;
}

Network<float> load_network(const std::filesystem::path& descriptor_file,
                            const std::filesystem::path& weights_file) {
  NetworkDescriptor descriptor = load_descriptor(descriptor_file);
  const auto entries = container::read(weights_file);
  std::map<std::string, std::pair<Tensor<float>, Tensor<float>>> weights;
  for (const LayerSpec& l : descriptor.layers) {
    if (l.kind != LayerKind::conv) continue;
    const auto* k = container::find(entries, l.name + ".weight");
    if (!k) throw Error(ErrorCode::missing_tensor, weights_file.string() + ": missing tensor '" + l.name + ".weight'");
    const auto* b = container::find(entries, l.name + ".bias");
    if (!b) throw Error(ErrorCode::missing_tensor, weights_file.string() + ": missing tensor '" + l.name + ".bias'");
    weights.emplace(l.name, std::pair{k->tensor, b->tensor});
  }
  return Network<float>(std::move(descriptor), std::move(weights));
}

void save_weights(const Network<float>& net, const std::filesystem::path& weights_file) {
  std::vector<container::Entry> entries;
  for (const LayerSpec& l : net.descriptor().layers) {
    if (l.kind != LayerKind::conv) continue;
    const auto& w = net.weights(l.name);
    entries.push_back({l.name + ".weight", w.kernel});
    entries.push_back({l.name + ".bias", w.bias});
  }
  container::write(weights_file, entries);
}

template <typename T>
Network<T> make_random_network(const NetworkDescriptor& descriptor, std::uint64_t seed) {
  validate(descriptor);
  std::map<std::string, std::pair<Tensor<T>, Tensor<T>>> weights;
  std::uint64_t stream = 0;
  for (const LayerSpec& l : descriptor.layers) {
    if (l.kind != LayerKind::conv) continue;
    const ConvSpec& c = l.conv;
    const double fan_in = static_cast<double>(c.in_channels * c.kernel_h * c.kernel_w);
    const std::uint64_t layer_seed = counter_hash(seed, stream++);
    auto kernel = Tensor<T>::filled(Shape{c.out_channels, c.in_channels, c.kernel_h, c.kernel_w},
                                    GaussianFill{0.0, std::sqrt(2.0 / fan_in), layer_seed});
    auto bias = Tensor<T>::filled(Shape{c.out_channels}, GaussianFill{0.0, 0.01, counter_hash(layer_seed, 1)});
    weights.emplace(l.name, std::pair{std::move(kernel), std::move(bias)});
  }
  return Network<T>(descriptor, std::move(weights));
}

template <typename T>
FeatureStack<T> forward_features(const Network<T>& net, const Tensor<T>& image,
                                 const std::set<std::string>& requested_layers) {
  const NetworkDescriptor& d = net.descriptor();
  if (image.shape().rank() != 3 || image.dim(2) != d.input_channels) {
    throw Error(ErrorCode::shape_mismatch, "forward_features: image " + image.shape().to_string() +
                                               " does not match " + std::to_string(d.input_channels) +
                                               " input channels");
  }
  std::size_t depth = 0;
  for (const std::string& name : requested_layers) {
    const auto idx = d.find(name);
    if (!idx) throw Error(ErrorCode::unknown_layer, "forward_features: unknown layer '" + name + "'");
    depth = std::max(depth, *idx + 1);
  }

  FeatureStack<T> stack;
  stack.input_shape = image.shape();
  stack.cache.reserve(depth);
  Tensor<T> x = image;
  for (std::size_t i = 0; i < depth; ++i) {
    const LayerSpec& l = d.layers[i];
    typename FeatureStack<T>::LayerCache lc;
    lc.input_shape = x.shape();
    switch (l.kind) {
      case LayerKind::conv: {
        const auto& w = net.weights(l.name);
        x = conv2d_forward_packed(x, w.packed, w.bias, l.conv.stride, l.conv.zero_padding);
        break;
      }
      case LayerKind::relu: {
        Tensor<T> y = relu_forward(x);
        lc.relu_input = std::move(x);
        x = std::move(y);
        break;
      }
      case LayerKind::pool: {
        auto [y, pc] = pool_forward(x, l.pool.mode, l.pool.window, l.pool.stride);
        lc.pool = std::move(pc);
        x = std::move(y);
        break;
      }
    }
    stack.cache.push_back(std::move(lc));
    if (requested_layers.count(l.name)) stack.activations.emplace(l.name, x);
  }
  return stack;
}

template <typename T>
Tensor<T> backward_to_input(const Network<T>& net, const FeatureStack<T>& stack,
                            const std::map<std::string, Tensor<T>>& layer_grads) {
  const NetworkDescriptor& d = net.descriptor();
  std::size_t deepest = 0;
  for (const auto& [name, grad] : layer_grads) {
    const auto idx = d.find(name);
    if (!idx || *idx >= stack.executed_layers()) {
      throw Error(ErrorCode::unknown_layer,
                  "backward_to_input: layer '" + name + "' was not computed by the forward pass");
    }
    const Shape expected = (*idx + 1 < stack.executed_layers()) ? stack.cache[*idx + 1].input_shape
                                                                 : d.output_shape(*idx, stack.input_shape[0], stack.input_shape[1]);
    require_same_shape(grad.shape(), expected, ("backward_to_input: gradient for '" + name + "'").c_str());
    deepest = std::max(deepest, *idx + 1);
  }
  if (deepest == 0) return Tensor<T>(stack.input_shape);

  Tensor<T> g;
  for (std::size_t i = deepest; i-- > 0;) {
    const LayerSpec& l = d.layers[i];
    if (auto it = layer_grads.find(l.name); it != layer_grads.end()) {
      g = g.shape().empty() ? it->second : axpby(1.0, g, 1.0, it->second);
    }
    if (g.shape().empty()) continue;
    const auto& lc = stack.cache[i];
    switch (l.kind) {
      case LayerKind::conv: {
        const auto& w = net.weights(l.name);
        g = conv2d_backward_input_packed(g, w.packed, l.conv.stride, l.conv.zero_padding);
        break;
      }
      case LayerKind::relu:
        g = relu_backward(g, lc.relu_input);
        break;
      case LayerKind::pool:
        g = pool_backward(g, lc.pool);
        break;
    }
  }
  return g;
}

#define DYNTEX_INSTANTIATE(T)                                                                         \
  template class Network<T>;                                                                          \
  template Network<T> make_random_network(const NetworkDescriptor&, std::uint64_t);                   \
  template FeatureStack<T> forward_features(const Network<T>&, const Tensor<T>&,                      \
                                            const std::set<std::string>&);                            \
  template Tensor<T> backward_to_input(const Network<T>&, const FeatureStack<T>&,                     \
                                       const std::map<std::string, Tensor<T>>&);

DYNTEX_INSTANTIATE(float)
DYNTEX_INSTANTIATE(double)

#undef DYNTEX_INSTANTIATE

}  // namespace dyntex
