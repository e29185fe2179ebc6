#include "dyntex/gram.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dyntex/container.hpp"

namespace dyntex {

using nlohmann::json;

template <typename T>
void validate(const TextureStatistics<T>& stats) {
  if (stats.delta_t == 0) throw Error(ErrorCode::consistency, "statistics: delta_t must be >= 1");
  if (stats.layer_names.empty()) throw Error(ErrorCode::consistency, "statistics: no layers");
  if (stats.layer_weights.size() != stats.layer_names.size()) {
    throw Error(ErrorCode::consistency, "statistics: " + std::to_string(stats.layer_weights.size()) +
                                            " weights for " + std::to_string(stats.layer_names.size()) +
                                            " layers");
  }
  if (stats.source.frame_count < stats.delta_t) {
    throw Error(ErrorCode::consistency, "statistics: source T=" + std::to_string(stats.source.frame_count) +
                                            " < delta_t=" + std::to_string(stats.delta_t));
  }
  for (std::size_t i = 0; i < stats.layer_names.size(); ++i) {
    const std::string& name = stats.layer_names[i];
    if (!(stats.layer_weights[i] > 0.0)) {
      throw Error(ErrorCode::consistency, "statistics: weight for '" + name + "' must be > 0");
    }
    auto it = stats.grams.find(name);
    if (it == stats.grams.end()) {
      throw Error(ErrorCode::missing_tensor, "statistics: no Gram for layer '" + name + "'");
    }
    const Shape& s = it->second.values.shape();
    if (s.rank() != 2 || s[0] != s[1] || s[0] % stats.delta_t != 0 || it->second.delta_t != stats.delta_t) {
      throw Error(ErrorCode::consistency, "statistics: Gram for '" + name + "' has shape " + s.to_string() +
                                              ", inconsistent with delta_t=" + std::to_string(stats.delta_t));
    }
  }
  if (stats.grams.size() != stats.layer_names.size()) {
    throw Error(ErrorCode::consistency, "statistics: Grams present for unlisted layers");
  }
}

template <typename T>
Tensor<T> feature_matrix(const Tensor<T>& activation) {
  if (activation.shape().rank() != 3) {
    throw Error(ErrorCode::shape_mismatch, "feature_matrix expects [H,W,N], got " + activation.shape().to_string());
  }
  return activation.reshaped(Shape{activation.dim(0) * activation.dim(1), activation.dim(2)});
}

template <typename T>
Tensor<T> concat_window(std::span<const Tensor<T>> features) {
  if (features.empty()) throw Error(ErrorCode::invalid_argument, "concat_window: empty window");
  const Shape& first = features.front().shape();
  if (first.rank() != 2) {
    throw Error(ErrorCode::shape_mismatch, "concat_window expects [M,N] matrices, got " + first.to_string());
  }
  for (const auto& f : features) require_same_shape(f.shape(), first, "concat_window");
  const std::size_t m = first[0], n = first[1], dt = features.size();
  Tensor<T> out(Shape{m, dt * n});
  for (std::size_t b = 0; b < dt; ++b)
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(features[b].data() + r * n, n, out.data() + r * dt * n + b * n);
  return out;
}

template <typename T>
Tensor<T> gram(const Tensor<T>& features) {
  if (features.shape().rank() != 2) {
    throw Error(ErrorCode::shape_mismatch, "gram expects [M,K], got " + features.shape().to_string());
  }
  const double m = static_cast<double>(features.dim(0));
  Tensor<T> g = matmul_tn(features, features);
  for (T& v : g.values()) v = static_cast<T>(static_cast<double>(v) / m);
  return g;
}

template <typename T>
TextureStatistics<T> compute_statistics(std::span<const Tensor<T>> frames, const Network<T>& net,
                                        const std::vector<std::string>& layers, std::size_t delta_t,
                                        const std::vector<double>& weights) {
  if (layers.empty()) throw Error(ErrorCode::invalid_argument, "compute_statistics: empty layer list");
  if (delta_t == 0) throw Error(ErrorCode::invalid_argument, "compute_statistics: delta_t must be >= 1");
  if (frames.size() < delta_t) {
    throw Error(ErrorCode::consistency, "compute_statistics: T < Δt (T=" + std::to_string(frames.size()) +
                                            ", Δt=" + std::to_string(delta_t) + ")");
  }
  if (weights.size() != layers.size()) {
    throw Error(ErrorCode::invalid_argument, "compute_statistics: need one weight per layer");
  }
  for (const auto& f : frames) require_same_shape(f.shape(), frames.front().shape(), "compute_statistics frames");

  const std::set<std::string> requested(layers.begin(), layers.end());
  if (requested.size() != layers.size()) {
    throw Error(ErrorCode::invalid_argument, "compute_statistics: duplicate layer names");
  }
  // features[layer][frame]
  std::map<std::string, std::vector<Tensor<T>>> features;
  for (const auto& frame : frames) {
    FeatureStack<T> stack = forward_features(net, frame, requested);
    for (auto& [name, act] : stack.activations) features[name].push_back(feature_matrix(act));
  }

  TextureStatistics<T> stats;
  stats.delta_t = delta_t;
  stats.layer_names = layers;
  stats.layer_weights = weights;
  stats.source = SourceMeta{frames.size(), frames.front().dim(0), frames.front().dim(1), frames.front().dim(2)};
  const std::size_t windows = frames.size() - delta_t + 1;
  for (const std::string& name : layers) {
    const auto& per_frame = features.at(name);
    std::span<const Tensor<T>> all(per_frame);
    Tensor<T> sum = gram(concat_window(all.subspan(0, delta_t)));
    for (std::size_t i = 1; i < windows; ++i) {
      sum = axpby(1.0, sum, 1.0, gram(concat_window(all.subspan(i, delta_t))));
    }
    if (windows > 1) {
      for (T& v : sum.values()) v = static_cast<T>(static_cast<double>(v) / static_cast<double>(windows));
    }
    stats.grams.emplace(name, GramMatrix<T>{name, delta_t, std::move(sum)});
  }
  validate(stats);
  return stats;
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".meta.json");
}

template <typename T>
void save_statistics(const TextureStatistics<T>& stats, const std::filesystem::path& path) {
  validate(stats);
  std::vector<container::Entry> entries;
  for (const std::string& name : stats.layer_names) {
    entries.push_back({"gram." + name, stats.grams.at(name).values.template cast<float>()});
  }
  container::write(path, entries);

  json meta = {{"format_version", kStatisticsFormatVersion},
               {"delta_t", stats.delta_t},
               {"layer_names", stats.layer_names},
               {"layer_weights", stats.layer_weights},
               {"source_meta",
                {{"T", stats.source.frame_count},
                 {"frame_dims", {stats.source.height, stats.source.width, stats.source.channels}}}}};
  std::ofstream out(sidecar_path(path));
  if (!out) throw Error(ErrorCode::io, "cannot open " + sidecar_path(path).string() + " for writing");
  out << meta.dump(2) << "\n";
  if (!out) throw Error(ErrorCode::io, "write failed for " + sidecar_path(path).string());
}

TextureStatistics<float> load_statistics(const std::filesystem::path& path) {
  const auto meta_path = sidecar_path(path);
  if (!std::filesystem::exists(meta_path)) {
    throw Error(ErrorCode::missing_metadata, "missing metadata sidecar " + meta_path.string());
  }
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::io, "cannot open " + path.string());

  TextureStatistics<float> stats;
  try {
    std::ifstream in(meta_path);
    if (!in) throw Error(ErrorCode::io, "cannot open " + meta_path.string());
    const json meta = json::parse(in);
    const int version = meta.at("format_version").get<int>();
    if (version != kStatisticsFormatVersion) {
      throw Error(ErrorCode::bad_version, meta_path.string() + ": unsupported format_version " +
                                              std::to_string(version));
    }
    stats.delta_t = meta.at("delta_t").get<std::size_t>();
    stats.layer_names = meta.at("layer_names").get<std::vector<std::string>>();
    stats.layer_weights = meta.at("layer_weights").get<std::vector<double>>();
    const json& src = meta.at("source_meta");
    stats.source.frame_count = src.at("T").get<std::size_t>();
    const auto dims = src.at("frame_dims").get<std::vector<std::size_t>>();
    if (dims.size() != 3) throw Error(ErrorCode::consistency, meta_path.string() + ": frame_dims needs 3 values");
    stats.source.height = dims[0];
    stats.source.width = dims[1];
    stats.source.channels = dims[2];
  } catch (const json::exception& e) {
    throw Error(ErrorCode::corrupt, meta_path.string() + ": malformed metadata: " + e.what());
  }

  const auto entries = container::read(path);
  for (const std::string& name : stats.layer_names) {
    const auto* e = container::find(entries, "gram." + name);
    if (!e) throw Error(ErrorCode::missing_tensor, path.string() + ": missing tensor 'gram." + name + "'");
    stats.grams.emplace(name, GramMatrix<float>{name, stats.delta_t, e->tensor});
  }
  if (entries.size() != stats.layer_names.size()) {
    throw Error(ErrorCode::consistency, path.string() + ": container holds " + std::to_string(entries.size()) +
                                            " tensors, sidecar lists " + std::to_string(stats.layer_names.size()));
  }
  try {
    validate(stats);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
  return stats;
}

#define DYNTEX_INSTANTIATE(T)                                                                        \
  template void validate(const TextureStatistics<T>&);                                               \
  template Tensor<T> feature_matrix(const Tensor<T>&);                                               \
  template Tensor<T> concat_window(std::span<const Tensor<T>>);                                      \
  template Tensor<T> gram(const Tensor<T>&);                                                         \
  template TextureStatistics<T> compute_statistics(std::span<const Tensor<T>>, const Network<T>&,    \
                                                   const std::vector<std::string>&, std::size_t,     \
                                                   const std::vector<double>&);                      \
  template void save_statistics(const TextureStatistics<T>&, const std::filesystem::path&);

DYNTEX_INSTANTIATE(float)
DYNTEX_INSTANTIATE(double)

#undef DYNTEX_INSTANTIATE

}  // namespace dyntex
