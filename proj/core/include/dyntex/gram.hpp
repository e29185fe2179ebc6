#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dyntex/network.hpp"
#include "dyntex/tensor.hpp"

namespace dyntex {

/// Spatio-temporal Gram of one layer: side delta_t * N_l. Block (a, b) holds
/// the correlations between frame a and frame b of a window.
template <typename T>
struct GramMatrix {
  std::string layer;
  std::size_t delta_t = 1;
  Tensor<T> values;

  std::size_t side() const { return values.dim(0); }
  std::size_t channels() const { return side() / delta_t; }
};

struct SourceMeta {
  std::size_t frame_count = 0;   // T
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
};

/// The texture model: one window-averaged Gram per layer plus its weight.
template <typename T>
struct TextureStatistics {
  std::size_t delta_t = 1;
  std::vector<std::string> layer_names;
  std::vector<double> layer_weights;
  std::map<std::string, GramMatrix<T>> grams;
  SourceMeta source;

  template <typename U>
  TextureStatistics<U> cast() const {
    TextureStatistics<U> out{delta_t, layer_names, layer_weights, {}, source};
    for (const auto& [name, g] : grams) out.grams.emplace(name, GramMatrix<U>{g.layer, g.delta_t, g.values.template cast<U>()});
    return out;
  }
};

/// Checks one Gram per listed layer, positive weights, square sides divisible
/// by delta_t, and delta_t <= T. Throws consistency.
template <typename T>
void validate(const TextureStatistics<T>& stats);

/// [H, W, N] activation viewed as the [H*W, N] feature matrix.
template <typename T>
Tensor<T> feature_matrix(const Tensor<T>& activation);

/// Column-wise concatenation of delta_t [M, N] feature matrices.
template <typename T>
Tensor<T> concat_window(std::span<const Tensor<T>> features);

/// (1/M) F^T F for F of shape [M, K].
template <typename T>
Tensor<T> gram(const Tensor<T>& features);

/// Window-averaged spatio-temporal Grams of a preprocessed video. Every
/// frame is pushed through the network once; each of the T - delta_t + 1
/// windows reuses those features and the per-window Grams are summed in
/// window order, then divided by the window count.
template <typename T>
TextureStatistics<T> compute_statistics(std::span<const Tensor<T>> frames, const Network<T>& net,
                                        const std::vector<std::string>& layers, std::size_t delta_t,
                                        const std::vector<double>& weights);

/// Writes the `gram.<layer>` container at `path` and the JSON sidecar at
/// sidecar_path(path). Gram payloads are stored as f32.
template <typename T>
void save_statistics(const TextureStatistics<T>& stats, const std::filesystem::path& path);

/// Errors: io, missing_metadata (no sidecar), bad_version, missing_tensor,
/// consistency, plus any container decoding error.
TextureStatistics<float> load_statistics(const std::filesystem::path& path);

/// `<path>.meta.json`
std::filesystem::path sidecar_path(const std::filesystem::path& path);

inline constexpr int kStatisticsFormatVersion = 1;

}  // namespace dyntex
