#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dyntex/network.hpp"
#include "dyntex/tensor.hpp"

namespace dyntex {

/// 8-bit RGB frame, row-major, interleaved channels.
struct Frame {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  Frame() = default;
  Frame(std::size_t w, std::size_t h);

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }

  friend bool operator==(const Frame&, const Frame&) = default;
};

using Video = std::vector<Frame>;

/// Binary P6 with maxval 255. Errors: io, unsupported_format (P1-P5, P7,
/// maxval != 255), bad_magic, truncated, corrupt (malformed header).
Frame read_ppm(const std::filesystem::path& path);
Frame decode_ppm(std::span<const std::uint8_t> bytes);
void write_ppm(const Frame& frame, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_ppm(const Frame& frame);

/// `<dir>/<pattern>_NNNNN.ppm`, numbered from 0; `manifest.json` alongside.
struct SequenceManifest {
  std::string pattern = "frame";
  std::size_t count = 0;
  double fps = 25.0;
  std::string color_space = "sRGB";
};

std::filesystem::path frame_path(const std::filesystem::path& dir, const SequenceManifest& manifest,
                                 std::size_t index);

/// Writes every frame plus manifest.json. Errors: consistency when frame
/// dimensions differ.
void write_sequence(const Video& video, const std::filesystem::path& dir, SequenceManifest manifest);

/// Reads using `<dir>/manifest.json` when present; otherwise infers the
/// pattern from `*_NNNNN.ppm` files. Errors: missing_frame naming the first
/// absent index, consistency for differing dimensions.
Video read_sequence(const std::filesystem::path& dir);
SequenceManifest read_manifest(const std::filesystem::path& dir);

/// u8 RGB -> network input: reorder channels, subtract means.
template <typename T>
Tensor<T> preprocess(const Frame& frame, const Preprocessing& pre);

/// Inverse of preprocess, then clamp to [0, 255] and round half to even.
template <typename T>
Frame deprocess(const Tensor<T>& tensor, const Preprocessing& pre);

/// Per-element bounds in preprocessed space equivalent to pixel range
/// [0, 255], for the optimizer's optional box projection.
std::pair<std::vector<double>, std::vector<double>> pixel_box(const Preprocessing& pre, const Shape& frame_shape);

Frame center_crop(const Frame& frame, std::size_t width, std::size_t height);

}  // namespace dyntex
