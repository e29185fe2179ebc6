#include "dyntex/video_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <regex>

#include <json.hpp>

#include "dyntex/container.hpp"

namespace dyntex {

using nlohmann::json;

Frame::Frame(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0) {}

namespace {

class HeaderParser {
 public:
  explicit HeaderParser(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) throw Error(ErrorCode::truncated, std::string("PPM: header ends before ") + what);
    if (!std::isdigit(bytes_[pos_])) {
      throw Error(ErrorCode::corrupt, std::string("PPM: expected ") + what + " at offset " + std::to_string(pos_));
    }
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (1U << 24)) throw Error(ErrorCode::corrupt, std::string("PPM: ") + what + " too large");
      ++pos_;
    }
    return value;
  }

  std::size_t pos_ = 0;

 private:
  std::span<const std::uint8_t> bytes_;
};

}  // namespace

Frame decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2) throw Error(ErrorCode::truncated, "PPM: file too short for magic");
  if (bytes[0] != 'P' || !std::isdigit(bytes[1])) throw Error(ErrorCode::bad_magic, "PPM: bad magic");
  if (bytes[1] != '6') {
    throw Error(ErrorCode::unsupported_format,
                std::string("PPM: unsupported format P") + static_cast<char>(bytes[1]) + " (only binary P6)");
  }
  HeaderParser p(bytes);
  p.pos_ = 2;
  const std::size_t width = p.number("width");
  const std::size_t height = p.number("height");
  const std::size_t maxval = p.number("maxval");
  if (width == 0 || height == 0) throw Error(ErrorCode::corrupt, "PPM: zero image dimension");
  if (maxval != 255) {
    throw Error(ErrorCode::unsupported_format, "PPM: maxval " + std::to_string(maxval) + " (only 255)");
  }
  if (p.pos_ >= bytes.size() || !std::isspace(bytes[p.pos_])) {
    throw Error(ErrorCode::truncated, "PPM: missing whitespace after header");
  }
  ++p.pos_;
  Frame frame(width, height);
  const std::size_t need = frame.pixels.size();
  if (bytes.size() - p.pos_ < need) {
    throw Error(ErrorCode::truncated, "PPM: payload truncated at offset " + std::to_string(bytes.size()) +
                                          " (need " + std::to_string(need) + " bytes from offset " +
                                          std::to_string(p.pos_) + ")");
  }
  std::copy_n(bytes.data() + p.pos_, need, frame.pixels.begin());
  return frame;
}

Frame read_ppm(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_ppm(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_ppm(const Frame& frame) {
  if (frame.width == 0 || frame.height == 0 || frame.pixels.size() != frame.width * frame.height * 3) {
    throw Error(ErrorCode::invalid_shape, "PPM: frame dimensions do not match pixel buffer");
  }
  const std::string header = "P6\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), frame.pixels.begin(), frame.pixels.end());
  return bytes;
}

void write_ppm(const Frame& frame, const std::filesystem::path& path) { write_file_bytes(path, encode_ppm(frame)); }

std::filesystem::path frame_path(const std::filesystem::path& dir, const SequenceManifest& manifest,
                                 std::size_t index) {
  char suffix[16];
  std::snprintf(suffix, sizeof suffix, "_%05zu.ppm", index);
  return dir / (manifest.pattern + suffix);
}

void write_sequence(const Video& video, const std::filesystem::path& dir, SequenceManifest manifest) {
  for (const Frame& f : video) {
    if (f.width != video.front().width || f.height != video.front().height) {
      throw Error(ErrorCode::consistency, "write_sequence: frames have differing dimensions (" +
                                              std::to_string(f.width) + "x" + std::to_string(f.height) + " vs " +
                                              std::to_string(video.front().width) + "x" +
                                              std::to_string(video.front().height) + ")");
    }
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create " + dir.string() + ": " + ec.message());
  manifest.count = video.size();
  for (std::size_t i = 0; i < video.size(); ++i) write_ppm(video[i], frame_path(dir, manifest, i));
  const json doc = {{"pattern", manifest.pattern},
                    {"count", manifest.count},
                    {"fps", manifest.fps},
                    {"color_space", manifest.color_space}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw Error(ErrorCode::io, "cannot write " + (dir / "manifest.json").string());
  out << doc.dump(2) << "\n";
}

SequenceManifest read_manifest(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::io, "not a directory: " + dir.string());
  SequenceManifest m;
  const auto manifest_file = dir / "manifest.json";
  if (std::filesystem::exists(manifest_file)) {
    try {
      std::ifstream in(manifest_file);
      const json doc = json::parse(in);
      m.pattern = doc.at("pattern").get<std::string>();
      m.count = doc.at("count").get<std::size_t>();
      m.fps = doc.value("fps", 25.0);
      m.color_space = doc.value("color_space", std::string("sRGB"));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::corrupt, manifest_file.string() + ": " + e.what());
    }
    if (m.count == 0) throw Error(ErrorCode::consistency, manifest_file.string() + ": count must be >= 1");
    return m;
  }

  static const std::regex numbered(R"((.+)_(\d{5})\.ppm)");
  std::map<std::string, std::vector<std::size_t>> by_pattern;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch match;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, match, numbered)) {
      by_pattern[match[1].str()].push_back(std::stoul(match[2].str()));
    }
  }
  if (by_pattern.empty()) throw Error(ErrorCode::missing_frame, "no *_NNNNN.ppm frames in " + dir.string());
  if (by_pattern.size() > 1) {
    throw Error(ErrorCode::consistency, "several frame patterns in " + dir.string() + "; add a manifest.json");
  }
  auto& [pattern, indices] = *by_pattern.begin();
  std::sort(indices.begin(), indices.end());
  m.pattern = pattern;
  m.count = indices.back() + 1;
  return m;
}

Video read_sequence(const std::filesystem::path& dir) {
  const SequenceManifest m = read_manifest(dir);
  Video video;
  video.reserve(m.count);
  for (std::size_t i = 0; i < m.count; ++i) {
    const auto path = frame_path(dir, m, i);
    if (!std::filesystem::exists(path)) {
      throw Error(ErrorCode::missing_frame, "missing frame " + std::to_string(i) + " (" + path.string() + ")");
    }
    video.push_back(read_ppm(path));
    if (video.back().width != video.front().width || video.back().height != video.front().height) {
      throw Error(ErrorCode::consistency, "frame " + std::to_string(i) + " is " + std::to_string(video.back().width) +
                                              "x" + std::to_string(video.back().height) + ", expected " +
                                              std::to_string(video.front().width) + "x" +
                                              std::to_string(video.front().height));
    }
  }
  return video;
}

namespace {

/// Source RGB channel feeding network channel c.
std::size_t rgb_source(ChannelOrder order, std::size_t c) { return order == ChannelOrder::rgb ? c : 2 - c; }

}  // namespace

template <typename T>
Tensor<T> preprocess(const Frame& frame, const Preprocessing& pre) {
  Tensor<T> t(Shape{frame.height, frame.width, 3});
  for (std::size_t y = 0; y < frame.height; ++y)
    for (std::size_t x = 0; x < frame.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = frame.at(y, x, rgb_source(pre.channel_order, c));
        t[(y * frame.width + x) * 3 + c] = static_cast<T>(v - pre.channel_means[c]);
      }
  return t;
}

template <typename T>
Frame deprocess(const Tensor<T>& tensor, const Preprocessing& pre) {
  if (tensor.shape().rank() != 3 || tensor.dim(2) != 3) {
    throw Error(ErrorCode::shape_mismatch, "deprocess expects [H,W,3], got " + tensor.shape().to_string());
  }
  Frame frame(tensor.dim(1), tensor.dim(0));
  for (std::size_t y = 0; y < frame.height; ++y)
    for (std::size_t x = 0; x < frame.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double v = static_cast<double>(tensor[(y * frame.width + x) * 3 + c]) + pre.channel_means[c];
        if (std::isnan(v)) v = 0.0;
        v = std::clamp(v, 0.0, 255.0);
        frame.at(y, x, rgb_source(pre.channel_order, c)) = static_cast<std::uint8_t>(std::nearbyint(v));
      }
  return frame;
}

std::pair<std::vector<double>, std::vector<double>> pixel_box(const Preprocessing& pre, const Shape& frame_shape) {
  const std::size_t n = frame_shape.numel();
  std::vector<double> lo(n), hi(n);
  const std::size_t channels = frame_shape[frame_shape.rank() - 1];
  for (std::size_t i = 0; i < n; ++i) {
    const double mean = pre.channel_means[(i % channels) % 3];
    lo[i] = -mean;
    hi[i] = 255.0 - mean;
  }
  return {std::move(lo), std::move(hi)};
}

Frame center_crop(const Frame& frame, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0 || width > frame.width || height > frame.height) {
    throw Error(ErrorCode::invalid_shape, "center_crop: " + std::to_string(width) + "x" + std::to_string(height) +
                                              " does not fit in " + std::to_string(frame.width) + "x" +
                                              std::to_string(frame.height));
  }
  const std::size_t x0 = (frame.width - width) / 2, y0 = (frame.height - height) / 2;
  Frame out(width, height);
  for (std::size_t y = 0; y < height; ++y)
    std::copy_n(frame.pixels.begin() + static_cast<std::ptrdiff_t>(((y0 + y) * frame.width + x0) * 3), width * 3,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(y * width * 3));
  return out;
}

template Tensor<float> preprocess(const Frame&, const Preprocessing&);
template Tensor<double> preprocess(const Frame&, const Preprocessing&);
template Frame deprocess(const Tensor<float>&, const Preprocessing&);
template Frame deprocess(const Tensor<double>&, const Preprocessing&);

}  // namespace dyntex
