#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dyntex/tensor.hpp"

namespace dyntex {

/// Binary tensor container shared by network weights and texture statistics.
///
/// Layout (little-endian):
///   "DTXW" | u32 version (=1) | u32 count
///   count x { u16 name_len | name bytes (UTF-8) | u8 rank | rank x u32 dims
///             | prod(dims) x f32, row-major }
///
/// Malformed input raises Error with bad_magic, bad_version, truncated or
/// corrupt; the message carries the byte offset where decoding stopped.
namespace container {

inline constexpr char kMagic[4] = {'D', 'T', 'X', 'W'};
inline constexpr std::uint32_t kVersion = 1;

struct Entry {
  std::string name;
  Tensor<float> tensor;
};

std::vector<std::uint8_t> encode(std::span<const Entry> entries);
std::vector<Entry> decode(std::span<const std::uint8_t> bytes);

void write(const std::filesystem::path& path, std::span<const Entry> entries);
std::vector<Entry> read(const std::filesystem::path& path);

/// True when the file exists and starts with the container magic.
bool has_magic(const std::filesystem::path& path);

const Entry* find(std::span<const Entry> entries, const std::string& name);

}  // namespace container

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dyntex
