#include "dyntex/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace dyntex {

namespace {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

class Writer {
 public:
  template <typename U>
  void put(U value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(U));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    U value;
    std::memcpy(&value, take(sizeof(U), what), sizeof(U));
    return value;
  }
  const std::uint8_t* take(std::size_t n, const char* what) {
    if (bytes_.size() - offset_ < n) {
      throw Error(ErrorCode::truncated, std::string("truncated container: need ") +
                                            std::to_string(n) + " bytes for " + what +
                                            " at offset " + std::to_string(offset_) + ", have " +
                                            std::to_string(bytes_.size() - offset_));
    }
    const std::uint8_t* p = bytes_.data() + offset_;
    offset_ += n;
    return p;
  }
  std::size_t offset() const { return offset_; }
  std::size_t remaining() const { return bytes_.size() - offset_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t offset_ = 0;
};

}  // namespace

namespace container {

std::vector<std::uint8_t> encode(std::span<const Entry> entries) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
  for (const Entry& e : entries) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw Error(ErrorCode::invalid_argument, "tensor name too long: " + e.name.substr(0, 32));
    }
    const Shape& shape = e.tensor.shape();
    if (shape.empty()) throw Error(ErrorCode::invalid_shape, "cannot store empty tensor " + e.name);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.put_bytes(e.name.data(), e.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(shape.rank()));
    for (std::size_t d : shape.dims()) {
      if (d > std::numeric_limits<std::uint32_t>::max()) {
        throw Error(ErrorCode::invalid_shape, "dimension exceeds u32 in " + e.name);
      }
      w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    }
    w.put_bytes(e.tensor.data(), e.tensor.size() * sizeof(float));
  }
  return w.take();
}

std::vector<Entry> decode(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const std::uint8_t* magic = r.take(4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw Error(ErrorCode::bad_magic, "bad magic at offset 0: expected DTXW");
  }
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVersion) {
    throw Error(ErrorCode::bad_version, "unsupported container version " + std::to_string(version) +
                                            " at offset 4 (expected " + std::to_string(kVersion) + ")");
  }
  const auto count = r.get<std::uint32_t>("tensor count");
  std::vector<Entry> entries;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::size_t entry_offset = r.offset();
    const auto name_len = r.get<std::uint16_t>("name length");
    const auto* name_bytes = r.take(name_len, "name");
    std::string name(reinterpret_cast<const char*>(name_bytes), name_len);
    const std::size_t rank_offset = r.offset();
    const auto rank = r.get<std::uint8_t>("rank");
    if (rank == 0 || rank > Shape::kMaxRank) {
      throw Error(ErrorCode::corrupt, "invalid rank " + std::to_string(rank) + " for tensor '" + name +
                                          "' at offset " + std::to_string(rank_offset));
    }
    std::vector<std::size_t> dims(rank);
    std::size_t count_elems = 1;
    for (auto& d : dims) {
      const std::size_t dim_offset = r.offset();
      d = r.get<std::uint32_t>("dimension");
      if (d == 0) {
        throw Error(ErrorCode::corrupt, "zero dimension for tensor '" + name + "' at offset " +
                                            std::to_string(dim_offset));
      }
      if (count_elems > std::numeric_limits<std::size_t>::max() / sizeof(float) / d) {
        throw Error(ErrorCode::corrupt, "tensor '" + name + "' element count overflows at offset " +
                                            std::to_string(dim_offset));
      }
      count_elems *= d;
    }
    const auto* payload = r.take(count_elems * sizeof(float), ("payload of '" + name + "'").c_str());
    std::vector<float> values(count_elems);
    std::memcpy(values.data(), payload, count_elems * sizeof(float));
    for (const Entry& prior : entries) {
      if (prior.name == name) {
        throw Error(ErrorCode::corrupt, "duplicate tensor name '" + name + "' at offset " +
                                            std::to_string(entry_offset));
      }
    }
    entries.push_back(Entry{std::move(name), Tensor<float>(Shape(std::move(dims)), std::move(values))});
  }
  if (r.remaining() != 0) {
    throw Error(ErrorCode::corrupt, "trailing bytes after last tensor at offset " +
                                        std::to_string(r.offset()));
  }
  return entries;
}

void write(const std::filesystem::path& path, std::span<const Entry> entries) {
  write_file_bytes(path, encode(entries));
}

std::vector<Entry> read(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

bool has_magic(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  if (!in.read(magic, 4)) return false;
  return std::memcmp(magic, kMagic, 4) == 0;
}

const Entry* find(std::span<const Entry> entries, const std::string& name) {
  for (const Entry& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

}  // namespace container

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::io, "read failed for " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

}  // namespace dyntex
