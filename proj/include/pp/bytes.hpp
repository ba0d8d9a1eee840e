#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pp/error.hpp"

namespace pp {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with native little-endian stores");

/// Append-only little-endian encoder.
class ByteWriter {
 public:
  void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }

  template <typename T>
  void put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  template <typename T>
  void put_all(std::span<const T> values) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    bytes_.insert(bytes_.end(), p, p + values.size_bytes());
  }

  std::vector<std::uint8_t>& bytes() noexcept { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian decoder; running off the end raises
/// `truncated` with the current offset.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, Errc truncated)
      : bytes_(bytes), truncated_(truncated) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  bool magic(std::string_view m) {
    need(m.size(), "magic");
    bool ok = std::memcmp(bytes_.data() + pos_, m.data(), m.size()) == 0;
    pos_ += m.size();
    return ok;
  }

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  template <typename T>
  void get_all(std::span<T> out, const char* what) {
    need(out.size_bytes(), what);
    std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
  }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw Error(truncated_, std::string("truncated while reading ") + what + " at offset " +
                                  std::to_string(pos_));
    }
  }

 private:
  std::span<const std::uint8_t> bytes_;
  Errc truncated_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// First four bytes of a file, or empty when it cannot be read.
std::string file_magic(const std::filesystem::path& path);

}  // namespace pp
