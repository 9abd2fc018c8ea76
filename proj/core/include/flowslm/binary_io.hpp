#pragma once

// Little-endian binary streams shared by shard and checkpoint formats.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "flowslm/common.hpp"

namespace flowslm {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed: " + path_.string());
  }
  void u16(std::uint16_t v) { bytes(&v, sizeof v); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void i32(std::int32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f32s(const float* p, std::size_t n) { bytes(p, n * sizeof(float)); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void close() {
    out_.close();
    if (!out_) throw IoError("close failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path)
      : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path.string() + " for reading");
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw IoError("truncated file: " + path_.string());
  }
  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::int32_t i32() { return get<std::int32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  void f32s(float* p, std::size_t n) { bytes(p, n * sizeof(float)); }
  std::string str(std::size_t max_len = 1u << 26) {
    const std::uint64_t n = u64();
    if (n > max_len) throw IoError("implausible string length in " + path_.string());
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  void expect_eof() {
    if (in_.peek() != std::char_traits<char>::eof()) {
      throw IoError("trailing bytes in " + path_.string());
    }
  }

 private:
  template <typename V>
  V get() {
    V v;
    bytes(&v, sizeof v);
    return v;
  }
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace flowslm
