#pragma once

// Little helpers for the NNDS / NNDW / IDX binary formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "nnd/error.hpp"

namespace nnd::io {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> bytes, std::string source)
      : bytes_(std::move(bytes)), source_(std::move(source)) {}

  std::uint64_t offset() const { return pos_; }
  std::uint64_t remaining() const { return bytes_.size() - pos_; }

  void require(std::uint64_t n, const std::string& what) const {
    if (remaining() < n) {
      throw ParseError(source_ + ": truncated " + what + ": expected " + std::to_string(n) + " bytes, found " +
                           std::to_string(remaining()),
                       pos_);
    }
  }

  std::string fixed_string(std::size_t n, const std::string& what) {
    require(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32_le(const std::string& what) {
    require(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }

  std::uint32_t u32_be(const std::string& what) {
    require(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }

  void floats_le(std::span<float> out, const std::string& what) {
    require(out.size() * 4, what);
    for (auto& f : out) {
      std::uint32_t bits = 0;
      for (int i = 3; i >= 0; --i) bits = (bits << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
      f = std::bit_cast<float>(bits);
      pos_ += 4;
    }
  }

  std::span<const unsigned char> raw(std::uint64_t n, const std::string& what) {
    require(n, what);
    auto s = std::span<const unsigned char>(bytes_).subspan(pos_, n);
    pos_ += n;
    return s;
  }

  [[noreturn]] void fail(const std::string& what, std::uint64_t at) const { throw ParseError(source_ + ": " + what, at); }

 private:
  std::vector<unsigned char> bytes_;
  std::string source_;
  std::uint64_t pos_ = 0;
};

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

  void u32_le(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFU));
  }

  void floats_le(std::span<const float> values) {
    for (float f : values) u32_le(std::bit_cast<std::uint32_t>(f));
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + path.string());
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw DataError("write failed: " + path.string());
  }

 private:
  std::vector<char> buf_;
};

}  // namespace nnd::io
