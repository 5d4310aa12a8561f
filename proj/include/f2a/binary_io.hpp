/*
 * Copyright 2026 The F2A Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "f2a/error.hpp"

namespace f2a::io {

// Little-endian encoder used by every binary format (checkpoint, store,
// interchange). Values are staged in memory and written in one shot.
class ByteWriter {
 public:
  void u16(std::uint16_t v) { put_le(v); }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> vs) {
    for (double v : vs) f64(v);
  }
  void raw(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void str16(std::string_view s) {
    if (s.size() > 0xFFFF) throw FormatError("string longer than 65535 bytes: " + std::string(s.substr(0, 32)));
    u16(static_cast<std::uint16_t>(s.size()));
    raw(s);
  }

  const std::vector<char>& bytes() const { return buf_; }

 private:
  template <typename T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
  }
  std::vector<char> buf_;
};

// Bounds-checked little-endian decoder. `what` names the file in errors.
class ByteReader {
 public:
  ByteReader(std::span<const char> bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  std::uint16_t u16() { return get_le<std::uint16_t>("u16"); }
  std::uint32_t u32() { return get_le<std::uint32_t>("u32"); }
  std::uint64_t u64() { return get_le<std::uint64_t>("u64"); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>("f64")); }
  void f64s(std::span<double> out) {
    need(out.size() * 8, "float64 array");
    for (double& v : out) v = f64();
  }
  std::string raw(std::size_t n, const char* field) {
    need(n, field);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::string str16() {
    const std::uint16_t n = u16();
    return raw(n, "string");
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }
  const std::string& what() const { return what_; }

 private:
  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(what_ + ": truncated file while reading " + field + " at byte " +
                        std::to_string(pos_));
    }
  }
  template <typename T>
  T get_le(const char* field) {
    need(sizeof(T), field);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  std::span<const char> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32(std::span<const char> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()),
                static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

inline std::vector<char> read_file(const std::filesystem::path& path) {
  if (path.empty()) throw IoError("empty file path");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());
  return bytes;
}

// Writes to a sibling temporary and renames over the target, so readers never
// observe a partially written file.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const char> bytes) {
  if (path.empty()) throw IoError("empty file path");
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failure on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

inline void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span<const char>(text.data(), text.size()));
}

inline void expect_magic(ByteReader& r, std::string_view magic, std::uint32_t version) {
  const std::string got = r.raw(magic.size(), "magic");
  if (got != magic) {
    throw FormatError(r.what() + ": bad magic '" + got + "', expected '" + std::string(magic) + "'");
  }
  const std::uint32_t v = r.u32();
  if (v != version) {
    throw FormatError(r.what() + ": unsupported format version " + std::to_string(v) +
                      ", expected " + std::to_string(version));
  }
}

}  // namespace f2a::io
