// Copyright 2026 The odet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Little-endian byte stream helpers shared by the model and feature codecs.

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "odet/error.hpp"

namespace odet::detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    U out = 0;
    for (std::size_t k = 0; k < sizeof(U); ++k) {
      out = static_cast<U>((out << 8) | ((v >> (8 * k)) & 0xFF));
    }
    return out;
  }
}

class ByteWriter {
 public:
  void magic(std::string_view m) { bytes_.insert(bytes_.end(), m.begin(), m.end()); }
  void u32(std::uint32_t v) { put(to_little(v)); }
  void f32(float v) { put(to_little(std::bit_cast<std::uint32_t>(v))); }
  void f64(double v) { put(to_little(std::bit_cast<std::uint64_t>(v))); }
  void raw(const std::vector<std::uint8_t>& b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }

  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  template <typename U>
  void put(U v) {
    std::uint8_t buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    bytes_.insert(bytes_.end(), buf, buf + sizeof(U));
  }

  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked reader. Errors name the byte offset of the failing field.
class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size, std::string what)
      : data_(data), size_(size), what_(std::move(what)) {}

  void expect_magic(std::string_view m) {
    need(m.size(), "magic");
    if (std::memcmp(data_ + pos_, m.data(), m.size()) != 0) {
      throw DataError(what_ + ": bad magic at offset " + std::to_string(pos_) + " (expected \"" +
                      std::string(m) + "\")");
    }
    pos_ += m.size();
  }
  std::uint32_t u32(const char* field) { return to_little(get<std::uint32_t>(field)); }
  float f32(const char* field) {
    return std::bit_cast<float>(to_little(get<std::uint32_t>(field)));
  }
  double f64(const char* field) {
    return std::bit_cast<double>(to_little(get<std::uint64_t>(field)));
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }
  const std::string& what() const { return what_; }

  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw DataError(what_ + ": " + msg + " at offset " + std::to_string(at));
  }

 private:
  void need(std::size_t n, const char* field) const {
    if (size_ - pos_ < n) {
      fail(std::string("truncated payload reading ") + field, pos_);
    }
  }
  template <typename U>
  U get(const char* field) {
    need(sizeof(U), field);
    U v;
    std::memcpy(&v, data_ + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace odet::detail
