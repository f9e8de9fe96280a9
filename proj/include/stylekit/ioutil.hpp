// include/stylekit/ioutil.hpp

// Copyright 2026  The stylekit Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef STYLEKIT_IOUTIL_HPP
#define STYLEKIT_IOUTIL_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace stylekit {

std::vector<std::uint8_t> read_file_bytes(const std::string& path);

// Writes to <path>.tmp then renames, so readers never see a partial file.
void atomic_write_file(const std::string& path, const void* data,
                       std::size_t size);
void atomic_write_file(const std::string& path, const std::string& text);
void atomic_write_file(const std::string& path,
                       const std::vector<std::uint8_t>& bytes);

std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64(const std::string& s);

std::string base64_encode(const void* data, std::size_t size);
std::vector<std::uint8_t> base64_decode(const std::string& text);

// Little-endian scalar append/read helpers for the binary file formats.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void raw(const void* data, std::size_t size);
  const std::vector<std::uint8_t>& bytes() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size, std::string context)
      : data_(data), size_(size), context_(std::move(context)) {}
  explicit ByteReader(const std::vector<std::uint8_t>& bytes,
                      std::string context)
      : ByteReader(bytes.data(), bytes.size(), std::move(context)) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  void raw(void* out, std::size_t size);
  void skip(std::size_t size);
  std::size_t remaining() const { return size_ - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t size);
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
  std::string context_;
};

}  // namespace stylekit

#endif  // STYLEKIT_IOUTIL_HPP
