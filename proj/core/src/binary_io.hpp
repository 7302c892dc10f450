// Copyright 2026 The EGT Authors.
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

#ifndef EGT_SRC_BINARY_IO_HPP_
#define EGT_SRC_BINARY_IO_HPP_

// Little-endian 32-bit encoding shared by the dataset and checkpoint files.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "egt/errors.hpp"

namespace egt::detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

inline void put_i32(std::string& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}

// Cursor over an in-memory file that reports byte offsets in its errors.
class ByteReader {
 public:
  ByteReader(std::string bytes, std::string source)
      : bytes_(std::move(bytes)), source_(std::move(source)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(source_ + ": " + msg + " at byte offset " +
                    std::to_string(pos_));
  }

  std::string take(std::size_t n) {
    if (remaining() < n) {
      fail("truncated payload, need " + std::to_string(n) + " bytes, have " +
           std::to_string(remaining()));
    }
    std::string out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::string line() {
    const std::size_t end = bytes_.find('\n', pos_);
    if (end == std::string::npos) fail("unterminated header line");
    std::string out = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return out;
  }

  std::uint32_t u32() {
    if (remaining() < 4) {
      fail("truncated payload, need 4 bytes, have " + std::to_string(remaining()));
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }

 private:
  std::string bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path.string() + ": cannot open for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (in.bad()) throw DataError(path.string() + ": read failed");
  return bytes;
}

// Writes through a sibling temporary file so a failed write never leaves a
// partial file at `path`.
inline void write_file(const std::filesystem::path& path,
                       const std::string& bytes) {
  const auto parent = path.has_parent_path() ? path.parent_path()
                                             : std::filesystem::path(".");
  if (!std::filesystem::is_directory(parent)) {
    throw DataError(path.string() + ": directory " + parent.string() +
                    " does not exist");
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(tmp.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw DataError(tmp.string() + ": write failed");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw DataError(path.string() + ": cannot move file into place");
  }
}

}  // namespace egt::detail

#endif  // EGT_SRC_BINARY_IO_HPP_
