// Copyright 2026 The GlowQ Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "glowq/glxm.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "glowq/errors.hpp"

namespace glowq::glxm {

namespace {

constexpr char kMagic[4] = {'G', 'L', 'X', 'M'};

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int b = 0; b < bytes; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint64_t get_le(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int b = 0; b < bytes; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode(const Matrix& m) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 8 * m.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_le(out, kVersion, 4);
  put_le(out, m.rows(), 8);
  put_le(out, m.cols(), 8);
  for (double v : m.data()) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  return out;
}

Matrix decode(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderBytes) throw IoError("glxm: truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw IoError("glxm: bad magic");
  const auto version = get_le(bytes.data() + 4, 4);
  if (version != kVersion) throw IoError("glxm: unsupported version " + std::to_string(version));
  const std::uint64_t rows = get_le(bytes.data() + 8, 8);
  const std::uint64_t cols = get_le(bytes.data() + 16, 8);
  if (rows == 0 || cols == 0) throw IoError("glxm: degenerate shape");
  if (rows > std::numeric_limits<std::uint64_t>::max() / cols / 8) {
    throw IoError("glxm: shape overflow");
  }
  const std::uint64_t n = rows * cols;
  if (bytes.size() != kHeaderBytes + 8 * n) throw IoError("glxm: payload length mismatch");
  std::vector<double> data(n);
  const std::uint8_t* p = bytes.data() + kHeaderBytes;
  for (std::uint64_t k = 0; k < n; ++k) data[k] = std::bit_cast<double>(get_le(p + 8 * k, 8));
  try {
    return Matrix(rows, cols, std::move(data));
  } catch (const ValidationError& e) {
    throw IoError(std::string("glxm: ") + e.what());
  }
}

void write(std::ostream& out, const Matrix& m) {
  const auto bytes = encode(m);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("glxm: write failed");
}

Matrix read(std::istream& in) {
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode(bytes);
}

namespace {

void write_bytes_atomic(const std::filesystem::path& path, const char* data, std::size_t size) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp.string() + " for writing");
    f.write(data, static_cast<std::streamsize>(size));
    if (!f) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename failed: " + path.string() + ": " + ec.message());
}

}  // namespace

void save(const std::filesystem::path& path, const Matrix& m) {
  const auto bytes = encode(m);
  write_bytes_atomic(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

Matrix load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  try {
    return read(f);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_bytes_atomic(path, text.data(), text.size());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace glowq::glxm
