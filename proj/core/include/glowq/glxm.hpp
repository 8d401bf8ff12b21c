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

#ifndef GLOWQ_GLXM_HPP_
#define GLOWQ_GLXM_HPP_

// GLXM matrix container:
//
//   offset  size  field
//   0       4     magic "GLXM"
//   4       4     version, u32 little-endian, = 1
//   8       8     rows, u64 little-endian
//   16      8     cols, u64 little-endian
//   24      8*n   rows*cols IEEE-754 binary64 values, little-endian, row-major

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "glowq/matrix.hpp"

namespace glowq::glxm {

inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 24;

std::vector<std::uint8_t> encode(const Matrix& m);
Matrix decode(const std::vector<std::uint8_t>& bytes);

void write(std::ostream& out, const Matrix& m);
Matrix read(std::istream& in);

/// Writes to a sibling temporary and renames it over `path`.
void save(const std::filesystem::path& path, const Matrix& m);
Matrix load(const std::filesystem::path& path);

/// Whole-file atomic text write (temp file + rename).
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace glowq::glxm

#endif  // GLOWQ_GLXM_HPP_
