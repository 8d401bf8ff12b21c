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

#include "glowq/format.hpp"

#include <array>
#include <charconv>

namespace glowq {

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::array<char, 16> buf{};
  buf.fill('0');
  std::array<char, 16> tmp{};
  const auto res = std::to_chars(tmp.data(), tmp.data() + tmp.size(), v, 16);
  const auto n = static_cast<std::size_t>(res.ptr - tmp.data());
  for (std::size_t i = 0; i < n; ++i) buf[16 - n + i] = tmp[i];
  return std::string(buf.data(), buf.size());
}

}  // namespace glowq
