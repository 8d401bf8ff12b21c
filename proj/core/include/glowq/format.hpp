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

#ifndef GLOWQ_FORMAT_HPP_
#define GLOWQ_FORMAT_HPP_

#include <cstdint>
#include <string>
#include <string_view>

namespace glowq {

/// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// Lower-case 16-digit hex.
std::string hex64(std::uint64_t v);

}  // namespace glowq

#endif  // GLOWQ_FORMAT_HPP_
