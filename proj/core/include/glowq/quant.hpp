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

#ifndef GLOWQ_QUANT_HPP_
#define GLOWQ_QUANT_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "glowq/matrix.hpp"

namespace glowq {

/// Symmetric signed group-wise integer quantization. Groups run along the
/// input dimension (columns); a short final group is allowed.
struct QuantConfig {
  int bits = 4;
  std::size_t group_size = 128;
  bool symmetric = true;

  void validate() const;
  std::int32_t qmax() const noexcept { return (std::int32_t{1} << (bits - 1)) - 1; }
  std::int32_t qmin() const noexcept { return -(std::int32_t{1} << (bits - 1)); }
  std::size_t num_groups(std::size_t in_dim) const noexcept {
    return (in_dim + group_size - 1) / group_size;
  }
};

class QuantizedLinear {
 public:
  QuantizedLinear(std::size_t out_dim, std::size_t in_dim, std::vector<std::int32_t> codes,
                  Matrix scales, QuantConfig config);

  std::size_t out_dim() const noexcept { return out_dim_; }
  std::size_t in_dim() const noexcept { return in_dim_; }
  const QuantConfig& config() const noexcept { return config_; }
  const std::vector<std::int32_t>& codes() const noexcept { return codes_; }
  const Matrix& scales() const noexcept { return scales_; }

  std::int32_t code(std::size_t i, std::size_t j) const noexcept { return codes_[i * in_dim_ + j]; }
  double scale(std::size_t i, std::size_t j) const noexcept {
    return scales_(i, j / config_.group_size);
  }

 private:
  std::size_t out_dim_;
  std::size_t in_dim_;
  std::vector<std::int32_t> codes_;
  Matrix scales_;
  QuantConfig config_;
};

/// Per (row, group): scale = max|w| / qmax, codes = round-half-even(w / scale)
/// clamped to [qmin, qmax]. All-zero groups get scale 0 and codes 0.
QuantizedLinear quantize(const Matrix& w, const QuantConfig& cfg);

Matrix dequantize(const QuantizedLinear& q);

/// w - dequantize(q).
Matrix error_matrix(const Matrix& w, const QuantizedLinear& q);

/// Writes `<stem>.codes.glxm`, `<stem>.scales.glxm` and `<stem>.json`.
void save_quantized(const std::filesystem::path& stem, const QuantizedLinear& q);
QuantizedLinear load_quantized(const std::filesystem::path& stem);

}  // namespace glowq

#endif  // GLOWQ_QUANT_HPP_
