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

#include "glowq/quant.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <string>

#include "glowq/errors.hpp"
#include "glowq/glxm.hpp"

namespace glowq {

namespace {

// Round half to even, independent of the floating-point environment.
double round_half_even(double x) {
  const double fl = std::floor(x);
  const double frac = x - fl;
  if (frac < 0.5) return fl;
  if (frac > 0.5) return fl + 1.0;
  return std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0;
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  std::filesystem::path p = stem;
  p += suffix;
  return p;
}

}  // namespace

void QuantConfig::validate() const {
  if (bits != 2 && bits != 3 && bits != 4 && bits != 8) {
    throw ValidationError("QuantConfig: bits must be one of {2,3,4,8}, got " +
                          std::to_string(bits));
  }
  if (group_size == 0) throw ValidationError("QuantConfig: group_size must be > 0");
  if (!symmetric) throw ValidationError("QuantConfig: only symmetric quantization is supported");
}

QuantizedLinear::QuantizedLinear(std::size_t out_dim, std::size_t in_dim,
                                 std::vector<std::int32_t> codes, Matrix scales,
                                 QuantConfig config)
    : out_dim_(out_dim),
      in_dim_(in_dim),
      codes_(std::move(codes)),
      scales_(std::move(scales)),
      config_(config) {
  config_.validate();
  if (codes_.size() != out_dim_ * in_dim_) throw ShapeError("QuantizedLinear: codes length");
  if (scales_.rows() != out_dim_ || scales_.cols() != config_.num_groups(in_dim_)) {
    throw ShapeError("QuantizedLinear: scales shape");
  }
  for (std::int32_t c : codes_) {
    if (c < config_.qmin() || c > config_.qmax()) {
      throw ValidationError("QuantizedLinear: code out of range");
    }
  }
  for (std::size_t i = 0; i < out_dim_; ++i) {
    for (std::size_t g = 0; g < scales_.cols(); ++g) {
      const double s = scales_(i, g);
      if (s < 0.0) throw ValidationError("QuantizedLinear: negative scale");
      if (s == 0.0) {
        const std::size_t j0 = g * config_.group_size;
        const std::size_t j1 = std::min(in_dim_, j0 + config_.group_size);
        for (std::size_t j = j0; j < j1; ++j) {
          if (code(i, j) != 0) throw ValidationError("QuantizedLinear: nonzero code in zero group");
        }
      }
    }
  }
}

QuantizedLinear quantize(const Matrix& w, const QuantConfig& cfg) {
  cfg.validate();
  const std::size_t out = w.rows();
  const std::size_t in = w.cols();
  const std::size_t groups = cfg.num_groups(in);
  const double qmax = cfg.qmax();
  std::vector<std::int32_t> codes(out * in, 0);
  Matrix scales(out, groups);
  for (std::size_t i = 0; i < out; ++i) {
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t j0 = g * cfg.group_size;
      const std::size_t j1 = std::min(in, j0 + cfg.group_size);
      double amax = 0.0;
      for (std::size_t j = j0; j < j1; ++j) amax = std::max(amax, std::abs(w(i, j)));
      if (amax == 0.0) continue;
      const double scale = amax / qmax;
      scales(i, g) = scale;
      for (std::size_t j = j0; j < j1; ++j) {
        const double c = std::clamp(round_half_even(w(i, j) / scale),
                                    static_cast<double>(cfg.qmin()), qmax);
        codes[i * in + j] = static_cast<std::int32_t>(c);
      }
    }
  }
  return QuantizedLinear(out, in, std::move(codes), std::move(scales), cfg);
}

Matrix dequantize(const QuantizedLinear& q) {
  Matrix w(q.out_dim(), q.in_dim());
  for (std::size_t i = 0; i < q.out_dim(); ++i) {
    for (std::size_t j = 0; j < q.in_dim(); ++j) w(i, j) = q.code(i, j) * q.scale(i, j);
  }
  return w;
}

Matrix error_matrix(const Matrix& w, const QuantizedLinear& q) {
  if (w.rows() != q.out_dim() || w.cols() != q.in_dim()) {
    throw ShapeError("error_matrix: weight shape does not match quantized shape");
  }
  return w - dequantize(q);
}

void save_quantized(const std::filesystem::path& stem, const QuantizedLinear& q) {
  std::vector<double> codes(q.codes().begin(), q.codes().end());
  glxm::save(with_suffix(stem, ".codes.glxm"), Matrix(q.out_dim(), q.in_dim(), std::move(codes)));
  glxm::save(with_suffix(stem, ".scales.glxm"), q.scales());
  nlohmann::json meta = {
      {"format", "glowq.quantized_linear"},
      {"version", 1},
      {"out_dim", q.out_dim()},
      {"in_dim", q.in_dim()},
      {"bits", q.config().bits},
      {"group_size", q.config().group_size},
      {"symmetric", q.config().symmetric},
  };
  glxm::write_text_atomic(with_suffix(stem, ".json"), meta.dump(2) + "\n");
}

QuantizedLinear load_quantized(const std::filesystem::path& stem) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(glxm::read_text(with_suffix(stem, ".json")));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(stem.string() + ".json: " + e.what());
  }
  QuantConfig cfg;
  std::size_t out = 0;
  std::size_t in = 0;
  try {
    cfg.bits = meta.at("bits").get<int>();
    cfg.group_size = meta.at("group_size").get<std::size_t>();
    cfg.symmetric = meta.at("symmetric").get<bool>();
    out = meta.at("out_dim").get<std::size_t>();
    in = meta.at("in_dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(stem.string() + ".json: " + e.what());
  }
  const Matrix codes_m = glxm::load(with_suffix(stem, ".codes.glxm"));
  if (codes_m.rows() != out || codes_m.cols() != in) throw IoError("quantized codes shape mismatch");
  std::vector<std::int32_t> codes(codes_m.size());
  for (std::size_t k = 0; k < codes.size(); ++k) {
    const double c = codes_m.data()[k];
    if (c != std::trunc(c) || std::abs(c) > 128.0) throw IoError("quantized codes out of range");
    codes[k] = static_cast<std::int32_t>(c);
  }
  return QuantizedLinear(out, in, std::move(codes), glxm::load(with_suffix(stem, ".scales.glxm")),
                         cfg);
}

}  // namespace glowq
