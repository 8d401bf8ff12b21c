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

#include "glowq/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "glowq/errors.hpp"

namespace glowq {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kSvdSweepCap = 100;
constexpr double kSvdTol = 1e-12;
constexpr int kEigSweepCap = 100;

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

// Apply the plane rotation [c -s; s c] to the vector pair (x, y) in place.
void rotate(double* x, double* y, std::size_t n, double c, double s) {
  for (std::size_t k = 0; k < n; ++k) {
    const double xk = x[k];
    const double yk = y[k];
    x[k] = c * xk - s * yk;
    y[k] = s * xk + c * yk;
  }
}

std::vector<std::size_t> descending_order(const std::vector<double>& values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  return idx;
}

// Columns are stored as rows of `cols_as_rows` (k x m). Fills column j with a
// unit vector orthogonal to every column flagged in `valid`.
void complete_basis(Matrix& cols_as_rows, std::vector<bool>& valid, std::size_t j) {
  const std::size_t m = cols_as_rows.cols();
  const std::size_t k = cols_as_rows.rows();
  std::size_t used = 0;
  for (std::size_t c = 0; c < k; ++c) used += valid[c] ? 1 : 0;
  const double want = 0.5 * static_cast<double>(m - std::min(m, used)) / static_cast<double>(m);
  std::vector<double> cand(m);
  for (std::size_t e = 0; e < m; ++e) {
    std::fill(cand.begin(), cand.end(), 0.0);
    cand[e] = 1.0;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t c = 0; c < k; ++c) {
        if (!valid[c]) continue;
        const double* qc = cols_as_rows.row(c).data();
        const double proj = dot(qc, cand.data(), m);
        for (std::size_t t = 0; t < m; ++t) cand[t] -= proj * qc[t];
      }
    }
    const double n2 = dot(cand.data(), cand.data(), m);
    if (n2 >= want && n2 > 0.0) {
      const double inv = 1.0 / std::sqrt(n2);
      auto dst = cols_as_rows.row(j);
      for (std::size_t t = 0; t < m; ++t) dst[t] = cand[t] * inv;
      valid[j] = true;
      return;
    }
  }
  throw NumericalError("svd: unable to complete orthonormal basis");
}

// One-sided Jacobi on a tall (or square) matrix.
SvdResult svd_tall(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Matrix work = a.transpose();  // row j holds column j of a
  Matrix vt = Matrix::identity(n);

  bool converged = false;
  for (int sweep = 0; sweep < kSvdSweepCap && !converged; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double* ap = work.row(p).data();
        double* aq = work.row(q).data();
        const double alpha = dot(ap, ap, m);
        const double beta = dot(aq, aq, m);
        if (alpha == 0.0 || beta == 0.0) continue;
        const double gamma = dot(ap, aq, m);
        if (std::abs(gamma) <= kSvdTol * std::sqrt(alpha) * std::sqrt(beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        // Rotation chosen so that the updated columns are orthogonal.
        for (std::size_t k = 0; k < m; ++k) {
          const double x = ap[k];
          const double y = aq[k];
          ap[k] = c * x - s * y;
          aq[k] = s * x + c * y;
        }
        rotate(vt.row(p).data(), vt.row(q).data(), n, c, s);
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    throw NumericalError("svd: one-sided Jacobi did not converge within " +
                         std::to_string(kSvdSweepCap) + " sweeps");
  }

  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double* aj = work.row(j).data();
    norms[j] = std::sqrt(dot(aj, aj, m));
  }
  const auto order = descending_order(norms);
  const double sigma_max = norms[order.front()];
  const double floor = sigma_max * kEps * 1e-3;

  Matrix ut(n, m);  // rows are left singular vectors
  Matrix vt_sorted(n, n);
  std::vector<double> sigma(n);
  std::vector<bool> valid(n, false);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    sigma[j] = norms[src];
    auto vs = vt.row(src);
    std::copy(vs.begin(), vs.end(), vt_sorted.row(j).begin());
    if (sigma[j] > floor && sigma[j] > 0.0) {
      const double inv = 1.0 / sigma[j];
      const double* aj = work.row(src).data();
      auto dst = ut.row(j);
      for (std::size_t k = 0; k < m; ++k) dst[k] = aj[k] * inv;
      valid[j] = true;
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (!valid[j]) complete_basis(ut, valid, j);
  }
  return SvdResult{ut.transpose(), std::move(sigma), vt_sorted.transpose()};
}

void apply_sign_convention(SvdResult& res) {
  const std::size_t k = res.sigma.size();
  for (std::size_t j = 0; j < k; ++j) {
    double lead = 0.0;
    for (std::size_t i = 0; i < res.v.rows(); ++i) {
      if (std::abs(res.v(i, j)) > 1e-12) {
        lead = res.v(i, j);
        break;
      }
    }
    if (lead < 0.0) {
      for (std::size_t i = 0; i < res.v.rows(); ++i) res.v(i, j) = -res.v(i, j);
      for (std::size_t i = 0; i < res.u.rows(); ++i) res.u(i, j) = -res.u(i, j);
    }
  }
}

void require_symmetric(const Matrix& s, const char* who) {
  if (!s.is_square()) throw ShapeError(std::string(who) + ": matrix is not square");
  const double scale = std::max(1.0, s.max_abs());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = i + 1; j < s.cols(); ++j) {
      if (std::abs(s(i, j) - s(j, i)) > 1e-10 * scale) {
        throw ValidationError(std::string(who) + ": matrix is not symmetric");
      }
    }
  }
}

Matrix compose_spectral(const Matrix& vectors, const std::vector<double>& f) {
  Matrix scaled = scale_cols(vectors, f);
  return symmetrize(matmul_nt(scaled, vectors));
}

}  // namespace

double default_rank_tol(std::size_t rows, std::size_t cols) noexcept {
  return static_cast<double>(std::max(rows, cols)) * kEps;
}

Matrix SvdResult::truncated(std::size_t r) const {
  r = std::min(r, sigma.size());
  if (r == 0) return Matrix(u.rows(), v.rows());
  Matrix ur = u.leading_cols(r);
  Matrix vr = v.leading_cols(r);
  return matmul_nt(scale_cols(std::move(ur), std::span(sigma).first(r)), vr);
}

double SvdResult::tail_norm(std::size_t r) const {
  double s = 0.0;
  for (std::size_t j = r; j < sigma.size(); ++j) s += sigma[j] * sigma[j];
  return std::sqrt(s);
}

ThinQrResult thin_qr(const Matrix& m) {
  const std::size_t rows = m.rows();
  const std::size_t cols = m.cols();
  if (rows < cols) {
    throw ShapeError("thin_qr: requires rows >= cols, got " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  Matrix a = m;
  std::vector<std::vector<double>> reflectors(cols);
  std::vector<double> scale2(cols, 0.0);

  for (std::size_t j = 0; j < cols; ++j) {
    double norm2 = 0.0;
    for (std::size_t i = j; i < rows; ++i) norm2 += a(i, j) * a(i, j);
    if (norm2 == 0.0) continue;
    const double norm = std::sqrt(norm2);
    const double alpha = a(j, j) >= 0.0 ? -norm : norm;
    std::vector<double> v(rows - j);
    for (std::size_t i = j; i < rows; ++i) v[i - j] = a(i, j);
    v[0] -= alpha;
    const double vnorm2 = dot(v.data(), v.data(), v.size());
    if (vnorm2 == 0.0) continue;
    for (std::size_t k = j; k < cols; ++k) {
      double s = 0.0;
      for (std::size_t i = j; i < rows; ++i) s += v[i - j] * a(i, k);
      const double f = 2.0 * s / vnorm2;
      for (std::size_t i = j; i < rows; ++i) a(i, k) -= f * v[i - j];
    }
    a(j, j) = alpha;
    for (std::size_t i = j + 1; i < rows; ++i) a(i, j) = 0.0;
    reflectors[j] = std::move(v);
    scale2[j] = vnorm2;
  }

  Matrix r(cols, cols);
  for (std::size_t i = 0; i < cols; ++i) {
    for (std::size_t j = i; j < cols; ++j) r(i, j) = a(i, j);
  }
  Matrix q(rows, cols);
  for (std::size_t i = 0; i < cols; ++i) q(i, i) = 1.0;
  for (std::size_t jj = cols; jj-- > 0;) {
    const auto& v = reflectors[jj];
    if (v.empty()) continue;
    for (std::size_t k = 0; k < cols; ++k) {
      double s = 0.0;
      for (std::size_t i = jj; i < rows; ++i) s += v[i - jj] * q(i, k);
      const double f = 2.0 * s / scale2[jj];
      for (std::size_t i = jj; i < rows; ++i) q(i, k) -= f * v[i - jj];
    }
  }
  for (std::size_t j = 0; j < cols; ++j) {
    if (r(j, j) < 0.0) {
      for (std::size_t k = j; k < cols; ++k) r(j, k) = -r(j, k);
      for (std::size_t i = 0; i < rows; ++i) q(i, j) = -q(i, j);
    }
  }
  return ThinQrResult{std::move(q), std::move(r)};
}

SvdResult svd(const Matrix& m) {
  SvdResult res = m.rows() >= m.cols() ? svd_tall(m) : svd_tall(m.transpose());
  if (m.rows() < m.cols()) std::swap(res.u, res.v);
  apply_sign_convention(res);
  return res;
}

SymEigResult sym_eig(const Matrix& s) {
  require_symmetric(s, "sym_eig");
  const std::size_t n = s.rows();
  Matrix a = symmetrize(s);
  Matrix vt = Matrix::identity(n);  // row k is eigenvector k

  bool converged = false;
  for (int sweep = 1; sweep <= kEigSweepCap; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += std::abs(a(p, q));
    }
    if (off == 0.0) {
      converged = true;
      break;
    }
    const double thresh = sweep < 4 ? 0.2 * off / static_cast<double>(n * n) : 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        const double g = 100.0 * std::abs(apq);
        if (sweep > 4 && std::abs(a(p, p)) + g == std::abs(a(p, p)) &&
            std::abs(a(q, q)) + g == std::abs(a(q, q))) {
          a(p, q) = 0.0;
          a(q, p) = 0.0;
          continue;
        }
        if (std::abs(apq) <= thresh || apq == 0.0) continue;
        const double h = a(q, q) - a(p, p);
        double t;
        if (std::abs(h) + g == std::abs(h)) {
          t = apq / h;
        } else {
          const double theta = 0.5 * h / apq;
          t = 1.0 / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
          if (theta < 0.0) t = -t;
        }
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = t * c;
        const double tau = sn / (1.0 + c);
        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          if (r == p || r == q) continue;
          const double arp = a(r, p);
          const double arq = a(r, q);
          a(r, p) = arp - sn * (arq + arp * tau);
          a(r, q) = arq + sn * (arp - arq * tau);
          a(p, r) = a(r, p);
          a(q, r) = a(r, q);
        }
        double* vp = vt.row(p).data();
        double* vq = vt.row(q).data();
        for (std::size_t r = 0; r < n; ++r) {
          const double x = vp[r];
          const double y = vq[r];
          vp[r] = x - sn * (y + x * tau);
          vq[r] = y + sn * (x - y * tau);
        }
      }
    }
  }
  if (!converged) {
    throw NumericalError("sym_eig: Jacobi did not converge within " +
                         std::to_string(kEigSweepCap) + " sweeps");
  }

  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = a(i, i);
  const auto order = descending_order(diag);
  SymEigResult out{Matrix(n, n), std::vector<double>(n)};
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = diag[order[j]];
    auto v = vt.row(order[j]);
    for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v[i];
  }
  return out;
}

PsdRoots psd_roots(const Matrix& s, std::optional<double> rank_tol) {
  const SymEigResult eig = sym_eig(s);
  const std::size_t n = s.rows();
  const double lmax = std::max(eig.values.front(), 0.0);
  for (double l : eig.values) {
    if (l < -1e-6 * lmax || (lmax == 0.0 && l < 0.0)) {
      throw NumericalError("psd_sqrt: matrix is not positive semidefinite (eigenvalue " +
                           std::to_string(l) + ")");
    }
  }
  const double cut = rank_tol.value_or(default_rank_tol(n, n)) * lmax;
  std::vector<double> root(n);
  std::vector<double> inv_root(n);
  std::size_t rank = 0;
  for (std::size_t j = 0; j < n; ++j) {
    // Eigenvalues below the cutoff count as nullspace for both roots, so that
    // sqrt * inv_sqrt is exactly the projector onto the retained range.
    const double l = std::max(eig.values[j], 0.0);
    if (l > cut && l > 0.0) {
      root[j] = std::sqrt(l);
      inv_root[j] = 1.0 / root[j];
      ++rank;
    } else {
      root[j] = 0.0;
      inv_root[j] = 0.0;
    }
  }
  return PsdRoots{compose_spectral(eig.vectors, root), compose_spectral(eig.vectors, inv_root),
                  rank};
}

Matrix psd_sqrt(const Matrix& s, SqrtMode mode, std::optional<double> rank_tol) {
  PsdRoots roots = psd_roots(s, rank_tol);
  return mode == SqrtMode::sqrt ? std::move(roots.sqrt) : std::move(roots.inv_sqrt);
}

Matrix orth(const Matrix& y) {
  const std::size_t m = y.rows();
  const std::size_t n = y.cols();
  const Matrix cols = y.transpose();
  double max_norm = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double* c = cols.row(j).data();
    max_norm = std::max(max_norm, std::sqrt(dot(c, c, m)));
  }
  const double drop = 8.0 * static_cast<double>(std::max(m, n)) * kEps * max_norm;

  std::vector<std::vector<double>> basis;
  std::vector<double> v(m);
  for (std::size_t j = 0; j < n && basis.size() < m; ++j) {
    auto src = cols.row(j);
    std::copy(src.begin(), src.end(), v.begin());
    double norm = std::sqrt(dot(v.data(), v.data(), m));
    if (norm <= drop || norm == 0.0) continue;
    // Iterated classical Gram-Schmidt: repeat while a pass removes more than
    // half of the remaining norm.
    for (int pass = 0; pass < 4; ++pass) {
      for (const auto& q : basis) {
        const double proj = dot(q.data(), v.data(), m);
        for (std::size_t k = 0; k < m; ++k) v[k] -= proj * q[k];
      }
      const double next = std::sqrt(dot(v.data(), v.data(), m));
      const bool settled = next > 0.5 * norm;
      norm = next;
      if (settled && pass >= 1) break;
    }
    if (norm <= drop || norm == 0.0) continue;
    for (double& x : v) x /= norm;
    basis.push_back(v);
  }
  if (basis.empty()) throw NumericalError("orth: input has numerical rank zero");
  Matrix q(m, basis.size());
  for (std::size_t j = 0; j < basis.size(); ++j) {
    for (std::size_t i = 0; i < m; ++i) q(i, j) = basis[j][i];
  }
  return q;
}

Matrix pinv(const Matrix& m, std::optional<double> rank_tol) {
  const SvdResult s = svd(m);
  const double cut = rank_tol.value_or(default_rank_tol(m.rows(), m.cols())) * s.sigma.front();
  std::vector<double> inv(s.sigma.size(), 0.0);
  for (std::size_t j = 0; j < inv.size(); ++j) {
    if (s.sigma[j] > cut && s.sigma[j] > 0.0) inv[j] = 1.0 / s.sigma[j];
  }
  return matmul_nt(scale_cols(s.v, inv), s.u);
}

Matrix row_space_projector(const Matrix& m, std::optional<double> rank_tol) {
  const SvdResult s = svd(m);
  const double cut = rank_tol.value_or(default_rank_tol(m.rows(), m.cols())) * s.sigma.front();
  std::vector<double> keep(s.sigma.size(), 0.0);
  for (std::size_t j = 0; j < keep.size(); ++j) {
    if (s.sigma[j] > cut && s.sigma[j] > 0.0) keep[j] = 1.0;
  }
  return symmetrize(matmul_nt(scale_cols(s.v, keep), s.v));
}

}  // namespace glowq
