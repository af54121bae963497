#include "frame_kernels_avx2.hpp"

#include <immintrin.h>

#include <cmath>

namespace axisfit::kernels::avx2 {

namespace {

inline double clamp_unit(double u) { return u < -1.0 ? -1.0 : (u > 1.0 ? 1.0 : u); }
inline double non_negative(double x) { return x < 0.0 ? 0.0 : x; }

inline double bilinear(const double* coef, const double* const entries[9], std::size_t i) {
  double s = 0.0;
  for (int k = 0; k < 9; ++k) s += coef[k] * entries[k][i];
  return s;
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

}  // namespace

// Half-angle terms from u = A1' R B2 without trigonometric calls:
//   sin(theta) = -u, cos(theta) = sqrt(1 - u^2)          (theta in [-pi/2, pi/2])
//   d = theta - gamma0, cos(d/2) = sqrt((1 + cos d) / 2)  (d in (-pi, pi))
//   2 sin(d/2) = sin(d) / cos(d/2)
void evaluate(std::size_t n, const double* const entries[9], const GeometryView& g, const TermsView& out) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d minus_one = _mm256_set1_pd(-1.0);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d cg = _mm256_set1_pd(g.cos_gamma0);
  const __m256d sg = _mm256_set1_pd(g.sin_gamma0);

  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d r[9];
    for (int k = 0; k < 9; ++k) r[k] = _mm256_loadu_pd(entries[k] + i);

    __m256d form[5];
    for (int f = 0; f < 5; ++f) {
      const double* c = g.coef + 9 * f;
      __m256d acc = _mm256_mul_pd(_mm256_set1_pd(c[0]), r[0]);
      for (int k = 1; k < 9; ++k) acc = _mm256_fmadd_pd(_mm256_set1_pd(c[k]), r[k], acc);
      form[f] = acc;
    }

    const __m256d u = _mm256_min_pd(_mm256_max_pd(form[0], minus_one), one);
    const __m256d w = _mm256_sqrt_pd(_mm256_max_pd(zero, _mm256_fnmadd_pd(u, u, one)));
    const __m256d sin_d = _mm256_fnmadd_pd(w, sg, _mm256_mul_pd(_mm256_sub_pd(zero, u), cg));
    const __m256d cos_d = _mm256_fnmadd_pd(u, sg, _mm256_mul_pd(w, cg));
    const __m256d ch = _mm256_sqrt_pd(_mm256_max_pd(zero, _mm256_mul_pd(half, _mm256_add_pd(one, cos_d))));
    const __m256d neg_ch = _mm256_sub_pd(zero, ch);

    _mm256_storeu_pd(out.u + i, form[0]);
    _mm256_storeu_pd(out.residual + i, _mm256_div_pd(sin_d, ch));
    for (int k = 0; k < 4; ++k) {
      const __m256d inner = _mm256_sub_pd(_mm256_div_pd(form[k + 1], w), _mm256_set1_pd(g.offset[k]));
      _mm256_storeu_pd(out.design[k] + i, _mm256_mul_pd(neg_ch, inner));
    }
    if (!g.reduced) _mm256_storeu_pd(out.design[4] + i, neg_ch);
  }

  for (; i < n; ++i) {
    const double raw = bilinear(g.coef, entries, i);
    const double u = clamp_unit(raw);
    const double w = std::sqrt(non_negative(1.0 - u * u));
    const double sin_d = -u * g.cos_gamma0 - w * g.sin_gamma0;
    const double cos_d = w * g.cos_gamma0 - u * g.sin_gamma0;
    const double ch = std::sqrt(non_negative(0.5 * (1.0 + cos_d)));
    out.u[i] = raw;
    out.residual[i] = sin_d / ch;
    for (int k = 0; k < 4; ++k) {
      out.design[k][i] = -ch * (bilinear(g.coef + 9 * (k + 1), entries, i) / w - g.offset[k]);
    }
    if (!g.reduced) out.design[4][i] = -ch;
  }
}

void accumulate(std::size_t n, int cols, const double* residual, const double* const design[5],
                double* gram, double* cross, double* rss) {
  __m256d g[5][5];
  __m256d x_r[5];
  __m256d r_r = _mm256_setzero_pd();
  for (int j = 0; j < 5; ++j) {
    x_r[j] = _mm256_setzero_pd();
    for (int k = 0; k < 5; ++k) g[j][k] = _mm256_setzero_pd();
  }

  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = _mm256_loadu_pd(residual + i);
    __m256d x[5];
    for (int j = 0; j < cols; ++j) x[j] = _mm256_loadu_pd(design[j] + i);
    r_r = _mm256_fmadd_pd(r, r, r_r);
    for (int j = 0; j < cols; ++j) {
      x_r[j] = _mm256_fmadd_pd(r, x[j], x_r[j]);
      for (int k = j; k < cols; ++k) g[j][k] = _mm256_fmadd_pd(x[j], x[k], g[j][k]);
    }
  }

  *rss = hsum(r_r);
  for (int j = 0; j < cols; ++j) {
    cross[j] = hsum(x_r[j]);
    for (int k = j; k < cols; ++k) gram[5 * j + k] = hsum(g[j][k]);
  }

  for (; i < n; ++i) {
    const double r = residual[i];
    *rss += r * r;
    for (int j = 0; j < cols; ++j) {
      const double xj = design[j][i];
      cross[j] += r * xj;
      for (int k = j; k < cols; ++k) gram[5 * j + k] += xj * design[k][i];
    }
  }
}

}  // namespace axisfit::kernels::avx2
