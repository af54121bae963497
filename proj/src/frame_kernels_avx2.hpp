#pragma once

// Raw entry points of the AVX2 translation unit. That unit is compiled with
// -mavx2 -mfma and must not instantiate inline code shared with the rest of
// the library (Eigen, std::vector), so it only sees plain arrays.

#include <cstddef>

namespace axisfit::kernels::avx2 {

struct GeometryView {
  const double* coef;    // 5 x 9, row-major
  const double* offset;  // 4
  double cos_gamma0;
  double sin_gamma0;
  bool reduced;
};

struct TermsView {
  double* u;
  double* residual;
  double* design[5];
};

void evaluate(std::size_t n, const double* const entries[9], const GeometryView& g, const TermsView& out);

// gram is 5 x 5 row-major; only the upper triangle (k >= j) is written.
void accumulate(std::size_t n, int cols, const double* residual, const double* const design[5],
                double* gram, double* cross, double* rss);

}  // namespace axisfit::kernels::avx2
