#include <algorithm>
#include <cmath>

#include "axisfit/frame_kernels.hpp"

namespace axisfit::kernels {

void evaluate_frames_scalar(const FrameBlock& frames, const FrameGeometry& g, FrameTerms& out) {
  const std::size_t n = frames.size();
  const int cols = g.columns();
  out.resize(n, cols);
  for (std::size_t i = 0; i < n; ++i) {
    const Mat3 r = frames.frame(i);
    const double u = g.left[0].dot(r * g.right[0]);
    const double theta = -std::asin(std::clamp(u, -1.0, 1.0));
    const double half = 0.5 * (theta - g.gamma0);
    const double c = std::cos(half);
    const double cos_theta = std::sqrt(std::max(0.0, 1.0 - u * u));
    out.u[i] = u;
    out.residual[i] = 2.0 * std::sin(half);
    for (int k = 0; k < 4; ++k) {
      const double grad = g.left[k + 1].dot(r * g.right[k + 1]);
      out.design[k][i] = -c * (grad / cos_theta - g.offset[k]);
    }
    if (!g.reduced) out.design[4][i] = -c;
  }
}

void accumulate_scalar(const FrameTerms& t, NormalEquations& out) {
  const int cols = t.columns;
  out = NormalEquations{};
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double r = t.residual[i];
    for (int j = 0; j < cols; ++j) {
      const double xj = t.design[j][i];
      out.xtr[j] += r * xj;
      for (int k = j; k < cols; ++k) out.xtx(j, k) += xj * t.design[k][i];
    }
    out.rss += r * r;
  }
  for (int j = 0; j < cols; ++j) {
    for (int k = 0; k < j; ++k) out.xtx(j, k) = out.xtx(k, j);
  }
}

}  // namespace axisfit::kernels
