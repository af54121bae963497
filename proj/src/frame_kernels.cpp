#include "axisfit/frame_kernels.hpp"

#if defined(AXISFIT_BUILD_AVX2)
#include "frame_kernels_avx2.hpp"
#endif

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <string>

namespace axisfit {

FrameBlock::FrameBlock(std::span<const RotationMatrix> frames) : n_(frames.size()) {
  for (auto& e : entries_) e.resize(n_);
  for (std::size_t i = 0; i < n_; ++i) {
    const Mat3& m = frames[i].matrix();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) entries_[3 * r + c][i] = m(r, c);
    }
  }
}

Mat3 FrameBlock::frame(std::size_t i) const {
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = entries_[3 * r + c][i];
  }
  return m;
}

namespace {

void fill_coefficients(FrameGeometry& g) {
  for (int f = 0; f < 5; ++f) {
    for (int p = 0; p < 3; ++p) {
      for (int q = 0; q < 3; ++q) g.coef[f][3 * p + q] = g.left[f][p] * g.right[f][q];
    }
  }
}

FrameGeometry axis_geometry(double t1, double t2, double s1, double s2) {
  const Vec3 a1 = unit_vector_tt(t1, t2);
  const Vec3 b2 = unit_vector_st(s1, s2);
  const AxisPartials tp = tt_partials(t1, t2);
  const AxisPartials sp = st_partials(s1, s2);
  FrameGeometry g;
  g.left = {a1, tp.d_first, tp.d_second, a1, a1};
  g.right = {b2, b2, b2, sp.d_first, sp.d_second};
  fill_coefficients(g);
  return g;
}

}  // namespace

FrameGeometry make_geometry(const AnatomicalAngles& beta) {
  FrameGeometry g = axis_geometry(beta.t1, beta.t2, beta.s1, beta.s2);
  g.gamma0 = beta.gamma0;
  g.cos_gamma0 = std::cos(beta.gamma0);
  g.sin_gamma0 = std::sin(beta.gamma0);
  g.reduced = false;
  return g;
}

FrameGeometry make_reduced_geometry(double t1, double t2, double s1, double s2) {
  FrameGeometry g = axis_geometry(t1, t2, s1, s2);
  const double w = g.left[0].dot(g.right[0]);
  if (std::abs(w) >= 1.0 - 1e-9) {
    throw Error(ErrorKind::degenerate, "reduced model: axes nearly orthogonal to the floating axis (cos gamma0 ~ 0)");
  }
  g.gamma0 = -std::asin(w);
  g.cos_gamma0 = std::sqrt(1.0 - w * w);
  g.sin_gamma0 = -w;
  g.reduced = true;
  // d(A1'B2)/d(angle) / cos(gamma0)
  g.offset[0] = g.left[1].dot(g.right[0]) / g.cos_gamma0;
  g.offset[1] = g.left[2].dot(g.right[0]) / g.cos_gamma0;
  g.offset[2] = g.left[0].dot(g.right[3]) / g.cos_gamma0;
  g.offset[3] = g.left[0].dot(g.right[4]) / g.cos_gamma0;
  return g;
}

void FrameTerms::resize(std::size_t n, int cols) {
  columns = cols;
  u.resize(n);
  residual.resize(n);
  for (int k = 0; k < 5; ++k) {
    if (k < cols) design[k].resize(n);
    else design[k].clear();
  }
}

double FrameTerms::max_abs_u() const {
  double m = 0.0;
  for (double v : u) m = std::max(m, std::abs(v));
  return m;
}

// --- dispatch ---------------------------------------------------------------

namespace {

bool cpu_has_avx2() {
#if defined(AXISFIT_BUILD_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

KernelIsa initial_isa() {
  KernelIsa isa = cpu_has_avx2() ? KernelIsa::avx2 : KernelIsa::scalar;
  if (const char* env = std::getenv("AXISFIT_KERNEL")) {
    const std::string want(env);
    if (want == "scalar") isa = KernelIsa::scalar;
    else if (want == "avx2" && cpu_has_avx2()) isa = KernelIsa::avx2;
  }
  return isa;
}

std::atomic<KernelIsa>& isa_slot() {
  static std::atomic<KernelIsa> slot{initial_isa()};
  return slot;
}

}  // namespace

std::string_view to_string(KernelIsa isa) {
  return isa == KernelIsa::avx2 ? "avx2" : "scalar";
}

bool kernel_isa_supported(KernelIsa isa) {
  return isa == KernelIsa::scalar || cpu_has_avx2();
}

KernelIsa active_kernel_isa() { return isa_slot().load(std::memory_order_relaxed); }

void set_kernel_isa(KernelIsa isa) {
  if (!kernel_isa_supported(isa)) {
    throw Error(ErrorKind::usage, std::string("kernel ISA not supported on this machine: ") +
                                      std::string(to_string(isa)));
  }
  isa_slot().store(isa, std::memory_order_relaxed);
}

void evaluate_frames(const FrameBlock& frames, const FrameGeometry& geometry, FrameTerms& out) {
  if (active_kernel_isa() == KernelIsa::avx2) {
    kernels::evaluate_frames_avx2(frames, geometry, out);
  } else {
    kernels::evaluate_frames_scalar(frames, geometry, out);
  }
}

NormalEquations accumulate_normal_equations(const FrameTerms& terms) {
  NormalEquations ne;
  if (active_kernel_isa() == KernelIsa::avx2) {
    kernels::accumulate_avx2(terms, ne);
  } else {
    kernels::accumulate_scalar(terms, ne);
  }
  return ne;
}

namespace kernels {

#if defined(AXISFIT_BUILD_AVX2)
void evaluate_frames_avx2(const FrameBlock& frames, const FrameGeometry& g, FrameTerms& out) {
  out.resize(frames.size(), g.columns());
  double coef[45];
  for (int f = 0; f < 5; ++f) {
    for (int k = 0; k < 9; ++k) coef[9 * f + k] = g.coef[f][k];
  }
  const double* entries[9];
  for (int k = 0; k < 9; ++k) entries[k] = frames.entry(k);
  avx2::GeometryView view{coef, g.offset.data(), g.cos_gamma0, g.sin_gamma0, g.reduced};
  avx2::TermsView terms{out.u.data(), out.residual.data(), {}};
  for (int k = 0; k < g.columns(); ++k) terms.design[k] = out.design[k].data();
  avx2::evaluate(frames.size(), entries, view, terms);
}

void accumulate_avx2(const FrameTerms& t, NormalEquations& out) {
  out = NormalEquations{};
  double gram[25] = {};
  double cross[5] = {};
  double rss = 0.0;
  const double* design[5] = {};
  for (int k = 0; k < t.columns; ++k) design[k] = t.design[k].data();
  avx2::accumulate(t.size(), t.columns, t.residual.data(), design, gram, cross, &rss);
  for (int j = 0; j < t.columns; ++j) {
    out.xtr[j] = cross[j];
    for (int k = j; k < t.columns; ++k) out.xtx(j, k) = out.xtx(k, j) = gram[5 * j + k];
  }
  out.rss = rss;
}
#else
void evaluate_frames_avx2(const FrameBlock&, const FrameGeometry&, FrameTerms&) {
  throw Error(ErrorKind::usage, "built without AVX2 kernels");
}
void accumulate_avx2(const FrameTerms&, NormalEquations&) {
  throw Error(ErrorKind::usage, "built without AVX2 kernels");
}
#endif

}  // namespace kernels

}  // namespace axisfit
