#pragma once

// Per-frame inner loops of every fit: residual angles, design rows and the
// Gauss-Newton normal equations. Two implementations exist:
//
//   scalar  reference; evaluates theta = -asin(A1' R B2) and the half-angle
//           sine/cosine with libm, frame by frame, straight from Eigen 3x3
//           products.
//   avx2    four frames per lane group; the five bilinear forms are 9-term
//           FMA dot products over structure-of-arrays frame storage and the
//           half-angle terms come from algebraic identities (sqrt/div only).
//
// The active variant is chosen once at startup from CPUID and can be forced
// with the AXISFIT_KERNEL environment variable ("scalar" or "avx2") or with
// set_kernel_isa().

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "axisfit/so3.hpp"

namespace axisfit {

/// Structure-of-arrays copy of a frame sequence; entry k = 3 * row + col.
class FrameBlock {
 public:
  FrameBlock() = default;
  explicit FrameBlock(std::span<const RotationMatrix> frames);

  std::size_t size() const { return n_; }
  const double* entry(int k) const { return entries_[k].data(); }
  Mat3 frame(std::size_t i) const;

 private:
  std::size_t n_ = 0;
  std::array<std::vector<double>, 9> entries_;
};

/// Everything about the current angles that the per-frame loop needs.
///
/// value_f(R) = v_f' R w_f for the five bilinear forms
///   0: A1' R B2        (u, the sine of -theta)
///   1: dA1/dt1' R B2   2: dA1/dt2' R B2
///   3: A1' R dB2/ds1   4: A1' R dB2/ds2
/// stored both as vector pairs (scalar path) and as flattened outer products
/// (SIMD path). For the reduced 4-angle model gamma0 is derived from the
/// axes and `offset` holds the derivative of A1'B2 / cos(gamma0).
struct FrameGeometry {
  std::array<Vec3, 5> left;
  std::array<Vec3, 5> right;
  std::array<std::array<double, 9>, 5> coef{};
  std::array<double, 4> offset{};
  double gamma0 = 0.0;
  double cos_gamma0 = 1.0;
  double sin_gamma0 = 0.0;
  bool reduced = false;

  int columns() const { return reduced ? 4 : 5; }
};

FrameGeometry make_geometry(const AnatomicalAngles& beta);
/// Reduced model: gamma0 = -asin(A1' B2). Throws ErrorKind::degenerate when
/// |A1' B2| is within 1e-9 of 1.
FrameGeometry make_reduced_geometry(double t1, double t2, double s1, double s2);

/// Per-frame outputs, structure of arrays.
struct FrameTerms {
  std::vector<double> u;         // A1' R B2
  std::vector<double> residual;  // 2 sin((theta - gamma0) / 2)
  std::array<std::vector<double>, 5> design;  // column k of the design matrix
  int columns = 5;

  std::size_t size() const { return residual.size(); }
  void resize(std::size_t n, int cols);
  double max_abs_u() const;
};

struct NormalEquations {
  Mat5 xtx = Mat5::Zero();  // sum X X'   (top-left columns x columns block used)
  Vec5 xtr = Vec5::Zero();  // sum r X
  double rss = 0.0;         // sum r^2
};

enum class KernelIsa { scalar, avx2 };

std::string_view to_string(KernelIsa isa);
bool kernel_isa_supported(KernelIsa isa);
KernelIsa active_kernel_isa();
/// Throws ErrorKind::usage when the requested ISA is not supported here.
void set_kernel_isa(KernelIsa isa);

void evaluate_frames(const FrameBlock& frames, const FrameGeometry& geometry, FrameTerms& out);
NormalEquations accumulate_normal_equations(const FrameTerms& terms);

namespace kernels {
void evaluate_frames_scalar(const FrameBlock& frames, const FrameGeometry& geometry, FrameTerms& out);
void accumulate_scalar(const FrameTerms& terms, NormalEquations& out);
// Only callable when kernel_isa_supported(KernelIsa::avx2).
void evaluate_frames_avx2(const FrameBlock& frames, const FrameGeometry& geometry, FrameTerms& out);
void accumulate_avx2(const FrameTerms& terms, NormalEquations& out);
}  // namespace kernels

}  // namespace axisfit
