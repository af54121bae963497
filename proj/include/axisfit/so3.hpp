#pragma once

#include <random>

#include <Eigen/Dense>

#include "axisfit/error.hpp"

namespace axisfit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kHalfPi = kPi / 2.0;

constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

// Distance from +-pi/2 below which tan() in the axis parametrizations is
// considered singular.
inline constexpr double kTanGuard = 1e-9;

/// A 3x3 orthonormal matrix with determinant +1.
///
/// Construction checks ||M^T M - I||_F. Defects up to 1e-12 are accepted
/// as is, defects up to 1e-6 are removed by polar projection (closest
/// rotation in Frobenius norm), anything larger or a reflection throws
/// ErrorKind::validation.
class RotationMatrix {
 public:
  RotationMatrix() : m_(Mat3::Identity()) {}

  static RotationMatrix from_matrix(const Mat3& m);
  static RotationMatrix identity() { return RotationMatrix(); }

  const Mat3& matrix() const { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  RotationMatrix transpose() const { return RotationMatrix(m_.transpose(), Trusted{}); }
  RotationMatrix operator*(const RotationMatrix& rhs) const {
    return from_matrix(m_ * rhs.m_);
  }

  // Frobenius norm of M^T M - I.
  static double orthonormality_defect(const Mat3& m);

 private:
  struct Trusted {};
  RotationMatrix(const Mat3& m, Trusted) : m_(m) {}

  Mat3 m_;
};

enum class Axis { x, y, z };

struct CardanAngles {
  double alpha = 0.0;  // about x, [-pi, pi)
  double gamma = 0.0;  // about z, [-pi/2, pi/2)
  double phi = 0.0;    // about y, [-pi, pi)
};

/// The five per-subject angles (t1, t2, s1, s2, gamma0), radians.
///
/// t1, t2 orient the tibiotarsal axis, s1, s2 the subtalar axis, gamma0 is
/// the fixed z-offset between the two axes. Vector order is always
/// (t1, t2, s1, s2, gamma0).
struct AnatomicalAngles {
  double t1 = 0.0;
  double t2 = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  double gamma0 = 0.0;

  static constexpr int size = 5;
  static constexpr const char* names[5] = {"t1", "t2", "s1", "s2", "gamma0"};

  Vec5 to_vector() const { return Vec5(t1, t2, s1, s2, gamma0); }

  // Throws ErrorKind::domain when an entry is non-finite or outside its
  // interval.
  static AnatomicalAngles from_vector(const Vec5& v);
  // Folds each entry back into its interval (period pi).
  static AnatomicalAngles wrapped(const Vec5& v);

  bool in_domain() const;

  static AnatomicalAngles from_degrees(double t1, double t2, double s1, double s2, double gamma0) {
    return {deg_to_rad(t1), deg_to_rad(t2), deg_to_rad(s1), deg_to_rad(s2), deg_to_rad(gamma0)};
  }
};

// Folds an angle into [-pi/2, pi/2).
double wrap_half_pi(double angle);
// Folds an angle into [-pi, pi).
double wrap_pi(double angle);

/// Tibiotarsal axis A1(t1, t2); first coordinate >= 0.
Vec3 unit_vector_tt(double t1, double t2);
/// Subtalar axis B2(s1, s2); second coordinate >= 0.
Vec3 unit_vector_st(double s1, double s2);

/// A(t1, t2), whose first column is unit_vector_tt.
RotationMatrix frame_tt(double t1, double t2);
/// B(s1, s2), whose second column is unit_vector_st.
RotationMatrix frame_st(double s1, double s2);

// Partial derivatives of A1 (resp. B2) with respect to its two angles,
// expressed in the frame columns.
struct AxisPartials {
  Vec3 d_first;   // d/dt1 or d/ds1
  Vec3 d_second;  // d/dt2 or d/ds2
};
AxisPartials tt_partials(double t1, double t2);
AxisPartials st_partials(double s1, double s2);

RotationMatrix axis_rotation(double angle, Axis axis);

/// R(alpha, x) R(gamma, z) R(phi, y).
RotationMatrix compose_xzy(const CardanAngles& angles);

/// Inverse of compose_xzy. Throws ErrorKind::degenerate when |R(0,1)| is
/// within 1e-9 of 1 (gimbal lock).
CardanAngles cardan_decompose_xzy(const RotationMatrix& r);

/// Error rotation with axis z/|z| and angle |z|, z ~ N(0, sigma^2 I3).
/// sigma == 0 returns the identity; negative sigma throws.
RotationMatrix sample_error_rotation(double sigma, std::mt19937_64& rng);

/// Rotation by `angle` about the unit vector `axis` (Rodrigues).
Mat3 rodrigues(const Vec3& axis, double angle);

}  // namespace axisfit
