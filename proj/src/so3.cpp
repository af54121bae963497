#include "axisfit/so3.hpp"

#include <cmath>
#include <sstream>

namespace axisfit {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::domain: return "domain";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::ill_conditioned: return "ill-conditioned";
    case ErrorKind::parse: return "parse";
    case ErrorKind::validation: return "validation";
    case ErrorKind::too_few_frames: return "too-few-frames";
    case ErrorKind::convergence: return "convergence";
    case ErrorKind::usage: return "usage";
  }
  return "unknown";
}

namespace {

constexpr double kAcceptDefect = 1e-12;
constexpr double kRepairDefect = 1e-6;

double tan_checked(double angle, const char* name) {
  if (!std::isfinite(angle) || std::abs(angle) > kHalfPi - kTanGuard) {
    std::ostringstream os;
    os << name << " = " << angle << " rad is within " << kTanGuard
       << " of the tan singularity at +-pi/2";
    throw Error(ErrorKind::domain, os.str());
  }
  return std::tan(angle);
}

void check_inclination(double angle, const char* name) {
  if (!std::isfinite(angle) || std::abs(angle) > kHalfPi) {
    std::ostringstream os;
    os << name << " = " << angle << " rad lies outside [-pi/2, pi/2]";
    throw Error(ErrorKind::domain, os.str());
  }
}

}  // namespace

double RotationMatrix::orthonormality_defect(const Mat3& m) {
  return (m.transpose() * m - Mat3::Identity()).norm();
}

RotationMatrix RotationMatrix::from_matrix(const Mat3& m) {
  if (!m.allFinite()) {
    throw Error(ErrorKind::validation, "rotation matrix has non-finite entries");
  }
  const double defect = orthonormality_defect(m);
  if (defect > kRepairDefect) {
    std::ostringstream os;
    os << "matrix is not orthonormal (||M^T M - I||_F = " << defect << ")";
    throw Error(ErrorKind::validation, os.str());
  }
  if (m.determinant() < 0.0) {
    throw Error(ErrorKind::validation, "matrix is a reflection (det = -1)");
  }
  if (defect <= kAcceptDefect) return RotationMatrix(m, Trusted{});

  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 polar = svd.matrixU() * svd.matrixV().transpose();
  return RotationMatrix(polar, Trusted{});
}

double wrap_half_pi(double angle) {
  return angle - kPi * std::floor((angle + kHalfPi) / kPi);
}

double wrap_pi(double angle) {
  return angle - 2.0 * kPi * std::floor((angle + kPi) / (2.0 * kPi));
}

AnatomicalAngles AnatomicalAngles::from_vector(const Vec5& v) {
  AnatomicalAngles a{v[0], v[1], v[2], v[3], v[4]};
  if (!a.in_domain()) {
    std::ostringstream os;
    os << "anatomical angles out of domain: (" << v.transpose() << ")";
    throw Error(ErrorKind::domain, os.str());
  }
  return a;
}

AnatomicalAngles AnatomicalAngles::wrapped(const Vec5& v) {
  AnatomicalAngles a{wrap_half_pi(v[0]), wrap_half_pi(v[1]), wrap_half_pi(v[2]),
                     wrap_half_pi(v[3]), wrap_half_pi(v[4])};
  return a;
}

bool AnatomicalAngles::in_domain() const {
  auto half_open = [](double x) { return std::isfinite(x) && x >= -kHalfPi && x < kHalfPi; };
  return half_open(t1) && half_open(t2) && half_open(s1) && half_open(s2) &&
         std::isfinite(gamma0) && gamma0 > -kHalfPi && gamma0 < kHalfPi;
}

Vec3 unit_vector_tt(double t1, double t2) {
  check_inclination(t1, "t1");
  const double tan2 = tan_checked(t2, "t2");
  const double c1 = std::cos(t1);
  const double d = std::sqrt(1.0 + c1 * c1 * tan2 * tan2);
  return Vec3(c1, c1 * tan2, -std::sin(t1)) / d;
}

Vec3 unit_vector_st(double s1, double s2) {
  check_inclination(s1, "s1");
  const double tan2 = tan_checked(s2, "s2");
  const double c1 = std::cos(s1);
  const double d = std::sqrt(1.0 + c1 * c1 * tan2 * tan2);
  return Vec3(-c1 * tan2, c1, std::sin(s1)) / d;
}

RotationMatrix frame_tt(double t1, double t2) {
  check_inclination(t1, "t1");
  const double tn = tan_checked(t2, "t2");
  const double c = std::cos(t1), s = std::sin(t1);
  const double d = std::sqrt(1.0 + c * c * tn * tn);
  Mat3 a;
  a << c / d, -c * c * tn / d, s,
       c * tn / d, 1.0 / d, 0.0,
       -s / d, s * c * tn / d, c;
  return RotationMatrix::from_matrix(a);
}

RotationMatrix frame_st(double s1, double s2) {
  check_inclination(s1, "s1");
  const double tn = tan_checked(s2, "s2");
  const double c = std::cos(s1), s = std::sin(s1);
  const double d = std::sqrt(1.0 + c * c * tn * tn);
  Mat3 b;
  b << 1.0 / d, -c * tn / d, 0.0,
       c * c * tn / d, c / d, -s,
       s * c * tn / d, s / d, c;
  return RotationMatrix::from_matrix(b);
}

AxisPartials tt_partials(double t1, double t2) {
  const Mat3 a = frame_tt(t1, t2).matrix();
  const double tn = std::tan(t2);
  const double c = std::cos(t1), s = std::sin(t1);
  const double d2 = 1.0 + c * c * tn * tn;
  const double d = std::sqrt(d2);
  return {-(s * tn / d2) * a.col(1) - (1.0 / d) * a.col(2),
          (c * (1.0 + tn * tn) / d2) * a.col(1)};
}

AxisPartials st_partials(double s1, double s2) {
  const Mat3 b = frame_st(s1, s2).matrix();
  const double tn = std::tan(s2);
  const double c = std::cos(s1), s = std::sin(s1);
  const double d2 = 1.0 + c * c * tn * tn;
  const double d = std::sqrt(d2);
  return {(s * tn / d2) * b.col(0) + (1.0 / d) * b.col(2),
          -(c * (1.0 + tn * tn) / d2) * b.col(0)};
}

RotationMatrix axis_rotation(double angle, Axis axis) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 m;
  switch (axis) {
    case Axis::x:
      m << 1, 0, 0,
           0, c, -s,
           0, s, c;
      break;
    case Axis::z:
      m << c, -s, 0,
           s, c, 0,
           0, 0, 1;
      break;
    case Axis::y:
      m << c, 0, s,
           0, 1, 0,
           -s, 0, c;
      break;
  }
  return RotationMatrix::from_matrix(m);
}

RotationMatrix compose_xzy(const CardanAngles& angles) {
  return axis_rotation(angles.alpha, Axis::x) * axis_rotation(angles.gamma, Axis::z) *
         axis_rotation(angles.phi, Axis::y);
}

CardanAngles cardan_decompose_xzy(const RotationMatrix& r) {
  const double sin_gamma = -r(0, 1);
  if (std::abs(sin_gamma) >= 1.0 - 1e-9) {
    throw Error(ErrorKind::degenerate, "Cardan X-Z-Y decomposition at gimbal lock (|sin gamma| ~ 1)");
  }
  CardanAngles out;
  out.gamma = std::asin(sin_gamma);
  out.alpha = wrap_pi(std::atan2(r(2, 1), r(1, 1)));
  out.phi = wrap_pi(std::atan2(r(0, 2), r(0, 0)));
  return out;
}

Mat3 rodrigues(const Vec3& axis, double angle) {
  Mat3 k;
  k << 0, -axis.z(), axis.y(),
       axis.z(), 0, -axis.x(),
       -axis.y(), axis.x(), 0;
  return Mat3::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * k * k;
}

RotationMatrix sample_error_rotation(double sigma, std::mt19937_64& rng) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorKind::domain, "error standard deviation must be >= 0");
  }
  if (sigma == 0.0) return RotationMatrix::identity();
  std::normal_distribution<double> normal(0.0, sigma);
  Vec3 z(normal(rng), normal(rng), normal(rng));
  const double angle = z.norm();
  if (angle == 0.0) return RotationMatrix::identity();
  return RotationMatrix::from_matrix(rodrigues(z / angle, angle));
}

}  // namespace axisfit
