#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "axisfit/frame_kernels.hpp"
#include "axisfit/so3.hpp"

namespace axisfit {

/// Minimum frame count for any fit (must exceed the five free angles).
inline constexpr std::size_t kMinFrames = 6;

/// One subject's time-ordered rotation frames. The frame count is not
/// checked here (datasets may carry short records); fits reject n < 6.
class SubjectData {
 public:
  SubjectData() = default;
  SubjectData(std::string subject_id, std::vector<RotationMatrix> rotations, std::string group_id = {});

  const std::string& subject_id() const { return subject_id_; }
  // Empty when the subject belongs to no group.
  const std::string& group_id() const { return group_id_; }
  std::span<const RotationMatrix> rotations() const { return rotations_; }
  const FrameBlock& frames() const { return frames_; }
  std::size_t size() const { return rotations_.size(); }

  // Throws ErrorKind::too_few_frames when size() < kMinFrames.
  void require_fittable() const;

 private:
  std::string subject_id_;
  std::string group_id_;
  std::vector<RotationMatrix> rotations_;
  FrameBlock frames_;
};

/// Population means (8, -6, 42, 23, 17) degrees; the default
/// starting point and prior mean.
AnatomicalAngles default_angles();

struct FitOptions {
  double tol = 1e-10;        // sup-norm of the Gauss-Newton step, radians
  int max_iter = 200;
  int max_halvings = 10;
  double ridge_condition = 1e12;     // ridge added above this cond(X'X)
  double singular_condition = 1e16;  // IllConditionedError above this
  bool grid_init = false;            // coarse (t1, s1) grid before iterating
  bool record_trace = false;         // keep the objective after every step
};

struct SubjectFitResult {
  AnatomicalAngles beta_hat;
  double kappa_hat = 0.0;    // 1 / radians^2
  double residual_sd = 0.0;  // sqrt(1 / (2 kappa_hat)), radians
  Eigen::MatrixXd cov;       // 5x5 (4x4 for the reduced model), radians^2
  int n_iter = 0;
  bool converged = false;
  double condition_number = 1.0;  // sigma_max / sigma_min of the n x p design
  bool ridge_applied = false;
  double sse = 0.0;
  std::size_t n_frames = 0;
  double lag1_autocorrelation = 0.0;
  bool reduced = false;
  std::vector<double> objective_trace;
};

/// theta_i^z = -asin(A1' R_i B2) for every frame.
std::vector<double> residual_angles(const SubjectData& data, const AnatomicalAngles& beta);

/// The row of partial derivatives of 2 sin((theta^z - gamma0)/2) with
/// respect to (t1, t2, s1, s2, gamma0). Throws IllConditionedError when
/// |A1' R B2| >= 1 - 1e-9.
Vec5 design_vector(const RotationMatrix& r, const AnatomicalAngles& beta);

/// Reduced model row: derivatives of 2 sin((theta^z - gamma0(A1, B2))/2)
/// with gamma0(A1, B2) = -asin(A1' B2). Throws ErrorKind::degenerate when
/// cos(gamma0) ~ 0 and IllConditionedError when |A1' R B2| ~ 1.
Eigen::Vector4d design_vector_reduced(const RotationMatrix& r, const Eigen::Vector4d& beta4);

/// gamma0 implied by the reduced model.
double reduced_gamma0(double t1, double t2, double s1, double s2);

/// sum_i 4 sin^2((theta_i^z - gamma0)/2).
double profile_sse(const SubjectData& data, const AnatomicalAngles& beta);

/// log L_p up to the normalizing constant: -kappa * SSE + 3 n kappa.
double profile_log_likelihood(const SubjectData& data, const AnatomicalAngles& beta, double kappa);

/// Analytic score -4 kappa sum sin((theta^z - gamma0)/2) X_i.
Vec5 profile_score(const SubjectData& data, const AnatomicalAngles& beta, double kappa);

/// Unpenalized maximum likelihood fit of the five angles.
SubjectFitResult fit_subject(const SubjectData& data, const AnatomicalAngles& init = default_angles(),
                             const FitOptions& opts = {});

/// Four-angle fit with gamma0 tied to the axes; beta_hat.gamma0 is derived.
SubjectFitResult fit_subject_reduced(const SubjectData& data, const Eigen::Vector4d& init,
                                     const FitOptions& opts = {});

/// Lag-1 autocorrelation of a residual series (0 for fewer than 3 points).
double lag1_autocorrelation(std::span<const double> series);

}  // namespace axisfit
