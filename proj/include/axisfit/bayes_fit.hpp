#pragma once

#include "axisfit/subject_fit.hpp"

namespace axisfit {

/// Gaussian prior N(beta0, Sigma0) on the five angles with
/// Sigma0 = Delta0^-1 Delta0^-T / (2 kappa).
struct PriorSpec {
  AnatomicalAngles beta0;
  Mat5 delta0 = Mat5::Identity();  // upper triangular, positive diagonal
  double kappa = 1.0;              // 1 / radians^2

  /// Diagonal prior from per-angle standard deviations (radians).
  static PriorSpec from_sds(const AnatomicalAngles& mean, const Vec5& sds, double kappa);
  /// Default prior: means (8, -6, 42, 23, 17) deg, sds (7, 4, 9, 11, 11) deg,
  /// residual sd 1 deg.
  static PriorSpec standard();

  Mat5 precision() const { return delta0.transpose() * delta0; }  // Delta0' Delta0
  Mat5 sigma0() const;
  // Throws ErrorKind::validation if Delta0 is not upper triangular with a
  // positive diagonal or kappa <= 0.
  void validate() const;
};

/// Residual sd (radians) <-> concentration.
inline double kappa_from_residual_sd(double sd) { return 1.0 / (2.0 * sd * sd); }
inline double residual_sd_from_kappa(double kappa) { return std::sqrt(1.0 / (2.0 * kappa)); }

struct PosteriorResult {
  AnatomicalAngles beta_map;
  Mat5 post_cov = Mat5::Zero();  // radians^2
  double sse = 0.0;              // penalized objective at beta_map
  double residual_sse = 0.0;     // sum of squared residuals only
  double kappa_hat = 0.0;        // re-estimated from residuals, for reporting
  double condition_number = 1.0;
  int n_iter = 0;
  bool converged = false;
  std::vector<double> objective_trace;
};

/// sum 4 sin^2((theta^z - gamma0)/2) + (beta - beta0)' Delta0' Delta0 (beta - beta0)
double penalized_sse(const SubjectData& data, const AnatomicalAngles& beta, const PriorSpec& prior);

/// Gradient of penalized_sse: 4 sum sin(.) X_i + 2 Delta0' Delta0 (beta - beta0).
Vec5 penalized_score(const SubjectData& data, const AnatomicalAngles& beta, const PriorSpec& prior);

/// Posterior mode (MAP). Starts at prior.beta0 unless `init` is given.
PosteriorResult fit_map(const SubjectData& data, const PriorSpec& prior, const FitOptions& opts = {});
PosteriorResult fit_map(const SubjectData& data, const PriorSpec& prior, const AnatomicalAngles& init,
                        const FitOptions& opts = {});

/// (sum X X' + Delta0' Delta0)^-1 / (2 kappa) at beta_map. This is also the
/// estimate of the prediction-error covariance of beta_map for the true
/// subject angles.
Mat5 posterior_covariance(const SubjectData& data, const AnatomicalAngles& beta_map, const PriorSpec& prior);

}  // namespace axisfit
