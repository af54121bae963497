#pragma once

// Gaussian linear mixed model with block-diagonal random effects,
//
//   y_i = X_i beta + Z_i b_i + e_i,  b_i ~ N(0, sigma^2 L L'),  e_i ~ N(0, sigma^2 I),
//
// fitted by maximizing the profiled marginal log-likelihood over the
// relative factor L. For fixed L, beta and sigma^2 have closed forms (GLS);
// every per-subject quantity goes through the q x q matrix
// M_i = I + L' Z_i' Z_i L, never the n_i x n_i covariance V_i = I + Z_i L L' Z_i'.

#include <vector>

#include <Eigen/Dense>

namespace axisfit {

struct LmmBlock {
  Eigen::MatrixXd x;  // n_i x p
  Eigen::MatrixXd z;  // n_i x q
  Eigen::VectorXd y;  // n_i
};

struct LmmProblem {
  std::vector<LmmBlock> blocks;
  int p = 0;
  int q = 0;

  std::size_t n_obs() const;
  // Throws ErrorKind::validation on shape mismatches, non-finite entries or
  // sum n_i <= p + q.
  void validate() const;
};

enum class LmmMethod { ml, reml };

enum class RandomEffectsStructure {
  diagonal,
  // Experimental: full L. Off-diagonal estimates from this path are known
  // to be unreliable for ill-conditioned designs; not used by default.
  unstructured,
};

struct LmmOptions {
  LmmMethod method = LmmMethod::ml;
  RandomEffectsStructure structure = RandomEffectsStructure::diagonal;
  double grad_tol = 1e-10;  // on d loglik / d log(sd), relative to max(1, |loglik|)
  int max_iter = 500;
  double relative_floor = 1e-8;  // lower bound on random-effect sd / sigma
};

struct LmmFit {
  Eigen::VectorXd beta_fixed;
  Eigen::VectorXd se_fixed;
  Eigen::MatrixXd cov_fixed;
  double sigma2 = 0.0;
  Eigen::VectorXd theta;          // random-effect sds
  Eigen::MatrixXd sigma_random;   // sigma^2 L L'
  Eigen::MatrixXd relative_factor;  // L
  std::vector<Eigen::VectorXd> blups;
  std::vector<bool> at_boundary;
  double loglik = 0.0;
  int n_iter = 0;
  bool converged = false;
  LmmMethod method = LmmMethod::ml;
  RandomEffectsStructure structure = RandomEffectsStructure::diagonal;
  std::vector<double> loglik_trace;
};

/// Maximum likelihood (or REML, per opts) fit. `init_theta`, when non-empty,
/// gives starting random-effect sds in the units of y.
LmmFit lmm_fit_ml(const LmmProblem& problem, const Eigen::VectorXd& init_theta = {}, const LmmOptions& opts = {});

/// BLUPs b_i = sigma^-2 Sigma_b Z_i' V_i^-1 (y_i - X_i beta) at the fit.
std::vector<Eigen::VectorXd> lmm_posterior_modes(const LmmFit& fit, const LmmProblem& problem);

/// Marginal Gaussian log-likelihood at arbitrary (beta, sigma^2, Sigma_b),
/// evaluated through the q x q inner form.
double lmm_loglik(const LmmProblem& problem, const Eigen::VectorXd& beta, double sigma2,
                  const Eigen::MatrixXd& sigma_random);

}  // namespace axisfit
