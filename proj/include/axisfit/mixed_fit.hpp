#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "axisfit/bayes_fit.hpp"
#include "axisfit/lmm.hpp"

namespace axisfit {

enum class GroupDesign {
  one_sample,
  two_sample_s1_s2,  // group shifts on s1 and s2 (7 fixed effects)
  two_sample_s1,     // shift on s1 only (6)
  two_sample_none,   // two groups, no shift (5)
};

const char* to_string(GroupDesign design);
// Accepts "one-sample", "two-sample-s1-s2", "two-sample-s1", "two-sample-none".
GroupDesign parse_group_design(const std::string& name);

struct PopulationModel {
  GroupDesign design = GroupDesign::one_sample;
  // Group whose subjects carry no shift; empty picks the first group seen.
  std::string reference_group;

  int n_fixed() const;
  std::vector<std::string> fixed_names() const;  // t1 .. gamma0 then ds1, ds2
  bool two_sample() const { return design != GroupDesign::one_sample; }
};

enum class MixedAlgorithm { plme, lme };

const char* to_string(MixedAlgorithm algorithm);
MixedAlgorithm parse_mixed_algorithm(const std::string& name);

struct MixedOptions {
  MixedAlgorithm algorithm = MixedAlgorithm::plme;
  int max_outer = 50;
  double fixed_tol = 1e-6;     // max |change| of fixed effects, radians
  double loglik_rtol = 1e-8;   // relative change of the LMM log-likelihood
  LmmOptions lmm;
  FitOptions subject;
  int threads = 0;             // 0: hardware concurrency
  bool init_kappa_from_data = true;
  // LME only: linearization points for the first iteration (defaults to MAP
  // fits at the initial prior).
  std::vector<AnatomicalAngles> start_effects;
};

struct SubjectWarning {
  std::string subject_id;
  std::string message;
};

struct PopulationFit {
  Eigen::VectorXd beta0_hat;  // radians, PopulationModel::fixed_names() order
  Eigen::VectorXd beta0_se;
  Eigen::MatrixXd beta0_cov;
  std::vector<std::string> fixed_names;
  Vec5 sigma0_hat = Vec5::Zero();  // random-effect sds, radians
  std::vector<bool> sigma0_at_floor;
  double kappa_hat = 0.0;
  double residual_sd_deg = 0.0;
  std::vector<std::string> subject_ids;
  std::vector<std::string> group_ids;
  std::vector<AnatomicalAngles> subject_effects;
  std::vector<SubjectWarning> warnings;  // excluded subjects
  MixedAlgorithm algorithm = MixedAlgorithm::plme;
  GroupDesign design = GroupDesign::one_sample;
  int n_outer_iter = 0;
  bool converged = false;
  double marginal_loglik = 0.0;   // Laplace form of the marginal likelihood
  double lmm_loglik = 0.0;        // last local LMM
  LmmMethod lmm_method = LmmMethod::ml;
  std::vector<double> fixed_update_trace;  // max |change| per outer iteration
  double median_condition_number = 0.0;

  // Prior (mean of the given group, Delta0, kappa) at the estimates.
  PriorSpec prior_for_group(bool shifted) const;
};

/// Pseudo-data of the local linear model at beta_hat: X_i stacked design
/// rows and y_ij = X_ij' beta_hat - 2 sin((theta_ij - gamma0)/2).
struct PseudoResponse {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};
PseudoResponse build_pseudo_response(const SubjectData& data, const AnatomicalAngles& beta_hat);

PopulationFit fit_population_plme(const std::vector<SubjectData>& subjects, const PriorSpec& init,
                                  const PopulationModel& model = {}, MixedOptions opts = {});
PopulationFit fit_population_lme(const std::vector<SubjectData>& subjects, const PriorSpec& init,
                                 const PopulationModel& model = {}, MixedOptions opts = {});
// Dispatches on opts.algorithm.
PopulationFit fit_population(const std::vector<SubjectData>& subjects, const PriorSpec& init,
                             const PopulationModel& model = {}, const MixedOptions& opts = {});

/// Laplace evaluation of the marginal log-likelihood of the directional model
/// at a population state; runs one MAP fit per subject. The group-shifted
/// prior mean is used for subjects with shifted[i] set.
double marginal_log_likelihood(const std::vector<SubjectData>& subjects, const std::vector<bool>& shifted,
                               const PriorSpec& reference, const PriorSpec& shifted_prior,
                               const FitOptions& opts = {});

struct WaldResult {
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p_value = 1.0;
};

WaldResult wald_test(double estimate, double se);
// By fixed-effect name ("ds1", "s2", ...) or index; throws ErrorKind::usage
// when absent.
WaldResult wald_test(const PopulationFit& fit, const std::string& name);
WaldResult wald_test(const PopulationFit& fit, int index);
// Linear contrast c' beta0_hat.
WaldResult wald_test(const PopulationFit& fit, const Eigen::VectorXd& contrast);

/// gamma0_hat + asin(A1' B2) at the fitted axes, degrees.
double flexibility_statistic(const SubjectFitResult& fit);
double flexibility_statistic(const AnatomicalAngles& beta);

}  // namespace axisfit
