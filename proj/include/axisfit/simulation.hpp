#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "axisfit/mixed_fit.hpp"

namespace axisfit {

/// Per-frame motion angles about the two axes, i.i.d. normal.
struct MotionModel {
  double alpha_mean = deg_to_rad(38.0);
  double alpha_sd = deg_to_rad(12.0);
  double phi_mean = deg_to_rad(14.0);
  double phi_sd = deg_to_rad(10.5);
};

struct SimConfig {
  int M = 30;
  int n = 50;
  int replicates = 100;
  AnatomicalAngles beta0 = default_angles();
  Vec5 sigma0 = Vec5(7.0, 4.0, 9.0, 11.0, 11.0) * deg_to_rad(1.0);
  double error_sd = 0.017;
  MotionModel motion;
  std::uint64_t seed = 1;
  MixedAlgorithm algorithm = MixedAlgorithm::plme;
  LmmMethod lmm_method = LmmMethod::ml;
  int threads = 0;

  // Two-group generator: the last round(M * group_fraction) subjects get
  // group "B" and their mean shifted by group_shift.
  double group_fraction = 0.0;
  Vec5 group_shift = Vec5::Zero();
  PopulationModel model;

  // When set, gamma0 is tied to the axes plus gamma0_offset instead of drawn.
  bool constrained_gamma0 = false;
  double gamma0_offset = 0.0;

  // Throws ErrorKind::validation unless M >= 2, n >= 6, replicates >= 1, all
  // sds > 0 (error_sd >= 0).
  void validate() const;
  // Parses "n=50,M=30".
  static SimConfig table_row(const std::string& spec);
};

/// Frames R_j = A R(alpha_j, x) R(gamma0, z) R(phi_j, y) B' E_j.
SubjectData simulate_subject(const AnatomicalAngles& beta, int n, const MotionModel& motion, double error_sd,
                             std::mt19937_64& rng, const std::string& subject_id = "s",
                             const std::string& group_id = "");

struct SimulatedPopulation {
  std::vector<SubjectData> subjects;
  std::vector<AnatomicalAngles> true_angles;
};

/// One synthetic data set drawn under config (subject angles, motion, errors).
SimulatedPopulation simulate_population(const SimConfig& config, std::mt19937_64& rng);

/// Deterministic generator for replicate `rep` of a study seeded with `seed`.
std::mt19937_64 replicate_rng(std::uint64_t seed, std::uint64_t rep);

struct SimCell {
  double bias = 0.0;
  double rmse = 0.0;
  double bias_mcse = 0.0;
  double rmse_mcse = 0.0;
  double empirical_variance = 0.0;
};

struct SimParameterRow {
  std::string name;
  SimCell estimate;               // fixed effect, radians
  double variance_rel_bias = 0.0;  // percent: mean(se^2) / var(estimate) - 1
  double variance_rel_bias_mcse = 0.0;
  SimCell sd_estimate;            // random-effect sd, radians
};

struct SimReport {
  SimConfig config;
  std::vector<SimParameterRow> rows;  // t1, t2, s1, s2, gamma0
  int completed = 0;
  int failures = 0;
  int not_converged = 0;  // completed, outer loop hit max_outer
  double failure_rate = 0.0;
  double mean_residual_sd_deg = 0.0;
  double median_condition_number = 0.0;
  double runtime_seconds = 0.0;
  // Per replicate: fixed effects, se, sds (radians), in completion order.
  std::vector<Eigen::VectorXd> estimates;
  std::vector<Eigen::VectorXd> standard_errors;
  std::vector<Vec5> sd_estimates;

  const SimParameterRow& row(const std::string& name) const;
};

/// Runs config.replicates independent end-to-end population fits.
SimReport run_study(const SimConfig& config);

/// Bias/RMSE summary of estimates against a known value.
SimCell summarize(const std::vector<double>& estimates, double truth);

}  // namespace axisfit
