#pragma once

// Shared penalized Gauss-Newton iteration for the unpenalized, the MAP and
// the reduced single-subject fits.

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "axisfit/frame_kernels.hpp"
#include "axisfit/subject_fit.hpp"

namespace axisfit::detail {

// (beta - center)' precision (beta - center)
struct Penalty {
  Eigen::MatrixXd precision;
  Eigen::VectorXd center;
};

struct GaussNewtonResult {
  Eigen::VectorXd params;
  int n_iter = 0;
  bool converged = false;
  bool ridge_applied = false;
  double objective = 0.0;
  NormalEquations normal;
  FrameTerms terms;
  std::vector<double> trace;
};

FrameGeometry geometry_for(const Eigen::VectorXd& params, bool reduced);

// Frame terms at params; std::nullopt when params fall outside the
// parametrization or some frame has |A1' R B2| ~ 1.
std::optional<FrameTerms> try_evaluate(const FrameBlock& frames, const Eigen::VectorXd& params, bool reduced);

double penalty_value(const Penalty* penalty, const Eigen::VectorXd& params);

// Ratio of extreme eigenvalues of a symmetric PSD matrix (inf if singular).
double eigen_condition(const Eigen::MatrixXd& sym);

GaussNewtonResult gauss_newton(const FrameBlock& frames, const Eigen::VectorXd& start, bool reduced,
                               const Penalty* penalty, const FitOptions& opts);

}  // namespace axisfit::detail
