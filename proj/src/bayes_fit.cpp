#include "axisfit/bayes_fit.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "gauss_newton.hpp"

namespace axisfit {

PriorSpec PriorSpec::from_sds(const AnatomicalAngles& mean, const Vec5& sds, double kappa) {
  PriorSpec prior;
  prior.beta0 = mean;
  prior.kappa = kappa;
  prior.delta0 = Mat5::Zero();
  for (int k = 0; k < 5; ++k) prior.delta0(k, k) = 1.0 / (sds[k] * std::sqrt(2.0 * kappa));
  prior.validate();
  return prior;
}

PriorSpec PriorSpec::standard() {
  const Vec5 sds = Vec5(7.0, 4.0, 9.0, 11.0, 11.0) * deg_to_rad(1.0);
  return from_sds(default_angles(), sds, kappa_from_residual_sd(deg_to_rad(1.0)));
}

Mat5 PriorSpec::sigma0() const {
  const Mat5 inv = delta0.triangularView<Eigen::Upper>().solve(Mat5::Identity());
  return inv * inv.transpose() / (2.0 * kappa);
}

void PriorSpec::validate() const {
  if (!(kappa > 0.0) || !std::isfinite(kappa)) {
    throw Error(ErrorKind::validation, "prior concentration kappa must be positive");
  }
  for (int r = 0; r < 5; ++r) {
    if (!(delta0(r, r) > 0.0) || !std::isfinite(delta0(r, r))) {
      throw Error(ErrorKind::validation, "prior factor Delta0 needs a positive diagonal");
    }
    for (int c = 0; c < r; ++c) {
      if (delta0(r, c) != 0.0) {
        throw Error(ErrorKind::validation, "prior factor Delta0 must be upper triangular");
      }
    }
  }
  if (!beta0.in_domain()) throw Error(ErrorKind::validation, "prior mean out of domain");
}

double penalized_sse(const SubjectData& data, const AnatomicalAngles& beta, const PriorSpec& prior) {
  const Vec5 d = beta.to_vector() - prior.beta0.to_vector();
  return profile_sse(data, beta) + (prior.delta0 * d).squaredNorm();
}

Vec5 penalized_score(const SubjectData& data, const AnatomicalAngles& beta, const PriorSpec& prior) {
  FrameTerms terms;
  evaluate_frames(data.frames(), make_geometry(beta), terms);
  const NormalEquations ne = accumulate_normal_equations(terms);
  // 4 sum sin(d/2) X = 2 sum r X
  return 2.0 * ne.xtr + 2.0 * prior.precision() * (beta.to_vector() - prior.beta0.to_vector());
}

Mat5 posterior_covariance(const SubjectData& data, const AnatomicalAngles& beta_map, const PriorSpec& prior) {
  FrameTerms terms;
  evaluate_frames(data.frames(), make_geometry(beta_map), terms);
  const Mat5 h = accumulate_normal_equations(terms).xtx + prior.precision();
  return h.ldlt().solve(Mat5::Identity()) / (2.0 * prior.kappa);
}

PosteriorResult fit_map(const SubjectData& data, const PriorSpec& prior, const FitOptions& opts) {
  return fit_map(data, prior, prior.beta0, opts);
}

PosteriorResult fit_map(const SubjectData& data, const PriorSpec& prior, const AnatomicalAngles& init,
                        const FitOptions& opts) {
  data.require_fittable();
  if (!init.in_domain()) throw Error(ErrorKind::domain, "initial angles out of domain");
  detail::Penalty penalty{prior.precision(), prior.beta0.to_vector()};
  auto gn = detail::gauss_newton(data.frames(), init.to_vector(), false, &penalty, opts);

  PosteriorResult res;
  const Eigen::VectorXd& q = gn.params;
  res.beta_map = AnatomicalAngles{q[0], q[1], q[2], q[3], q[4]};
  res.sse = gn.objective;
  res.residual_sse = gn.normal.rss;
  res.n_iter = gn.n_iter;
  res.converged = gn.converged;
  res.objective_trace = std::move(gn.trace);
  const Mat5 xtx = gn.normal.xtx;
  res.condition_number = std::sqrt(detail::eigen_condition(xtx));
  res.post_cov = (xtx + prior.precision()).ldlt().solve(Mat5::Identity()) / (2.0 * prior.kappa);
  const double residual_var = gn.normal.rss / static_cast<double>(data.size());
  res.kappa_hat = residual_var > 0.0 ? 1.0 / (2.0 * residual_var) : std::numeric_limits<double>::infinity();
  return res;
}

}  // namespace axisfit
