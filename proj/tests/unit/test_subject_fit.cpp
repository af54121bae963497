#include <doctest.h>

#include <random>

#include "axisfit/simulation.hpp"
#include "axisfit/subject_fit.hpp"
#include "oracles.hpp"

using namespace axisfit;

namespace {

AnatomicalAngles random_angles(std::mt19937_64& rng) {
  std::normal_distribution<double> d(0.0, deg_to_rad(8.0));
  const Vec5 v = default_angles().to_vector();
  return AnatomicalAngles::from_degrees(rad_to_deg(v[0] + d(rng)), rad_to_deg(v[1] + d(rng)),
                                        rad_to_deg(v[2] + d(rng)), rad_to_deg(v[3] + d(rng)),
                                        rad_to_deg(v[4] + d(rng)));
}

}  // namespace

TEST_CASE("design vector equals derivative of the residual") {
  std::mt19937_64 rng(21);
  const SubjectData s = simulate_subject(default_angles(), 20, MotionModel{}, 0.017, rng);
  for (int k = 0; k < 20; ++k) {
    const AnatomicalAngles b = random_angles(rng);
    const RotationMatrix& r = s.rotations()[k];
    auto resid = [&](const Eigen::VectorXd& v) {
      const AnatomicalAngles a = oracle::from_eigen(v);
      const double theta = -std::asin(unit_vector_tt(a.t1, a.t2).dot(r.matrix() * unit_vector_st(a.s1, a.s2)));
      return 2.0 * std::sin((theta - a.gamma0) / 2.0);
    };
    const Eigen::VectorXd fd = oracle::central_gradient(resid, oracle::to_eigen(b.to_vector()));
    const Vec5 x = design_vector(r, b);
    CHECK((x - Vec5(fd)).norm() < 1e-8);
  }
}

TEST_CASE("reduced design vector") {
  std::mt19937_64 rng(22);
  const SubjectData s = simulate_subject(default_angles(), 10, MotionModel{}, 0.017, rng);
  const Eigen::Vector4d b4(0.1, -0.1, 0.7, 0.4);
  const RotationMatrix& r = s.rotations()[3];
  auto resid = [&](const Eigen::VectorXd& v) {
    const double g0 = reduced_gamma0(v[0], v[1], v[2], v[3]);
    const double theta = -std::asin(unit_vector_tt(v[0], v[1]).dot(r.matrix() * unit_vector_st(v[2], v[3])));
    return 2.0 * std::sin((theta - g0) / 2.0);
  };
  const Eigen::VectorXd fd = oracle::central_gradient(resid, Eigen::VectorXd(b4));
  CHECK((design_vector_reduced(r, b4) - Eigen::Vector4d(fd)).norm() < 1e-8);
}

TEST_CASE("profile score is the gradient of the profile log-likelihood") {
  std::mt19937_64 rng(23);
  const SubjectData s = simulate_subject(default_angles(), 50, MotionModel{}, 0.017, rng);
  for (int k = 0; k < 10; ++k) {
    const AnatomicalAngles b = random_angles(rng);
    const double kappa = 1500.0;
    auto ll = [&](const Eigen::VectorXd& v) { return profile_log_likelihood(s, oracle::from_eigen(v), kappa); };
    const Eigen::VectorXd fd = oracle::central_gradient(ll, oracle::to_eigen(b.to_vector()));
    const Vec5 g = profile_score(s, b, kappa);
    CHECK((g - Vec5(fd)).norm() <= 1e-6 * std::max(1.0, g.norm()));
  }
}

TEST_CASE("error-free frames give the exact angles") {
  std::mt19937_64 rng(24);
  const AnatomicalAngles truth = AnatomicalAngles::from_degrees(10, -4, 38, 25, 14);
  const SubjectData s = simulate_subject(truth, 30, MotionModel{}, 0.0, rng);
  const SubjectFitResult fit = fit_subject(s);
  CHECK(fit.converged);
  CHECK((fit.beta_hat.to_vector() - truth.to_vector()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(fit.sse < 1e-18);
}

TEST_CASE("residual sd and identifiability diagnostic") {
  std::mt19937_64 rng(25);
  const SubjectData s = simulate_subject(default_angles(), 2000, MotionModel{}, 0.017, rng);
  const SubjectFitResult fit = fit_subject(s);
  CHECK(fit.converged);
  // per-angle noise sd of the z residual is sigma
  CHECK(rad_to_deg(fit.residual_sd) == doctest::Approx(rad_to_deg(0.017)).epsilon(0.05));
  CHECK(fit.condition_number > 100.0);
  CHECK(fit.cov.rows() == 5);
  CHECK(std::abs(fit.lag1_autocorrelation) < 0.1);
}

TEST_CASE("reduced model fits four angles") {
  std::mt19937_64 rng(26);
  AnatomicalAngles truth = AnatomicalAngles::from_degrees(8, -6, 42, 23, 0);
  truth.gamma0 = reduced_gamma0(truth.t1, truth.t2, truth.s1, truth.s2);
  const SubjectData s = simulate_subject(truth, 40, MotionModel{}, 0.0, rng);
  const SubjectFitResult fit = fit_subject_reduced(s, Eigen::Vector4d(0.1, -0.1, 0.7, 0.4));
  CHECK(fit.reduced);
  CHECK(fit.cov.rows() == 4);
  CHECK((fit.beta_hat.to_vector() - truth.to_vector()).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(flexibility_statistic(fit) == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
}

TEST_CASE("too few frames") {
  std::mt19937_64 rng(27);
  const SubjectData s = simulate_subject(default_angles(), 5, MotionModel{}, 0.017, rng);
  try {
    fit_subject(s);
    FAIL("expected too_few_frames");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::too_few_frames);
  }
}

TEST_CASE("objective trace is non-increasing") {
  std::mt19937_64 rng(28);
  const SubjectData s = simulate_subject(default_angles(), 50, MotionModel{}, 0.017, rng);
  FitOptions opts;
  opts.record_trace = true;
  const SubjectFitResult fit = fit_subject(s, AnatomicalAngles::from_degrees(0, 0, 30, 10, 10), opts);
  REQUIRE(fit.objective_trace.size() >= 2);
  for (std::size_t k = 1; k < fit.objective_trace.size(); ++k) {
    CHECK(fit.objective_trace[k] <= fit.objective_trace[k - 1] * (1.0 + 1e-12) + 1e-300);
  }
}

TEST_CASE("lag-1 autocorrelation") {
  const std::vector<double> alt = {1, -1, 1, -1, 1, -1, 1, -1};
  CHECK(lag1_autocorrelation(alt) < -0.8);
  CHECK(lag1_autocorrelation(std::vector<double>{1.0, 2.0}) == 0.0);
}
