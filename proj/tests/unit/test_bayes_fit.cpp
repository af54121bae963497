#include <doctest.h>

#include <random>

#include "axisfit/bayes_fit.hpp"
#include "axisfit/simulation.hpp"
#include "oracles.hpp"

using namespace axisfit;

namespace {

SubjectData draw(std::uint64_t seed, int n, double sd = 0.017) {
  std::mt19937_64 rng(seed);
  return simulate_subject(AnatomicalAngles::from_degrees(12, -3, 36, 30, 20), n, MotionModel{}, sd, rng);
}

}  // namespace

TEST_CASE("prior spec") {
  const PriorSpec p = PriorSpec::standard();
  CHECK_NOTHROW(p.validate());
  const Mat5 s = p.sigma0();
  CHECK(std::sqrt(s(2, 2)) == doctest::Approx(deg_to_rad(9.0)));
  PriorSpec bad = p;
  bad.delta0(1, 0) = 0.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = p;
  bad.kappa = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK(residual_sd_from_kappa(kappa_from_residual_sd(0.02)) == doctest::Approx(0.02));
}

TEST_CASE("penalized score matches finite differences") {
  const SubjectData s = draw(31, 20);
  const PriorSpec prior = PriorSpec::standard();
  std::mt19937_64 rng(32);
  std::normal_distribution<double> d(0.0, 0.1);
  for (int k = 0; k < 10; ++k) {
    Vec5 v = prior.beta0.to_vector();
    for (int j = 0; j < 5; ++j) v[j] += d(rng);
    auto f = [&](const Eigen::VectorXd& x) { return penalized_sse(s, oracle::from_eigen(x), prior); };
    const Eigen::VectorXd fd = oracle::central_gradient(f, oracle::to_eigen(v));
    const Vec5 g = penalized_score(s, AnatomicalAngles::from_vector(v), prior);
    CHECK((g - Vec5(fd)).norm() <= 1e-6 * std::max(1.0, g.norm()));
  }
}

TEST_CASE("map estimate agrees with derivative-free minimizer") {
  const PriorSpec prior = PriorSpec::standard();
  for (std::uint64_t seed = 40; seed < 44; ++seed) {
    const SubjectData s = draw(seed, 10);
    const PosteriorResult map = fit_map(s, prior);
    REQUIRE(map.converged);
    auto f = [&](const Eigen::VectorXd& x) { return penalized_sse(s, oracle::from_eigen(x), prior); };
    const Eigen::VectorXd nm = oracle::nelder_mead(f, oracle::to_eigen(prior.beta0.to_vector()));
    CHECK((map.beta_map.to_vector() - Vec5(nm)).cwiseAbs().maxCoeff() < 1e-4);
    CHECK(map.sse <= f(nm) + 1e-12);
  }
}

namespace {

// worst relative Frobenius gap between the closed-form covariance and the
// inverse numerical hessian, Delta0 held at the standard prior
double covariance_gap(double residual_deg, std::uint64_t seed) {
  const Vec5 sds = SimConfig{}.sigma0 * residual_deg;
  const PriorSpec prior = PriorSpec::from_sds(default_angles(), sds, kappa_from_residual_sd(deg_to_rad(residual_deg)));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 5; ++k) {
    Vec5 v = prior.beta0.to_vector();
    for (int j = 0; j < 5; ++j) v[j] += sds[j] * z(rng);
    const SubjectData s =
        simulate_subject(AnatomicalAngles::wrapped(v), 10, MotionModel{}, deg_to_rad(residual_deg), rng);
    const PosteriorResult map = fit_map(s, prior);
    auto half = [&](const Eigen::VectorXd& x) { return 0.5 * penalized_sse(s, oracle::from_eigen(x), prior); };
    const Eigen::MatrixXd h =
        oracle::central_hessian(half, oracle::to_eigen(map.beta_map.to_vector()), 1e-4 * residual_deg);
    const Eigen::MatrixXd num = h.inverse() / (2.0 * prior.kappa);
    worst = std::max(worst, (Eigen::MatrixXd(map.post_cov) - num).norm() / num.norm());
  }
  return worst;
}

}  // namespace

TEST_CASE("posterior covariance is exact at zero residual") {
  // prior mean equals the truth and frames are error free
  const PriorSpec prior = PriorSpec::standard();
  std::mt19937_64 rng(50);
  const SubjectData s = simulate_subject(prior.beta0, 10, MotionModel{}, 0.0, rng);
  const PosteriorResult map = fit_map(s, prior);
  auto half = [&](const Eigen::VectorXd& x) { return 0.5 * penalized_sse(s, oracle::from_eigen(x), prior); };
  const Eigen::MatrixXd h = oracle::central_hessian(half, oracle::to_eigen(map.beta_map.to_vector()));
  const Eigen::MatrixXd num = h.inverse() / (2.0 * prior.kappa);
  CHECK((Eigen::MatrixXd(map.post_cov) - num).norm() <= 1e-5 * num.norm());
  CHECK((posterior_covariance(s, map.beta_map, prior) - map.post_cov).norm() <= 1e-14 * map.post_cov.norm());
}

TEST_CASE("covariance gap shrinks linearly with the residual sd") {
  const double coarse = covariance_gap(1.0, 50);
  const double fine = covariance_gap(0.01, 50);
  CHECK(fine < 2e-3);
  CHECK(coarse / fine == doctest::Approx(100.0).epsilon(0.5));
}

TEST_CASE("weak prior gives the maximum likelihood fit") {
  const SubjectData s = draw(60, 50);
  PriorSpec prior = PriorSpec::standard();
  prior.delta0 = Mat5::Identity() * 1e-9;
  const PosteriorResult map = fit_map(s, prior, default_angles());
  const SubjectFitResult mle = fit_subject(s);
  CHECK((map.beta_map.to_vector() - mle.beta_hat.to_vector()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("strong prior pins the mode to the prior mean") {
  const SubjectData s = draw(61, 50);
  PriorSpec prior = PriorSpec::standard();
  prior.delta0 *= 1e6;
  const PosteriorResult map = fit_map(s, prior);
  CHECK((map.beta_map.to_vector() - prior.beta0.to_vector()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("prior makes short records fittable") {
  const SubjectData s = draw(62, 6);
  const PosteriorResult map = fit_map(s, PriorSpec::standard());
  CHECK(map.converged);
  CHECK(map.post_cov.diagonal().minCoeff() > 0.0);
}
