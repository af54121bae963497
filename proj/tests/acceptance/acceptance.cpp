// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failures (capped at 1).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "axisfit/bayes_fit.hpp"
#include "axisfit/lmm.hpp"
#include "axisfit/mixed_fit.hpp"
#include "axisfit/simulation.hpp"
#include "oracles.hpp"

using namespace axisfit;

namespace {

// pinned tolerances
constexpr std::uint64_t kStudySeed = 7;
constexpr int kReplicates = 100;
constexpr double kBiasMcseMultiple = 3.0;
constexpr double kRmseTolNarrow = 0.30;
constexpr double kRmseTolWide = 0.40;
constexpr double kMcErrorMultiple = 2.0;  // "within MC error" for sign checks
constexpr double kSdBiasLimitDeg = 0.6;
constexpr double kAnchorTol = 0.01;
constexpr double kConditionFloor = 100.0;
constexpr double kGradientRelTol = 1e-6;
constexpr int kGradientPoints = 100;
constexpr double kMapTol = 1e-4;
constexpr double kHessianRelTol = 1e-3;
constexpr int kMapInstances = 20;
constexpr double kLmmClosedFormTol = 1e-8;
constexpr double kRecoveryMcseMultiple = 3.0;
constexpr double kCardanTol = 1e-10;
constexpr double kOrthoTol = 1e-12;
constexpr int kSo3Samples = 10000;
constexpr double kMleTol = 1e-8;
constexpr double kPinTol = 1e-6;

int failures = 0;

void verdict(const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

double deg(double rad) { return rad_to_deg(rad); }

SimReport study(int m, int replicates = kReplicates) {
  SimConfig c = SimConfig::table_row("n=50,M=" + std::to_string(m));
  c.replicates = replicates;
  c.seed = kStudySeed;
  return run_study(c);
}

void fixed_effects(const SimReport& r) {
  struct Ref {
    const char* name;
    double bias;  // NaN: not checked
    double rmse;
    double tol;
  };
  const Ref refs[] = {{"t1", 0.10, 1.56, kRmseTolNarrow},
                      {"t2", -0.09, 1.26, kRmseTolNarrow},
                      {"s1", -0.09, 1.70, kRmseTolNarrow},
                      {"s2", NAN, 3.10, kRmseTolWide},
                      {"gamma0", NAN, 3.27, kRmseTolWide}};
  bool pass = r.failures == 0;
  std::string detail;
  for (const auto& ref : refs) {
    const SimCell& c = r.row(ref.name).estimate;
    const double bias = deg(c.bias), mcse = deg(c.bias_mcse), rmse = deg(c.rmse);
    bool ok = std::abs(rmse / ref.rmse - 1.0) <= ref.tol;
    if (!std::isnan(ref.bias)) ok = ok && std::abs(bias - ref.bias) <= kBiasMcseMultiple * mcse;
    pass = pass && ok;
    detail += std::string(ref.name) + fmt(" bias %.2f (mcse %.2f) rmse %.2f; ", bias, mcse, rmse);
  }
  verdict("fixed effects n=50 M=30", pass, detail + fmt("failed replicates %.0f", r.failures));
}

void sd_estimators(const SimReport& r) {
  bool pass = true;
  std::string detail;
  for (const char* name : {"t1", "t2", "s1", "s2", "gamma0"}) {
    const SimCell& c = r.row(name).sd_estimate;
    const double bias = deg(c.bias), mcse = deg(c.bias_mcse);
    const bool ok = bias <= kMcErrorMultiple * mcse && std::abs(bias) < kSdBiasLimitDeg;
    pass = pass && ok;
    detail += std::string(name) + fmt(" %.2f (mcse %.2f)", bias, mcse) + (ok ? "; " : " <-; ");
  }
  verdict("sd estimators n=50 M=30", pass, detail);
}

void sd_estimators_info(const SimReport& r) {
  std::string detail;
  for (const char* name : {"t1", "t2", "s1", "s2", "gamma0"}) {
    const SimCell& c = r.row(name).sd_estimate;
    detail += std::string(name) + fmt(" %.2f (mcse %.2f); ", deg(c.bias), deg(c.bias_mcse));
  }
  std::printf("INFO sd estimator bias at %d replicates: %s\n", r.completed, detail.c_str());
}

void variance_sign(const SimReport& r) {
  bool pass = true;
  std::string detail;
  for (const char* name : {"s2", "gamma0"}) {
    const SimParameterRow& row = r.row(name);
    const bool ok = row.variance_rel_bias <= kMcErrorMultiple * row.variance_rel_bias_mcse;
    pass = pass && ok;
    detail += std::string(name) + fmt(" %.0f%% (mcse %.0f); ", row.variance_rel_bias, row.variance_rel_bias_mcse);
  }
  verdict("variance sign M=" + std::to_string(r.config.M), pass, detail);
}

void design_anchor() {
  const AnatomicalAngles b = default_angles();
  const Mat3 a = frame_tt(b.t1, b.t2).matrix();
  const Mat3 bb = frame_st(b.s1, b.s2).matrix();
  double worst = 0.0;
  for (double al = -60.0; al <= 120.0; al += 7.5) {
    for (double ph = -30.0; ph <= 60.0; ph += 7.5) {
      const double alpha = deg_to_rad(al), phi = deg_to_rad(ph);
      const Mat3 r = a * compose_xzy({alpha, b.gamma0, phi}).matrix() * bb.transpose();
      const Vec5 x = -design_vector(RotationMatrix::from_matrix(r), b);
      const Vec5 closed(0.01 * std::cos(alpha) - 0.99 * std::sin(alpha), 0.99 * std::cos(alpha),
                        0.26 * std::cos(phi) + 0.95 * std::sin(phi), -0.80 * std::cos(phi), 1.0);
      worst = std::max(worst, (x - closed).cwiseAbs().maxCoeff());
    }
  }
  verdict("design anchor", worst <= kAnchorTol, fmt("max |entry diff| %.4f over the motion grid", worst));

  std::mt19937_64 rng(kStudySeed);
  std::vector<double> conds;
  for (int k = 0; k < 30; ++k) {
    const SubjectData s = simulate_subject(b, 50, MotionModel{}, 0.017, rng);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(s.size()), 5);
    for (std::size_t i = 0; i < s.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = design_vector(s.rotations()[i], b);
    const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(x).singularValues();
    conds.push_back(sv[0] / sv[4]);
  }
  std::sort(conds.begin(), conds.end());
  verdict("condition number", conds.front() > kConditionFloor,
          fmt("30 subjects n=50: min %.1f median %.1f max %.1f", conds.front(), conds[15], conds.back()));
}

void gradients() {
  std::mt19937_64 rng(kStudySeed);
  std::normal_distribution<double> spread(0.0, deg_to_rad(10.0));
  std::uniform_real_distribution<double> sd(0.005, 0.05);
  const PriorSpec standard = PriorSpec::standard();
  double worst_profile = 0.0, worst_penalized = 0.0;
  for (int k = 0; k < kGradientPoints; ++k) {
    const SubjectData s = simulate_subject(default_angles(), 50, MotionModel{}, sd(rng), rng);
    Vec5 v = default_angles().to_vector();
    for (int j = 0; j < 5; ++j) v[j] += spread(rng);
    const AnatomicalAngles at = AnatomicalAngles::wrapped(v);
    const Eigen::VectorXd x = oracle::to_eigen(at.to_vector());
    const double kappa = kappa_from_residual_sd(0.017);
    auto ll = [&](const Eigen::VectorXd& p) { return profile_log_likelihood(s, oracle::from_eigen(p), kappa); };
    const Vec5 g = profile_score(s, at, kappa);
    worst_profile = std::max(worst_profile, (g - Vec5(oracle::central_gradient(ll, x))).norm() / g.norm());
    auto pen = [&](const Eigen::VectorXd& p) { return penalized_sse(s, oracle::from_eigen(p), standard); };
    const Vec5 gp = penalized_score(s, at, standard);
    worst_penalized = std::max(worst_penalized, (gp - Vec5(oracle::central_gradient(pen, x))).norm() / gp.norm());
  }
  verdict("profile score gradient", worst_profile <= kGradientRelTol,
          fmt("worst relative error %.2e over %.0f points", worst_profile, kGradientPoints));
  verdict("penalized score gradient", worst_penalized <= kGradientRelTol,
          fmt("worst relative error %.2e over %.0f points", worst_penalized, kGradientPoints));
}

void map_oracle() {
  std::mt19937_64 rng(kStudySeed);
  const PriorSpec prior = PriorSpec::standard();
  const Vec5 sds = SimConfig{}.sigma0;
  std::normal_distribution<double> z(0.0, 1.0);
  double worst_mode = 0.0, worst_cov = 0.0;
  for (int k = 0; k < kMapInstances; ++k) {
    Vec5 v = prior.beta0.to_vector();
    for (int j = 0; j < 5; ++j) v[j] += sds[j] * z(rng);
    const SubjectData s = simulate_subject(AnatomicalAngles::wrapped(v), 10, MotionModel{}, 0.017, rng);
    const PosteriorResult map = fit_map(s, prior);
    auto f = [&](const Eigen::VectorXd& p) { return penalized_sse(s, oracle::from_eigen(p), prior); };
    const Eigen::VectorXd nm = oracle::nelder_mead(f, oracle::to_eigen(prior.beta0.to_vector()));
    worst_mode = std::max(worst_mode, (map.beta_map.to_vector() - Vec5(nm)).cwiseAbs().maxCoeff());
    auto half = [&](const Eigen::VectorXd& p) { return 0.5 * f(p); };
    const Eigen::MatrixXd h = oracle::central_hessian(half, oracle::to_eigen(map.beta_map.to_vector()));
    const Eigen::MatrixXd num = h.inverse() / (2.0 * prior.kappa);
    worst_cov = std::max(worst_cov, (Eigen::MatrixXd(map.post_cov) - num).norm() / num.norm());
  }
  verdict("map vs derivative-free minimizer", worst_mode <= kMapTol,
          fmt("worst |diff| %.2e rad over %.0f instances n=10", worst_mode, kMapInstances));
  verdict("posterior covariance vs numerical hessian", worst_cov <= kHessianRelTol,
          fmt("worst relative Frobenius error %.2e at residual sd 1 deg", worst_cov));

  // same Delta0, residual sd scaled down
  for (double resid_deg : {0.1, 0.01}) {
    const PriorSpec tight = PriorSpec::from_sds(prior.beta0, sds * resid_deg, kappa_from_residual_sd(deg_to_rad(resid_deg)));
    double gap = 0.0;
    for (int k = 0; k < kMapInstances; ++k) {
      Vec5 v = tight.beta0.to_vector();
      for (int j = 0; j < 5; ++j) v[j] += sds[j] * resid_deg * z(rng);
      const SubjectData s =
          simulate_subject(AnatomicalAngles::wrapped(v), 10, MotionModel{}, deg_to_rad(resid_deg), rng);
      const PosteriorResult map = fit_map(s, tight);
      auto half = [&](const Eigen::VectorXd& p) { return 0.5 * penalized_sse(s, oracle::from_eigen(p), tight); };
      const Eigen::MatrixXd h =
          oracle::central_hessian(half, oracle::to_eigen(map.beta_map.to_vector()), 1e-4 * resid_deg);
      const Eigen::MatrixXd num = h.inverse() / (2.0 * tight.kappa);
      gap = std::max(gap, (Eigen::MatrixXd(map.post_cov) - num).norm() / num.norm());
    }
    std::printf("INFO posterior covariance gap at residual sd %.2f deg: %.2e\n", resid_deg, gap);
  }
}

void lmm_oracle() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(kStudySeed * 1000 + seed);
    std::normal_distribution<double> z(0.0, 1.0);
    LmmProblem p;
    p.p = 1;
    p.q = 1;
    std::vector<std::vector<double>> groups;
    for (int i = 0; i < 15; ++i) {
      LmmBlock b;
      b.x = Eigen::MatrixXd::Ones(10, 1);
      b.z = b.x;
      b.y.resize(10);
      const double u = 0.8 * z(rng);
      for (int j = 0; j < 10; ++j) b.y[j] = 1.5 + u + 0.6 * z(rng);
      groups.emplace_back(b.y.data(), b.y.data() + 10);
      p.blocks.push_back(b);
    }
    const oracle::AnovaMl ref = oracle::balanced_anova_ml(groups);
    const LmmFit fit = lmm_fit_ml(p);
    worst = std::max({worst, std::abs(fit.beta_fixed[0] - ref.mu) / std::abs(ref.mu),
                      std::abs(fit.sigma2 - ref.sigma2) / ref.sigma2,
                      std::abs(fit.theta[0] * fit.theta[0] - ref.tau2) / std::max(ref.tau2, 1e-300)});
  }
  verdict("lmm balanced closed form", worst <= kLmmClosedFormTol, fmt("worst relative error %.2e", worst));

  // local linear mixed model with design rows of the directional model
  const int reps = 200, m = 30;
  const Vec5 beta = default_angles().to_vector();
  const Vec5 sd = SimConfig{}.sigma0;
  const double sigma = 0.017;
  std::vector<Eigen::VectorXd> est;
  for (int r = 0; r < reps; ++r) {
    std::mt19937_64 rng(replicate_rng(kStudySeed, static_cast<std::uint64_t>(r)));
    std::normal_distribution<double> z(0.0, 1.0);
    LmmProblem p;
    p.p = 5;
    p.q = 5;
    for (int i = 0; i < m; ++i) {
      const SubjectData s = simulate_subject(default_angles(), 50, MotionModel{}, 0.0, rng);
      LmmBlock b;
      b.x = build_pseudo_response(s, default_angles()).x;
      b.z = b.x;
      Vec5 u;
      for (int k = 0; k < 5; ++k) u[k] = sd[k] * z(rng);
      b.y = b.x * Eigen::VectorXd(beta + u);
      for (Eigen::Index j = 0; j < b.y.size(); ++j) b.y[j] += sigma * z(rng);
      p.blocks.push_back(std::move(b));
    }
    const LmmFit fit = lmm_fit_ml(p);
    Eigen::VectorXd e(6);
    e << fit.beta_fixed, std::sqrt(fit.sigma2);
    est.push_back(e);
  }
  Eigen::VectorXd truth(6);
  truth << Eigen::VectorXd(beta), sigma;
  bool pass = true;
  std::string detail;
  const char* names[6] = {"t1", "t2", "s1", "s2", "gamma0", "sigma"};
  for (int k = 0; k < 6; ++k) {
    double mean = 0.0, sq = 0.0;
    for (const auto& e : est) mean += e[k];
    mean /= reps;
    for (const auto& e : est) sq += (e[k] - mean) * (e[k] - mean);
    const double mcse = std::sqrt(sq / (reps - 1) / reps);
    const double zscore = (mean - truth[k]) / mcse;
    pass = pass && std::abs(zscore) <= kRecoveryMcseMultiple;
    detail += std::string(names[k]) + fmt(" z %.2f; ", zscore);
  }
  verdict("lmm recovery", pass, detail + fmt("%.0f replicates M=%.0f", reps, m));
}

void so3_suite() {
  std::mt19937_64 rng(kStudySeed);
  std::uniform_real_distribution<double> wide(-kPi, kPi);
  std::uniform_real_distribution<double> half(-kHalfPi, kHalfPi);
  std::uniform_real_distribution<double> inner(-kHalfPi + 1e-4, kHalfPi - 1e-4);
  double round_trip = 0.0, ortho = 0.0;
  for (int k = 0; k < kSo3Samples; ++k) {
    const CardanAngles c{wide(rng), inner(rng), wide(rng)};
    const CardanAngles back = cardan_decompose_xzy(compose_xzy(c));
    round_trip = std::max({round_trip, std::abs(wrap_pi(back.alpha - c.alpha)), std::abs(back.gamma - c.gamma),
                           std::abs(wrap_pi(back.phi - c.phi))});
    const double p = half(rng), q = half(rng);
    for (const Mat3& m : {frame_tt(p, q).matrix(), frame_st(p, q).matrix()}) {
      ortho = std::max({ortho, RotationMatrix::orthonormality_defect(m), std::abs(m.determinant() - 1.0)});
    }
  }
  verdict("cardan round trip", round_trip <= kCardanTol, fmt("max error %.2e rad", round_trip));
  verdict("frame orthonormality", ortho <= kOrthoTol, fmt("max defect %.2e", ortho));
}

void wald_anchor() {
  const WaldResult w = wald_test(-2.89, 2.56);
  const double z2 = std::round(w.z * 100.0) / 100.0, p2 = std::round(w.p_value * 100.0) / 100.0;
  verdict("wald anchor", z2 == -1.13 && p2 == 0.26, fmt("z %.4f p %.4f", w.z, w.p_value));
}

void limits() {
  std::mt19937_64 rng(kStudySeed);
  double mle_gap = 0.0, pin_gap = 0.0;
  for (int k = 0; k < 10; ++k) {
    const SubjectData s = simulate_subject(default_angles(), 50, MotionModel{}, 0.017, rng);
    PriorSpec weak = PriorSpec::standard();
    weak.delta0 = Mat5::Identity() * 1e-9;
    const SubjectFitResult mle = fit_subject(s);
    const PosteriorResult map = fit_map(s, weak, default_angles());
    mle_gap = std::max(mle_gap, (map.beta_map.to_vector() - mle.beta_hat.to_vector()).cwiseAbs().maxCoeff());
    PriorSpec strong = PriorSpec::standard();
    strong.delta0 *= 1e6;
    pin_gap = std::max(pin_gap,
                       (fit_map(s, strong).beta_map.to_vector() - strong.beta0.to_vector()).cwiseAbs().maxCoeff());
  }
  verdict("weak prior limit", mle_gap <= kMleTol, fmt("max |map - mle| %.2e rad", mle_gap));
  verdict("strong prior limit", pin_gap <= kPinTol, fmt("max |map - prior mean| %.2e rad", pin_gap));
}

}  // namespace

int main() {
  const auto start = std::chrono::steady_clock::now();
  const SimReport m30 = study(30);
  fixed_effects(m30);
  sd_estimators(m30);
  sd_estimators_info(study(30, 10 * kReplicates));
  variance_sign(m30);
  variance_sign(study(60));
  variance_sign(study(100));
  design_anchor();
  gradients();
  map_oracle();
  lmm_oracle();
  so3_suite();
  wald_anchor();
  limits();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%d failed, %.1f s\n", failures, secs);
  return failures == 0 ? 0 : 1;
}
