#include "axisfit/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <sstream>

#include "parallel.hpp"

namespace axisfit {

namespace {

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

struct ReplicateOutcome {
  bool ok = false;
  bool converged = false;
  Eigen::VectorXd estimate;
  Eigen::VectorXd se;
  Vec5 sds = Vec5::Zero();
  double residual_sd_deg = 0.0;
  double condition = 0.0;
};

}  // namespace

void SimConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::validation, "simulation config: " + what); };
  if (M < 2) fail("M must be >= 2");
  if (n < static_cast<int>(kMinFrames)) fail("n must be >= 6");
  if (replicates < 1) fail("replicates must be >= 1");
  if (!(sigma0.array() > 0.0).all()) fail("sigma0 entries must be > 0");
  if (!(error_sd >= 0.0) || !std::isfinite(error_sd)) fail("error_sd must be >= 0");
  if (!(motion.alpha_sd > 0.0) || !(motion.phi_sd > 0.0)) fail("motion sds must be > 0");
  if (!beta0.in_domain()) fail("beta0 out of domain");
  if (group_fraction < 0.0 || group_fraction > 1.0) fail("group_fraction must lie in [0, 1]");
}

SimConfig SimConfig::table_row(const std::string& spec) {
  SimConfig cfg;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::usage, "table row expects key=value pairs: '" + spec + "'");
    const std::string key = item.substr(0, eq);
    int value = 0;
    try {
      std::size_t used = 0;
      value = std::stoi(item.substr(eq + 1), &used);
      if (used != item.size() - eq - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorKind::usage, "table row value is not an integer: '" + item + "'");
    }
    if (key == "n") {
      cfg.n = value;
    } else if (key == "M" || key == "m") {
      cfg.M = value;
    } else {
      throw Error(ErrorKind::usage, "table row key must be n or M: '" + key + "'");
    }
  }
  return cfg;
}

SubjectData simulate_subject(const AnatomicalAngles& beta, int n, const MotionModel& motion, double error_sd,
                             std::mt19937_64& rng, const std::string& subject_id, const std::string& group_id) {
  const RotationMatrix a = frame_tt(beta.t1, beta.t2);
  const RotationMatrix bt = frame_st(beta.s1, beta.s2).transpose();
  const RotationMatrix rz = axis_rotation(beta.gamma0, Axis::z);
  std::normal_distribution<double> alpha(motion.alpha_mean, motion.alpha_sd);
  std::normal_distribution<double> phi(motion.phi_mean, motion.phi_sd);
  std::vector<RotationMatrix> frames;
  frames.reserve(static_cast<std::size_t>(std::max(n, 0)));
  for (int j = 0; j < n; ++j) {
    const double aj = alpha(rng);
    const double pj = phi(rng);
    const Mat3 psi = a.matrix() * axis_rotation(aj, Axis::x).matrix() * rz.matrix() *
                     axis_rotation(pj, Axis::y).matrix() * bt.matrix();
    const RotationMatrix e = sample_error_rotation(error_sd, rng);
    frames.push_back(RotationMatrix::from_matrix(psi * e.matrix()));
  }
  return SubjectData(subject_id, std::move(frames), group_id);
}

SimulatedPopulation simulate_population(const SimConfig& config, std::mt19937_64& rng) {
  SimulatedPopulation pop;
  const int shifted = static_cast<int>(std::lround(config.M * config.group_fraction));
  std::normal_distribution<double> std_normal(0.0, 1.0);
  for (int i = 0; i < config.M; ++i) {
    const bool in_b = i >= config.M - shifted;
    Vec5 mean = config.beta0.to_vector();
    if (in_b) mean += config.group_shift;
    Vec5 v;
    for (int k = 0; k < 5; ++k) v[k] = mean[k] + config.sigma0[k] * std_normal(rng);
    AnatomicalAngles beta = AnatomicalAngles::wrapped(v);
    if (config.constrained_gamma0) {
      beta.gamma0 = wrap_half_pi(reduced_gamma0(beta.t1, beta.t2, beta.s1, beta.s2) + config.gamma0_offset);
    }
    std::ostringstream id;
    id << "sim" << i + 1;
    pop.subjects.push_back(
        simulate_subject(beta, config.n, config.motion, config.error_sd, rng, id.str(), in_b ? "B" : "A"));
    pop.true_angles.push_back(beta);
  }
  return pop;
}

std::mt19937_64 replicate_rng(std::uint64_t seed, std::uint64_t rep) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32)};
  return std::mt19937_64(seq);
}

SimCell summarize(const std::vector<double>& estimates, double truth) {
  SimCell cell;
  if (estimates.empty()) return cell;
  const double r = static_cast<double>(estimates.size());
  std::vector<double> err(estimates.size()), sq(estimates.size());
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    err[k] = estimates[k] - truth;
    sq[k] = err[k] * err[k];
  }
  cell.bias = mean_of(err);
  const double mse = mean_of(sq);
  cell.rmse = std::sqrt(mse);
  cell.bias_mcse = sample_sd(err) / std::sqrt(r);
  cell.rmse_mcse = cell.rmse > 0.0 ? sample_sd(sq) / std::sqrt(r) / (2.0 * cell.rmse) : 0.0;
  cell.empirical_variance = mse - cell.bias * cell.bias;
  return cell;
}

const SimParameterRow& SimReport::row(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return r;
  }
  throw Error(ErrorKind::usage, "no simulation row named '" + name + "'");
}

SimReport run_study(const SimConfig& config) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const int reps = config.replicates;
  std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(reps));

  const double init_sd = config.error_sd > 0.0 ? config.error_sd : deg_to_rad(1.0);
  const PriorSpec init = PriorSpec::from_sds(config.beta0, config.sigma0, kappa_from_residual_sd(init_sd));
  MixedOptions opts;
  opts.algorithm = config.algorithm;
  opts.threads = 1;
  opts.lmm.method = config.lmm_method;

  detail::parallel_for(outcomes.size(), config.threads, [&](std::size_t rep) {
    auto rng = replicate_rng(config.seed, rep);
    const SimulatedPopulation pop = simulate_population(config, rng);
    ReplicateOutcome& out = outcomes[rep];
    try {
      const PopulationFit fit = fit_population(pop.subjects, init, config.model, opts);
      out.ok = fit.beta0_hat.allFinite() && fit.beta0_se.allFinite();
      out.converged = fit.converged;
      out.estimate = fit.beta0_hat;
      out.se = fit.beta0_se;
      out.sds = fit.sigma0_hat;
      out.residual_sd_deg = fit.residual_sd_deg;
      out.condition = fit.median_condition_number;
    } catch (const Error&) {
      out.ok = false;
    }
  });

  SimReport report;
  report.config = config;
  std::vector<double> residual_sds, conditions;
  for (const auto& o : outcomes) {
    if (!o.ok) {
      ++report.failures;
      continue;
    }
    ++report.completed;
    if (!o.converged) ++report.not_converged;
    report.estimates.push_back(o.estimate);
    report.standard_errors.push_back(o.se);
    report.sd_estimates.push_back(o.sds);
    residual_sds.push_back(o.residual_sd_deg);
    conditions.push_back(o.condition);
  }
  report.failure_rate = static_cast<double>(report.failures) / reps;
  report.mean_residual_sd_deg = mean_of(residual_sds);
  if (!conditions.empty()) {
    std::sort(conditions.begin(), conditions.end());
    const std::size_t mid = conditions.size() / 2;
    report.median_condition_number =
        conditions.size() % 2 ? conditions[mid] : 0.5 * (conditions[mid - 1] + conditions[mid]);
  }

  const auto names = config.model.fixed_names();
  Eigen::VectorXd truth(static_cast<Eigen::Index>(names.size()));
  truth.head<5>() = config.beta0.to_vector();
  for (std::size_t k = 5; k < names.size(); ++k) {
    truth[static_cast<Eigen::Index>(k)] = config.group_shift[names[k] == "ds1" ? 2 : 3];
  }
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    SimParameterRow row;
    row.name = names[k];
    std::vector<double> est, var;
    for (std::size_t r = 0; r < report.estimates.size(); ++r) {
      est.push_back(report.estimates[r][kk]);
      var.push_back(report.standard_errors[r][kk] * report.standard_errors[r][kk]);
    }
    row.estimate = summarize(est, truth[kk]);
    const double emp = sample_sd(est) * sample_sd(est);
    const double a = mean_of(var);
    if (emp > 0.0 && a > 0.0 && est.size() > 1) {
      const double ratio = a / emp;
      row.variance_rel_bias = 100.0 * (ratio - 1.0);
      const double rel_a = sample_sd(var) / std::sqrt(static_cast<double>(var.size())) / a;
      const double rel_b = std::sqrt(2.0 / static_cast<double>(est.size() - 1));
      row.variance_rel_bias_mcse = 100.0 * ratio * std::hypot(rel_a, rel_b);
    }
    if (k < 5) {
      std::vector<double> sds;
      for (const auto& s : report.sd_estimates) sds.push_back(s[kk]);
      row.sd_estimate = summarize(sds, config.sigma0[kk]);
    }
    report.rows.push_back(std::move(row));
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace axisfit
