#include "axisfit/report.hpp"

#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include <unistd.h>

namespace axisfit {

namespace {

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof buf, f, args);
  va_end(args);
  return buf;
}

std::string heading(const std::string& text, bool color) {
  return color ? "\x1b[1m" + text + "\x1b[0m\n" : text + "\n";
}

std::string yes_no(bool b) { return b ? "yes" : "no"; }

const char* const kLabels[5] = {"t1 (tt inc)", "t2 (tt dev)", "s1 (st inc)", "s2 (st dev)", "gamma0"};

std::string angle_table(const AnatomicalAngles& beta, const Eigen::MatrixXd* cov) {
  std::string out = fmt("  %-14s %12s %10s\n", "angle", "deg", "se deg");
  const Vec5 v = beta.to_vector();
  for (int k = 0; k < 5; ++k) {
    if (cov != nullptr && cov->rows() > k) {
      out += fmt("  %-14s %12.4f %10.4f\n", kLabels[k], rad_to_deg(v[k]), rad_to_deg(std::sqrt((*cov)(k, k))));
    } else {
      out += fmt("  %-14s %12.4f %10s\n", kLabels[k], rad_to_deg(v[k]), "-");
    }
  }
  return out;
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

nlohmann::json cell_json(const SimCell& c) {
  return {{"bias_rad", c.bias},
          {"rmse_rad", c.rmse},
          {"bias_mcse_rad", c.bias_mcse},
          {"rmse_mcse_rad", c.rmse_mcse},
          {"empirical_variance_rad2", c.empirical_variance}};
}

}  // namespace

bool color_enabled() {
  const char* no_color = std::getenv("NO_COLOR");
  if (no_color != nullptr && no_color[0] != '\0') return false;
  return isatty(fileno(stdout)) != 0;
}

std::string format_subject_fit(const std::string& subject_id, const SubjectFitResult& fit, bool color) {
  std::string out = heading("subject " + subject_id + (fit.reduced ? " (reduced model)" : ""), color);
  Eigen::MatrixXd cov = fit.cov;
  if (fit.reduced) {
    // gamma0 is derived; show se for the four free angles only
    cov.conservativeResize(4, 4);
  }
  out += angle_table(fit.beta_hat, &cov);
  out += fmt("  frames %zu, iterations %d, converged %s\n", fit.n_frames, fit.n_iter, yes_no(fit.converged).c_str());
  out += fmt("  residual sd %.4f deg, condition number %.1f, ridge %s\n", rad_to_deg(fit.residual_sd),
             fit.condition_number, yes_no(fit.ridge_applied).c_str());
  out += fmt("  lag-1 residual autocorrelation %.3f\n", fit.lag1_autocorrelation);
  if (!fit.reduced) {
    out += fmt("  flexibility gamma0 + asin(A1'B2) %.4f deg\n", flexibility_statistic(fit));
  }
  return out;
}

std::string format_posterior(const std::string& subject_id, const PosteriorResult& fit, bool color) {
  std::string out = heading("subject " + subject_id + " (MAP)", color);
  const Eigen::MatrixXd cov = fit.post_cov;
  out += angle_table(fit.beta_map, &cov);
  out += fmt("  iterations %d, converged %s, condition number %.1f\n", fit.n_iter, yes_no(fit.converged).c_str(),
             fit.condition_number);
  out += fmt("  penalized SSE %.6g, residual SSE %.6g, residual sd %.4f deg\n", fit.sse, fit.residual_sse,
             fit.kappa_hat > 0.0 ? rad_to_deg(residual_sd_from_kappa(fit.kappa_hat)) : 0.0);
  return out;
}

std::string format_population(const PopulationFit& fit, const std::vector<std::pair<std::string, WaldResult>>& tests,
                              bool color) {
  std::string out = heading(std::string("population fit (") + to_string(fit.algorithm) + ", " +
                                to_string(fit.design) + ")",
                            color);
  out += fmt("  %-8s %12s %10s %12s\n", "effect", "deg", "se deg", "sd deg");
  for (std::size_t k = 0; k < fit.fixed_names.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    std::string sd = "-";
    if (k < 5) {
      sd = fmt("%.4f", rad_to_deg(fit.sigma0_hat[kk]));
      if (k < fit.sigma0_at_floor.size() && fit.sigma0_at_floor[k]) sd += " (floor)";
    }
    out += fmt("  %-8s %12.4f %10.4f %12s\n", fit.fixed_names[k].c_str(), rad_to_deg(fit.beta0_hat[kk]),
               rad_to_deg(fit.beta0_se[kk]), sd.c_str());
  }
  out += fmt("  residual sd %.4f deg (kappa %.6g)\n", fit.residual_sd_deg, fit.kappa_hat);
  out += fmt("  subjects %zu, outer iterations %d, converged %s\n", fit.subject_ids.size(), fit.n_outer_iter,
             yes_no(fit.converged).c_str());
  out += fmt("  marginal log-likelihood %.6f, local LMM log-likelihood %.6f (%s)\n", fit.marginal_loglik,
             fit.lmm_loglik, fit.lmm_method == LmmMethod::ml ? "ML" : "REML");
  out += fmt("  median per-subject condition number %.1f\n", fit.median_condition_number);
  out += "  note: standard errors tend to understate sampling variability for t2, s2 and gamma0 at small n\n";
  if (!tests.empty()) {
    out += heading("Wald tests", color);
    for (const auto& [name, w] : tests) {
      out += fmt("  %-8s estimate %.4f deg, se %.4f deg, z %.3f, p %.4g\n", name.c_str(), rad_to_deg(w.estimate),
                 rad_to_deg(w.se), w.z, w.p_value);
    }
  }
  for (const auto& w : fit.warnings) {
    out += "  warning: subject " + w.subject_id + " excluded: " + w.message + "\n";
  }
  return out;
}

std::string format_sim_report(const SimReport& r, bool color) {
  const auto& c = r.config;
  std::string out = heading(fmt("simulation n=%d M=%d replicates=%d seed=%llu algorithm=%s lmm=%s", c.n, c.M,
                                c.replicates, static_cast<unsigned long long>(c.seed), to_string(c.algorithm),
                                c.lmm_method == LmmMethod::ml ? "ML" : "REML"),
                            color);
  const char* order[5] = {"s1", "s2", "gamma0", "t1", "t2"};
  out += "Fixed effects: bias (RMSE, relative variance bias %), degrees\n";
  out += fmt("%4s %4s", "n", "M");
  for (const char* name : order) out += fmt(" %24s", name);
  out += "\n" + fmt("%4d %4d", c.n, c.M);
  for (const char* name : order) {
    const auto& row = r.row(name);
    out += fmt(" %24s", fmt("%.2f (%.2f, %.0f)", rad_to_deg(row.estimate.bias), rad_to_deg(row.estimate.rmse),
                            row.variance_rel_bias)
                            .c_str());
  }
  out += "\n" + fmt("%9s", "MC se");
  for (const char* name : order) {
    const auto& row = r.row(name);
    out += fmt(" %24s", fmt("%.2f (%.2f, %.0f)", rad_to_deg(row.estimate.bias_mcse),
                            rad_to_deg(row.estimate.rmse_mcse), row.variance_rel_bias_mcse)
                            .c_str());
  }
  out += "\n\nRandom-effect sds: bias (RMSE), degrees\n";
  out += fmt("%4s %4s", "n", "M");
  for (const char* name : order) out += fmt(" %16s", name);
  out += "\n" + fmt("%4d %4d", c.n, c.M);
  for (const char* name : order) {
    const auto& row = r.row(name);
    out += fmt(" %16s",
               fmt("%.2f (%.2f)", rad_to_deg(row.sd_estimate.bias), rad_to_deg(row.sd_estimate.rmse)).c_str());
  }
  out += "\n" + fmt("%9s", "MC se");
  for (const char* name : order) {
    const auto& row = r.row(name);
    out += fmt(" %16s", fmt("%.2f (%.2f)", rad_to_deg(row.sd_estimate.bias_mcse),
                            rad_to_deg(row.sd_estimate.rmse_mcse))
                            .c_str());
  }
  for (const auto& row : r.rows) {
    if (row.name == "ds1" || row.name == "ds2") {
      out += fmt("\n%s: bias %.2f (RMSE %.2f) deg", row.name.c_str(), rad_to_deg(row.estimate.bias),
                 rad_to_deg(row.estimate.rmse));
    }
  }
  out += fmt("\n\ncompleted %d, failed %d (%.1f%%), not converged %d\n", r.completed, r.failures,
             100.0 * r.failure_rate, r.not_converged);
  out += fmt("mean residual sd %.4f deg, median condition number %.1f, runtime %.1f s\n", r.mean_residual_sd_deg,
             r.median_condition_number, r.runtime_seconds);
  return out;
}

std::string format_dataset_summary(const Dataset& data, bool color) {
  std::string out = heading("dataset " + data.metadata.source, color);
  out += fmt("  subjects %zu, frames %zu, stride %d", data.subjects.size(), data.total_frames(), data.metadata.stride);
  if (data.metadata.sampling_hz > 0.0) out += fmt(", sampling %.1f Hz", data.metadata.sampling_hz);
  out += "\n";
  for (const auto& s : data.subjects) {
    out += fmt("  %-16s group %-8s frames %zu%s\n", s.subject_id().c_str(),
               s.group_id().empty() ? "-" : s.group_id().c_str(), s.size(),
               s.size() < kMinFrames ? " (too few to fit)" : "");
  }
  for (const auto& rej : data.rejected) {
    out += fmt("  rejected line %zu: subject %s frame %ld: %s\n", rej.line, rej.subject_id.c_str(), rej.frame_index,
               rej.reason.c_str());
  }
  return out;
}

nlohmann::json to_json(const AnatomicalAngles& beta) {
  nlohmann::json j;
  const Vec5 v = beta.to_vector();
  for (int k = 0; k < 5; ++k) j[std::string(AnatomicalAngles::names[k]) + "_rad"] = v[k];
  return j;
}

nlohmann::json to_json(const SubjectFitResult& fit) {
  return {{"beta_hat", to_json(fit.beta_hat)},
          {"cov_rad2", matrix_json(fit.cov)},
          {"kappa_hat_per_rad2", fit.kappa_hat},
          {"residual_sd_rad", fit.residual_sd},
          {"n_iter", fit.n_iter},
          {"converged", fit.converged},
          {"condition_number", fit.condition_number},
          {"ridge_applied", fit.ridge_applied},
          {"sse", fit.sse},
          {"n_frames", fit.n_frames},
          {"lag1_autocorrelation", fit.lag1_autocorrelation},
          {"reduced", fit.reduced},
          {"flexibility_deg", flexibility_statistic(fit)}};
}

nlohmann::json to_json(const PosteriorResult& fit) {
  return {{"beta_map", to_json(fit.beta_map)},
          {"post_cov_rad2", matrix_json(fit.post_cov)},
          {"penalized_sse", fit.sse},
          {"residual_sse", fit.residual_sse},
          {"kappa_hat_per_rad2", fit.kappa_hat},
          {"condition_number", fit.condition_number},
          {"n_iter", fit.n_iter},
          {"converged", fit.converged}};
}

nlohmann::json to_json(const PopulationFit& fit, const std::vector<std::pair<std::string, WaldResult>>& tests) {
  nlohmann::json j;
  j["algorithm"] = to_string(fit.algorithm);
  j["model"] = to_string(fit.design);
  j["fixed_names"] = fit.fixed_names;
  j["beta0_hat_rad"] = vector_json(fit.beta0_hat);
  j["beta0_se_rad"] = vector_json(fit.beta0_se);
  j["beta0_cov_rad2"] = matrix_json(fit.beta0_cov);
  j["sigma0_hat_rad"] = vector_json(fit.sigma0_hat);
  j["sigma0_at_floor"] = fit.sigma0_at_floor;
  j["kappa_hat_per_rad2"] = fit.kappa_hat;
  j["residual_sd_deg"] = fit.residual_sd_deg;
  j["n_outer_iter"] = fit.n_outer_iter;
  j["converged"] = fit.converged;
  j["marginal_loglik"] = fit.marginal_loglik;
  j["lmm_loglik"] = fit.lmm_loglik;
  j["lmm_method"] = fit.lmm_method == LmmMethod::ml ? "ML" : "REML";
  j["fixed_update_trace_rad"] = fit.fixed_update_trace;
  j["median_condition_number"] = fit.median_condition_number;
  nlohmann::json subjects = nlohmann::json::array();
  for (std::size_t i = 0; i < fit.subject_ids.size(); ++i) {
    subjects.push_back({{"subject_id", fit.subject_ids[i]},
                        {"group_id", fit.group_ids[i]},
                        {"effects", to_json(fit.subject_effects[i])}});
  }
  j["subjects"] = subjects;
  nlohmann::json warnings = nlohmann::json::array();
  for (const auto& w : fit.warnings) warnings.push_back({{"subject_id", w.subject_id}, {"message", w.message}});
  j["warnings"] = warnings;
  nlohmann::json wald = nlohmann::json::object();
  for (const auto& [name, w] : tests) {
    wald[name] = {{"estimate_rad", w.estimate}, {"se_rad", w.se}, {"z", w.z}, {"p_value", w.p_value}};
  }
  j["wald_tests"] = wald;
  return j;
}

nlohmann::json to_json(const SimReport& r) {
  const auto& c = r.config;
  nlohmann::json j;
  j["config"] = {{"M", c.M},
                 {"n", c.n},
                 {"replicates", c.replicates},
                 {"seed", c.seed},
                 {"algorithm", to_string(c.algorithm)},
                 {"lmm_method", c.lmm_method == LmmMethod::ml ? "ML" : "REML"},
                 {"model", to_string(c.model.design)},
                 {"beta0", to_json(c.beta0)},
                 {"sigma0_rad", vector_json(c.sigma0)},
                 {"error_sd_rad", c.error_sd},
                 {"alpha_mean_rad", c.motion.alpha_mean},
                 {"alpha_sd_rad", c.motion.alpha_sd},
                 {"phi_mean_rad", c.motion.phi_mean},
                 {"phi_sd_rad", c.motion.phi_sd},
                 {"group_fraction", c.group_fraction},
                 {"group_shift_rad", vector_json(c.group_shift)}};
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"name", row.name},
                    {"estimate", cell_json(row.estimate)},
                    {"variance_rel_bias_pct", row.variance_rel_bias},
                    {"variance_rel_bias_mcse_pct", row.variance_rel_bias_mcse},
                    {"sd_estimate", cell_json(row.sd_estimate)}});
  }
  j["rows"] = rows;
  j["completed"] = r.completed;
  j["failures"] = r.failures;
  j["not_converged"] = r.not_converged;
  j["failure_rate"] = r.failure_rate;
  j["mean_residual_sd_deg"] = r.mean_residual_sd_deg;
  j["median_condition_number"] = r.median_condition_number;
  j["runtime_seconds"] = r.runtime_seconds;
  return j;
}

}  // namespace axisfit
