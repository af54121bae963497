#include "axisfit/mixed_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "parallel.hpp"

namespace axisfit {

namespace {

constexpr int kS1 = 2;
constexpr int kS2 = 3;
constexpr double kMinSd = 1e-12;

std::vector<int> shift_columns(GroupDesign design) {
  switch (design) {
    case GroupDesign::two_sample_s1_s2:
      return {kS1, kS2};
    case GroupDesign::two_sample_s1:
      return {kS1};
    default:
      return {};
  }
}

Vec5 shift_vector(const Eigen::VectorXd& fixed, GroupDesign design) {
  Vec5 shift = Vec5::Zero();
  const auto cols = shift_columns(design);
  for (std::size_t k = 0; k < cols.size(); ++k) shift[cols[k]] = fixed[5 + static_cast<Eigen::Index>(k)];
  return shift;
}

PriorSpec make_prior(const Vec5& mean, const Vec5& sds, double kappa) {
  return PriorSpec::from_sds(AnatomicalAngles::wrapped(mean), sds.cwiseMax(kMinSd), kappa);
}

Vec5 prior_sds(const PriorSpec& prior) { return prior.sigma0().diagonal().cwiseSqrt(); }

// Population state carried between outer iterations.
struct State {
  Eigen::VectorXd fixed;  // n_fixed
  Vec5 sds;
  double kappa;
  GroupDesign design;

  Vec5 mean(bool shifted) const {
    Vec5 m = fixed.head<5>();
    if (shifted) m += shift_vector(fixed, design);
    return m;
  }
  PriorSpec prior(bool shifted) const { return make_prior(mean(shifted), sds, kappa); }
};

std::vector<bool> assign_groups(const std::vector<SubjectData>& subjects, const PopulationModel& model) {
  std::vector<bool> shifted(subjects.size(), false);
  if (!model.two_sample()) return shifted;
  std::string reference = model.reference_group;
  if (reference.empty()) reference = subjects.front().group_id();
  bool any_other = false;
  bool any_reference = false;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    shifted[i] = subjects[i].group_id() != reference;
    any_other = any_other || shifted[i];
    any_reference = any_reference || !shifted[i];
  }
  if (!any_other || !any_reference) {
    throw Error(ErrorKind::validation, "two-sample designs need subjects in at least two distinct groups");
  }
  return shifted;
}

struct Linearization {
  std::optional<AnatomicalAngles> beta;
  std::string error;
  double residual_sse = 0.0;
};

Linearization map_fit(const SubjectData& data, const PriorSpec& prior, const AnatomicalAngles& start,
                      const FitOptions& opts) {
  Linearization out;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      const PosteriorResult r = fit_map(data, prior, attempt == 0 ? start : prior.beta0, opts);
      if (r.converged) {
        out.beta = r.beta_map;
        out.residual_sse = r.residual_sse;
        out.error.clear();
        return out;
      }
      out.error = "MAP fit did not converge";
    } catch (const Error& e) {
      out.error = e.what();
    }
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  }
  return m;
}

double design_condition(const Eigen::MatrixXd& x) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x);
  const auto& s = svd.singularValues();
  return s[s.size() - 1] > 0.0 ? s[0] / s[s.size() - 1] : std::numeric_limits<double>::infinity();
}

class PopulationSolver {
 public:
  PopulationSolver(const std::vector<SubjectData>& subjects, const PriorSpec& init, const PopulationModel& model,
                   MixedOptions opts)
      : subjects_(subjects), model_(model), opts_(std::move(opts)) {
    if (subjects_.size() < 2) throw Error(ErrorKind::validation, "population fits need at least two subjects");
    for (const auto& s : subjects_) s.require_fittable();
    init.validate();
    shifted_ = assign_groups(subjects_, model_);
    active_.assign(subjects_.size(), true);
    points_.assign(subjects_.size(), init.beta0);
    state_.fixed = Eigen::VectorXd::Zero(model_.n_fixed());
    state_.fixed.head<5>() = init.beta0.to_vector();
    state_.sds = prior_sds(init);
    state_.kappa = init.kappa;
    state_.design = model_.design;
  }

  PopulationFit run() {
    if (opts_.init_kappa_from_data) {
      run_maps();
      double rss = 0.0;
      double n = 0.0;
      for (std::size_t i = 0; i < subjects_.size(); ++i) {
        if (!active_[i]) continue;
        rss += sse_[i];
        n += static_cast<double>(subjects_[i].size());
      }
      if (rss > 0.0) state_.kappa = n / (2.0 * rss);
    }
    bool have_points = opts_.init_kappa_from_data;
    if (opts_.algorithm == MixedAlgorithm::lme && opts_.start_effects.size() == subjects_.size()) {
      points_ = opts_.start_effects;
      have_points = true;
    }

    std::optional<double> last_loglik;
    for (int iter = 1; iter <= opts_.max_outer; ++iter) {
      if (opts_.algorithm == MixedAlgorithm::plme || !have_points) {
        run_maps();
        have_points = true;
      }
      const LmmFit lmm = fit_local_model();
      const double update = (lmm.beta_fixed - state_.fixed).lpNorm<Eigen::Infinity>();
      fixed_trace_.push_back(update);
      state_.fixed = lmm.beta_fixed;
      state_.sds = lmm.theta;
      state_.kappa = 1.0 / (2.0 * lmm.sigma2);
      lmm_ = lmm;
      n_outer_ = iter;

      move_points_to_blups();

      const double rel =
          last_loglik ? std::abs(lmm.loglik - *last_loglik) / std::max(1.0, std::abs(lmm.loglik)) : 1.0;
      last_loglik = lmm.loglik;
      if (update < opts_.fixed_tol && rel < opts_.loglik_rtol) {
        converged_ = true;
        break;
      }
    }
    return finish();
  }

 private:
  std::vector<std::size_t> active_indices() const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < subjects_.size(); ++i) {
      if (active_[i]) idx.push_back(i);
    }
    return idx;
  }

  void exclude(std::size_t i, const std::string& why) {
    active_[i] = false;
    warnings_.push_back({subjects_[i].subject_id(), why});
  }

  void require_enough_subjects() const {
    if (active_indices().size() < 2) {
      throw Error(ErrorKind::convergence, "fewer than two subjects remain after excluding failed fits");
    }
  }

  void run_maps() {
    const auto idx = active_indices();
    std::vector<Linearization> out(idx.size());
    detail::parallel_for(idx.size(), opts_.threads, [&](std::size_t k) {
      const std::size_t i = idx[k];
      out[k] = map_fit(subjects_[i], state_.prior(shifted_[i]), points_[i], opts_.subject);
    });
    sse_.resize(subjects_.size(), 0.0);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::size_t i = idx[k];
      if (out[k].beta) {
        points_[i] = *out[k].beta;
        sse_[i] = out[k].residual_sse;
      } else {
        exclude(i, out[k].error);
      }
    }
    require_enough_subjects();
  }

  LmmProblem build_problem(std::vector<std::size_t>& used) {
    const auto cols = shift_columns(model_.design);
    const int p = model_.n_fixed();
    LmmProblem problem;
    problem.p = p;
    problem.q = 5;
    conditions_.clear();
    for (std::size_t i : active_indices()) {
      PseudoResponse pr;
      try {
        pr = build_pseudo_response(subjects_[i], points_[i]);
      } catch (const Error& e) {
        // Linearization point unusable: fall back to a MAP fit there.
        Linearization lin = map_fit(subjects_[i], state_.prior(shifted_[i]), points_[i], opts_.subject);
        if (!lin.beta) {
          exclude(i, e.what());
          continue;
        }
        points_[i] = *lin.beta;
        pr = build_pseudo_response(subjects_[i], points_[i]);
      }
      LmmBlock block;
      block.x = Eigen::MatrixXd::Zero(pr.x.rows(), p);
      block.x.leftCols<5>() = pr.x;
      if (shifted_[i]) {
        for (std::size_t k = 0; k < cols.size(); ++k) block.x.col(5 + static_cast<Eigen::Index>(k)) = pr.x.col(cols[k]);
      }
      conditions_.push_back(design_condition(pr.x));
      block.z = std::move(pr.x);
      block.y = std::move(pr.y);
      problem.blocks.push_back(std::move(block));
      used.push_back(i);
    }
    require_enough_subjects();
    return problem;
  }

  LmmFit fit_local_model() {
    used_.clear();
    const LmmProblem problem = build_problem(used_);
    return lmm_fit_ml(problem, state_.sds, opts_.lmm);
  }

  void move_points_to_blups() {
    for (std::size_t k = 0; k < used_.size(); ++k) {
      const std::size_t i = used_[k];
      const Vec5 b = lmm_.blups[k];
      points_[i] = AnatomicalAngles::wrapped(state_.mean(shifted_[i]) + b);
    }
  }

  PopulationFit finish() {
    PopulationFit fit;
    fit.algorithm = opts_.algorithm;
    fit.design = model_.design;
    fit.fixed_names = model_.fixed_names();
    fit.beta0_hat = lmm_.beta_fixed;
    fit.beta0_se = lmm_.se_fixed;
    fit.beta0_cov = lmm_.cov_fixed;
    fit.sigma0_hat = lmm_.theta;
    fit.sigma0_at_floor = lmm_.at_boundary;
    fit.kappa_hat = state_.kappa;
    fit.residual_sd_deg = rad_to_deg(residual_sd_from_kappa(state_.kappa));
    fit.n_outer_iter = n_outer_;
    fit.converged = converged_;
    fit.lmm_loglik = lmm_.loglik;
    fit.lmm_method = lmm_.method;
    fit.fixed_update_trace = fixed_trace_;
    fit.warnings = warnings_;
    fit.median_condition_number = median(conditions_);
    for (std::size_t i : used_) {
      fit.subject_ids.push_back(subjects_[i].subject_id());
      fit.group_ids.push_back(subjects_[i].group_id());
      fit.subject_effects.push_back(points_[i]);
    }
    std::vector<SubjectData> kept;
    std::vector<bool> kept_shift;
    for (std::size_t i : used_) {
      kept.push_back(subjects_[i]);
      kept_shift.push_back(shifted_[i]);
    }
    try {
      fit.marginal_loglik =
          marginal_log_likelihood(kept, kept_shift, state_.prior(false), state_.prior(true), opts_.subject);
    } catch (const Error&) {
      fit.marginal_loglik = std::numeric_limits<double>::quiet_NaN();
    }
    return fit;
  }

  const std::vector<SubjectData>& subjects_;
  PopulationModel model_;
  MixedOptions opts_;
  std::vector<bool> shifted_;
  std::vector<bool> active_;
  std::vector<AnatomicalAngles> points_;
  std::vector<double> sse_;
  std::vector<std::size_t> used_;
  std::vector<double> conditions_;
  std::vector<SubjectWarning> warnings_;
  std::vector<double> fixed_trace_;
  State state_;
  LmmFit lmm_;
  int n_outer_ = 0;
  bool converged_ = false;
};

}  // namespace

const char* to_string(GroupDesign design) {
  switch (design) {
    case GroupDesign::one_sample:
      return "one-sample";
    case GroupDesign::two_sample_s1_s2:
      return "two-sample-s1-s2";
    case GroupDesign::two_sample_s1:
      return "two-sample-s1";
    case GroupDesign::two_sample_none:
      return "two-sample-none";
  }
  return "?";
}

GroupDesign parse_group_design(const std::string& name) {
  for (auto d : {GroupDesign::one_sample, GroupDesign::two_sample_s1_s2, GroupDesign::two_sample_s1,
                 GroupDesign::two_sample_none}) {
    if (name == to_string(d)) return d;
  }
  throw Error(ErrorKind::usage, "unknown model '" + name + "'");
}

int PopulationModel::n_fixed() const { return 5 + static_cast<int>(shift_columns(design).size()); }

std::vector<std::string> PopulationModel::fixed_names() const {
  std::vector<std::string> names(AnatomicalAngles::names, AnatomicalAngles::names + 5);
  for (int c : shift_columns(design)) names.push_back(c == kS1 ? "ds1" : "ds2");
  return names;
}

const char* to_string(MixedAlgorithm algorithm) { return algorithm == MixedAlgorithm::plme ? "PLME" : "LME"; }

MixedAlgorithm parse_mixed_algorithm(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "plme") return MixedAlgorithm::plme;
  if (lower == "lme") return MixedAlgorithm::lme;
  throw Error(ErrorKind::usage, "unknown algorithm '" + name + "'");
}

PriorSpec PopulationFit::prior_for_group(bool shifted) const {
  Vec5 mean = beta0_hat.head<5>();
  if (shifted) mean += shift_vector(beta0_hat, design);
  return make_prior(mean, sigma0_hat, kappa_hat);
}

PseudoResponse build_pseudo_response(const SubjectData& data, const AnatomicalAngles& beta_hat) {
  if (!beta_hat.in_domain()) throw Error(ErrorKind::domain, "linearization point out of domain");
  FrameTerms terms;
  evaluate_frames(data.frames(), make_geometry(beta_hat), terms);
  const double max_u = terms.max_abs_u();
  if (max_u >= 1.0 - 1e-9) {
    throw IllConditionedError("design vector undefined: |A1' R B2| reaches 1 for subject '" + data.subject_id() + "'",
                              std::numeric_limits<double>::infinity());
  }
  const Eigen::Index n = static_cast<Eigen::Index>(terms.size());
  PseudoResponse out;
  out.x.resize(n, 5);
  for (int k = 0; k < 5; ++k) {
    out.x.col(k) = Eigen::Map<const Eigen::VectorXd>(terms.design[k].data(), n);
  }
  const Eigen::Map<const Eigen::VectorXd> r(terms.residual.data(), n);
  out.y = out.x * beta_hat.to_vector() - r;
  return out;
}

PopulationFit fit_population_plme(const std::vector<SubjectData>& subjects, const PriorSpec& init,
                                  const PopulationModel& model, MixedOptions opts) {
  opts.algorithm = MixedAlgorithm::plme;
  return PopulationSolver(subjects, init, model, std::move(opts)).run();
}

PopulationFit fit_population_lme(const std::vector<SubjectData>& subjects, const PriorSpec& init,
                                 const PopulationModel& model, MixedOptions opts) {
  opts.algorithm = MixedAlgorithm::lme;
  return PopulationSolver(subjects, init, model, std::move(opts)).run();
}

PopulationFit fit_population(const std::vector<SubjectData>& subjects, const PriorSpec& init,
                             const PopulationModel& model, const MixedOptions& opts) {
  return PopulationSolver(subjects, init, model, opts).run();
}

double marginal_log_likelihood(const std::vector<SubjectData>& subjects, const std::vector<bool>& shifted,
                               const PriorSpec& reference, const PriorSpec& shifted_prior, const FitOptions& opts) {
  double total = 0.0;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const PriorSpec& prior = (i < shifted.size() && shifted[i]) ? shifted_prior : reference;
    const PosteriorResult r = fit_map(subjects[i], prior, opts);
    const double kappa = prior.kappa;
    const double n = static_cast<double>(subjects[i].size());
    const double log_det_delta = prior.delta0.diagonal().array().abs().log().sum();
    // log |X'X + Delta0'Delta0| from the posterior covariance
    const double log_det_h =
        -std::log(r.post_cov.determinant()) - 5.0 * std::log(2.0 * kappa);
    total += 0.5 * n * std::log(kappa / kPi) + log_det_delta - 0.5 * log_det_h - kappa * r.sse;
  }
  return total;
}

WaldResult wald_test(double estimate, double se) {
  if (!(se > 0.0) || !std::isfinite(se)) throw Error(ErrorKind::validation, "Wald test needs a positive standard error");
  WaldResult w;
  w.estimate = estimate;
  w.se = se;
  w.z = estimate / se;
  w.p_value = std::erfc(std::abs(w.z) / std::sqrt(2.0));
  return w;
}

WaldResult wald_test(const PopulationFit& fit, int index) {
  if (index < 0 || index >= fit.beta0_hat.size()) {
    std::ostringstream os;
    os << "fixed effect index " << index << " not present in the fit";
    throw Error(ErrorKind::usage, os.str());
  }
  return wald_test(fit.beta0_hat[index], fit.beta0_se[index]);
}

WaldResult wald_test(const PopulationFit& fit, const std::string& name) {
  const auto it = std::find(fit.fixed_names.begin(), fit.fixed_names.end(), name);
  if (it == fit.fixed_names.end()) throw Error(ErrorKind::usage, "fixed effect '" + name + "' not present in the fit");
  return wald_test(fit, static_cast<int>(it - fit.fixed_names.begin()));
}

WaldResult wald_test(const PopulationFit& fit, const Eigen::VectorXd& contrast) {
  if (contrast.size() != fit.beta0_hat.size()) {
    throw Error(ErrorKind::usage, "contrast length does not match the fixed effects");
  }
  return wald_test(contrast.dot(fit.beta0_hat), std::sqrt(contrast.dot(fit.beta0_cov * contrast)));
}

double flexibility_statistic(const AnatomicalAngles& beta) {
  const double c = unit_vector_tt(beta.t1, beta.t2).dot(unit_vector_st(beta.s1, beta.s2));
  return rad_to_deg(beta.gamma0 + std::asin(std::clamp(c, -1.0, 1.0)));
}

double flexibility_statistic(const SubjectFitResult& fit) { return flexibility_statistic(fit.beta_hat); }

}  // namespace axisfit
