#include "axisfit/subject_fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gauss_newton.hpp"

namespace axisfit {

namespace {
constexpr double kUnitGuard = 1.0 - 1e-9;
}

SubjectData::SubjectData(std::string subject_id, std::vector<RotationMatrix> rotations, std::string group_id)
    : subject_id_(std::move(subject_id)),
      group_id_(std::move(group_id)),
      rotations_(std::move(rotations)),
      frames_(rotations_) {}

void SubjectData::require_fittable() const {
  if (rotations_.size() < kMinFrames) {
    std::ostringstream os;
    os << "subject '" << subject_id_ << "' has " << rotations_.size() << " frames; at least "
       << kMinFrames << " are required";
    throw Error(ErrorKind::too_few_frames, os.str());
  }
}

AnatomicalAngles default_angles() { return AnatomicalAngles::from_degrees(8.0, -6.0, 42.0, 23.0, 17.0); }

namespace detail {

FrameGeometry geometry_for(const Eigen::VectorXd& p, bool reduced) {
  if (reduced) return make_reduced_geometry(p[0], p[1], p[2], p[3]);
  return make_geometry(AnatomicalAngles{p[0], p[1], p[2], p[3], p[4]});
}

namespace {

Eigen::VectorXd wrap_params(const Eigen::VectorXd& p) {
  Eigen::VectorXd out(p.size());
  for (Eigen::Index k = 0; k < p.size(); ++k) out[k] = wrap_half_pi(p[k]);
  return out;
}

bool params_in_domain(const Eigen::VectorXd& p, bool reduced) {
  if (!p.allFinite()) return false;
  if (reduced) {
    return AnatomicalAngles{p[0], p[1], p[2], p[3], 0.0}.in_domain();
  }
  return AnatomicalAngles{p[0], p[1], p[2], p[3], p[4]}.in_domain();
}

}  // namespace

std::optional<FrameTerms> try_evaluate(const FrameBlock& frames, const Eigen::VectorXd& params, bool reduced) {
  if (!params_in_domain(params, reduced)) return std::nullopt;
  FrameGeometry geometry;
  try {
    geometry = geometry_for(params, reduced);
  } catch (const Error&) {
    return std::nullopt;
  }
  FrameTerms terms;
  evaluate_frames(frames, geometry, terms);
  if (terms.max_abs_u() >= kUnitGuard) return std::nullopt;
  return terms;
}

double penalty_value(const Penalty* penalty, const Eigen::VectorXd& params) {
  if (penalty == nullptr) return 0.0;
  const Eigen::VectorXd d = params - penalty->center;
  return d.dot(penalty->precision * d);
}

double eigen_condition(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || !std::isfinite(hi)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

GaussNewtonResult gauss_newton(const FrameBlock& frames, const Eigen::VectorXd& start, bool reduced,
                               const Penalty* penalty, const FitOptions& opts) {
  const int p = reduced ? 4 : 5;
  GaussNewtonResult out;
  out.params = wrap_params(start);
  auto terms = try_evaluate(frames, out.params, reduced);
  if (!terms) {
    throw Error(ErrorKind::domain, "starting angles give a singular geometry for this data");
  }
  out.terms = std::move(*terms);
  out.normal = accumulate_normal_equations(out.terms);
  out.objective = out.normal.rss + penalty_value(penalty, out.params);
  if (opts.record_trace) out.trace.push_back(out.objective);

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    Eigen::MatrixXd h = out.normal.xtx.topLeftCorner(p, p);
    Eigen::VectorXd g = out.normal.xtr.head(p);
    if (penalty != nullptr) {
      h += penalty->precision;
      g += penalty->precision * (out.params - penalty->center);
    } else {
      const double cond = eigen_condition(h);
      if (!(cond <= opts.singular_condition)) {
        throw IllConditionedError("sum of X X' is numerically singular", std::sqrt(cond));
      }
      if (cond > opts.ridge_condition) {
        h += (1e-8 * h.trace() / p) * Eigen::MatrixXd::Identity(p, p);
        out.ridge_applied = true;
      }
    }
    const Eigen::VectorXd delta = -h.ldlt().solve(g);
    const double step_norm = delta.lpNorm<Eigen::Infinity>();

    bool accepted = false;
    double scale = 1.0;
    for (int halving = 0; halving <= opts.max_halvings; ++halving, scale *= 0.5) {
      Eigen::VectorXd candidate = wrap_params(out.params + scale * delta);
      auto trial = try_evaluate(frames, candidate, reduced);
      if (!trial) continue;
      NormalEquations ne = accumulate_normal_equations(*trial);
      const double objective = ne.rss + penalty_value(penalty, candidate);
      if (objective <= out.objective * (1.0 + 1e-12) + 1e-300) {
        out.params = std::move(candidate);
        out.terms = std::move(*trial);
        out.normal = ne;
        out.objective = objective;
        accepted = true;
        break;
      }
    }
    if (accepted) {
      ++out.n_iter;
      if (opts.record_trace) out.trace.push_back(out.objective);
    }
    if (step_norm < opts.tol) {
      out.converged = true;
      break;
    }
    if (!accepted) {
      // No descent along the Gauss-Newton direction: either at the floating
      // point floor of the objective or genuinely stuck.
      out.converged = step_norm < 1e-8;
      break;
    }
  }
  return out;
}

}  // namespace detail

namespace {

SubjectFitResult finish_fit(const SubjectData& data, detail::GaussNewtonResult&& gn, bool reduced,
                            const FitOptions& opts) {
  const int p = reduced ? 4 : 5;
  SubjectFitResult res;
  res.reduced = reduced;
  res.n_frames = data.size();
  if (reduced) {
    const Eigen::VectorXd& q = gn.params;
    res.beta_hat = AnatomicalAngles{q[0], q[1], q[2], q[3], reduced_gamma0(q[0], q[1], q[2], q[3])};
  } else {
    res.beta_hat = AnatomicalAngles{gn.params[0], gn.params[1], gn.params[2], gn.params[3], gn.params[4]};
  }
  res.n_iter = gn.n_iter;
  res.converged = gn.converged;
  res.ridge_applied = gn.ridge_applied;
  res.sse = gn.normal.rss;
  res.objective_trace = std::move(gn.trace);

  const double n = static_cast<double>(data.size());
  const double residual_var = gn.normal.rss / n;
  res.kappa_hat = residual_var > 0.0 ? 1.0 / (2.0 * residual_var) : std::numeric_limits<double>::infinity();
  res.residual_sd = std::sqrt(residual_var);

  Eigen::MatrixXd xtx = gn.normal.xtx.topLeftCorner(p, p);
  const double cond = detail::eigen_condition(xtx);
  res.condition_number = std::sqrt(cond);
  if (cond > opts.ridge_condition) {
    xtx += (1e-8 * xtx.trace() / p) * Eigen::MatrixXd::Identity(p, p);
    res.ridge_applied = true;
  }
  res.cov = residual_var * xtx.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  res.lag1_autocorrelation = lag1_autocorrelation(gn.terms.residual);
  return res;
}

Eigen::VectorXd grid_start(const SubjectData& data, const Eigen::VectorXd& init, bool reduced) {
  Eigen::VectorXd best = init;
  double best_sse = std::numeric_limits<double>::infinity();
  for (double t1 = -30.0; t1 <= 30.0; t1 += 10.0) {
    for (double s1 = 0.0; s1 <= 70.0; s1 += 10.0) {
      Eigen::VectorXd cand = init;
      cand[0] = deg_to_rad(t1);
      cand[2] = deg_to_rad(s1);
      auto terms = detail::try_evaluate(data.frames(), cand, reduced);
      if (!terms) continue;
      const double sse = accumulate_normal_equations(*terms).rss;
      if (sse < best_sse) {
        best_sse = sse;
        best = cand;
      }
    }
  }
  return best;
}

}  // namespace

double reduced_gamma0(double t1, double t2, double s1, double s2) {
  return -std::asin(std::clamp(unit_vector_tt(t1, t2).dot(unit_vector_st(s1, s2)), -1.0, 1.0));
}

std::vector<double> residual_angles(const SubjectData& data, const AnatomicalAngles& beta) {
  const Vec3 a1 = unit_vector_tt(beta.t1, beta.t2);
  const Vec3 b2 = unit_vector_st(beta.s1, beta.s2);
  std::vector<double> out;
  out.reserve(data.size());
  for (const auto& r : data.rotations()) {
    out.push_back(-std::asin(std::clamp(a1.dot(r.matrix() * b2), -1.0, 1.0)));
  }
  return out;
}

Vec5 design_vector(const RotationMatrix& r, const AnatomicalAngles& beta) {
  const FrameBlock block(std::span<const RotationMatrix>(&r, 1));
  FrameTerms terms;
  kernels::evaluate_frames_scalar(block, make_geometry(beta), terms);
  if (std::abs(terms.u[0]) >= kUnitGuard) {
    throw IllConditionedError("design vector undefined: |A1' R B2| ~ 1", std::numeric_limits<double>::infinity());
  }
  Vec5 x;
  for (int k = 0; k < 5; ++k) x[k] = terms.design[k][0];
  return x;
}

Eigen::Vector4d design_vector_reduced(const RotationMatrix& r, const Eigen::Vector4d& beta4) {
  const FrameBlock block(std::span<const RotationMatrix>(&r, 1));
  FrameTerms terms;
  kernels::evaluate_frames_scalar(block, make_reduced_geometry(beta4[0], beta4[1], beta4[2], beta4[3]), terms);
  if (std::abs(terms.u[0]) >= kUnitGuard) {
    throw IllConditionedError("design vector undefined: |A1' R B2| ~ 1", std::numeric_limits<double>::infinity());
  }
  Eigen::Vector4d x;
  for (int k = 0; k < 4; ++k) x[k] = terms.design[k][0];
  return x;
}

double profile_sse(const SubjectData& data, const AnatomicalAngles& beta) {
  FrameTerms terms;
  evaluate_frames(data.frames(), make_geometry(beta), terms);
  return accumulate_normal_equations(terms).rss;
}

double profile_log_likelihood(const SubjectData& data, const AnatomicalAngles& beta, double kappa) {
  return -kappa * profile_sse(data, beta) + 3.0 * static_cast<double>(data.size()) * kappa;
}

Vec5 profile_score(const SubjectData& data, const AnatomicalAngles& beta, double kappa) {
  FrameTerms terms;
  evaluate_frames(data.frames(), make_geometry(beta), terms);
  // -4 kappa sum sin(d/2) X = -2 kappa sum r X
  return -2.0 * kappa * accumulate_normal_equations(terms).xtr;
}

SubjectFitResult fit_subject(const SubjectData& data, const AnatomicalAngles& init, const FitOptions& opts) {
  data.require_fittable();
  if (!init.in_domain()) throw Error(ErrorKind::domain, "initial angles out of domain");
  Eigen::VectorXd start = init.to_vector();
  if (opts.grid_init) start = grid_start(data, start, false);
  auto gn = detail::gauss_newton(data.frames(), start, false, nullptr, opts);
  return finish_fit(data, std::move(gn), false, opts);
}

SubjectFitResult fit_subject_reduced(const SubjectData& data, const Eigen::Vector4d& init, const FitOptions& opts) {
  data.require_fittable();
  Eigen::VectorXd start = init;
  if (opts.grid_init) start = grid_start(data, start, true);
  auto gn = detail::gauss_newton(data.frames(), start, true, nullptr, opts);
  return finish_fit(data, std::move(gn), true, opts);
}

double lag1_autocorrelation(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 3) return 0.0;
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = series[i] - mean;
    den += d * d;
    if (i + 1 < n) num += d * (series[i + 1] - mean);
  }
  return den > 0.0 ? num / den : 0.0;
}

}  // namespace axisfit
