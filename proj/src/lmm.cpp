#include "axisfit/lmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "axisfit/error.hpp"

namespace axisfit {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

struct Sufficient {
  Eigen::MatrixXd xtx, xtz, ztz;
  Eigen::VectorXd xty, zty;
  double yty = 0.0;
};

std::vector<Sufficient> sufficient_statistics(const LmmProblem& problem) {
  std::vector<Sufficient> out;
  out.reserve(problem.blocks.size());
  for (const auto& b : problem.blocks) {
    Sufficient s;
    s.xtx = b.x.transpose() * b.x;
    s.xtz = b.x.transpose() * b.z;
    s.ztz = b.z.transpose() * b.z;
    s.xty = b.x.transpose() * b.y;
    s.zty = b.z.transpose() * b.y;
    s.yty = b.y.squaredNorm();
    out.push_back(std::move(s));
  }
  return out;
}

// Everything the profiled likelihood produces for one relative factor L.
struct Profile {
  double loglik = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd beta;
  double rss = 0.0;
  double sigma2 = 0.0;
  Eigen::MatrixXd xvx;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> inner;  // chol(M_i)
  bool ok = false;
};

Profile profile(const std::vector<Sufficient>& stats, const Eigen::MatrixXd& l, int p, double n_obs,
                LmmMethod method) {
  const int q = static_cast<int>(l.rows());
  Profile pr;
  pr.xvx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xvy = Eigen::VectorXd::Zero(p);
  double yvy = 0.0;
  double logdet = 0.0;
  pr.inner.reserve(stats.size());
  for (const auto& s : stats) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(q, q) + l.transpose() * s.ztz * l;
    Eigen::LLT<Eigen::MatrixXd> chol(m);
    if (chol.info() != Eigen::Success) return pr;
    const Eigen::MatrixXd xzl = s.xtz * l;
    const Eigen::VectorXd lzy = l.transpose() * s.zty;
    pr.xvx += s.xtx - xzl * chol.solve(xzl.transpose());
    xvy += s.xty - xzl * chol.solve(lzy);
    yvy += s.yty - lzy.dot(chol.solve(lzy));
    logdet += 2.0 * chol.matrixLLT().diagonal().array().log().sum();
    pr.inner.push_back(std::move(chol));
  }
  Eigen::LDLT<Eigen::MatrixXd> fixed(pr.xvx);
  if (fixed.info() != Eigen::Success) return pr;
  pr.beta = fixed.solve(xvy);
  pr.rss = std::max(yvy - pr.beta.dot(xvy), 1e-300);
  if (method == LmmMethod::ml) {
    pr.sigma2 = pr.rss / n_obs;
    pr.loglik = -0.5 * n_obs * (kLog2Pi + std::log(pr.sigma2) + 1.0) - 0.5 * logdet;
  } else {
    const double dof = n_obs - p;
    pr.sigma2 = pr.rss / dof;
    const double logdet_x = fixed.vectorD().array().abs().log().sum();
    pr.loglik = -0.5 * dof * (kLog2Pi + std::log(pr.sigma2) + 1.0) - 0.5 * logdet - 0.5 * logdet_x;
  }
  pr.ok = std::isfinite(pr.loglik);
  return pr;
}

// Maps the optimizer vector onto L.
struct Parametrization {
  RandomEffectsStructure structure;
  int q;
  double lower;  // bound on log diagonal entries
  double upper;

  int size() const { return structure == RandomEffectsStructure::diagonal ? q : q * (q + 1) / 2; }

  Eigen::MatrixXd factor(const Eigen::VectorXd& eta) const {
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(q, q);
    for (int k = 0; k < q; ++k) l(k, k) = std::exp(eta[k]);
    if (structure == RandomEffectsStructure::unstructured) {
      int idx = q;
      for (int r = 1; r < q; ++r) {
        for (int c = 0; c < r; ++c) l(r, c) = eta[idx++];
      }
    }
    return l;
  }

  bool bounded(int k) const { return k < q; }

  Eigen::VectorXd clamp(Eigen::VectorXd eta) const {
    for (int k = 0; k < q; ++k) eta[k] = std::clamp(eta[k], lower, upper);
    return eta;
  }
};

// d loglik / d eta for the diagonal ML case (analytic).
Eigen::VectorXd diagonal_ml_gradient(const std::vector<Sufficient>& stats, const Eigen::MatrixXd& l,
                                     const Profile& pr, double n_obs) {
  const int q = static_cast<int>(l.rows());
  Eigen::VectorXd d_loglik = Eigen::VectorXd::Zero(q);
  Eigen::VectorXd quad = Eigen::VectorXd::Zero(q);
  Eigen::VectorXd trace = Eigen::VectorXd::Zero(q);
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const auto& s = stats[i];
    const auto& chol = pr.inner[i];
    const Eigen::VectorXd zte = s.zty - s.xtz.transpose() * pr.beta;
    const Eigen::MatrixXd ztzl = s.ztz * l;
    const Eigen::VectorXd zve = zte - ztzl * chol.solve(l.transpose() * zte);
    const Eigen::MatrixXd zvz = s.ztz - ztzl * chol.solve(ztzl.transpose());
    quad += zve.array().square().matrix();
    trace += zvz.diagonal();
  }
  for (int k = 0; k < q; ++k) {
    const double d = l(k, k) * l(k, k);
    const double dl_dd = 0.5 * n_obs * quad[k] / pr.rss - 0.5 * trace[k];
    d_loglik[k] = 2.0 * d * dl_dd;
  }
  return d_loglik;
}

struct Objective {
  const std::vector<Sufficient>& stats;
  const Parametrization& param;
  int p;
  double n_obs;
  LmmMethod method;

  Profile eval(const Eigen::VectorXd& eta) const {
    return profile(stats, param.factor(eta), p, n_obs, method);
  }

  double loglik(const Eigen::VectorXd& eta) const { return eval(eta).loglik; }

  Eigen::VectorXd gradient(const Eigen::VectorXd& eta, const Profile& pr) const {
    if (param.structure == RandomEffectsStructure::diagonal && method == LmmMethod::ml) {
      return diagonal_ml_gradient(stats, param.factor(eta), pr, n_obs);
    }
    const double h = 1e-6;
    Eigen::VectorXd g(eta.size());
    for (Eigen::Index k = 0; k < eta.size(); ++k) {
      Eigen::VectorXd a = eta, b = eta;
      a[k] += h;
      b[k] -= h;
      g[k] = (loglik(a) - loglik(b)) / (2.0 * h);
    }
    return g;
  }
};

Eigen::MatrixXd psd_square_root(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

std::vector<Eigen::VectorXd> blups_for(const std::vector<Sufficient>& stats, const Eigen::MatrixXd& l,
                                       const Eigen::VectorXd& beta) {
  const int q = static_cast<int>(l.rows());
  std::vector<Eigen::VectorXd> out;
  out.reserve(stats.size());
  for (const auto& s : stats) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(q, q) + l.transpose() * s.ztz * l;
    const Eigen::VectorXd zte = s.zty - s.xtz.transpose() * beta;
    out.push_back(l * m.llt().solve(l.transpose() * zte));
  }
  return out;
}

}  // namespace

std::size_t LmmProblem::n_obs() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += static_cast<std::size_t>(b.y.size());
  return n;
}

void LmmProblem::validate() const {
  if (p <= 0 || q <= 0) throw Error(ErrorKind::validation, "LMM needs p > 0 and q > 0");
  if (blocks.empty()) throw Error(ErrorKind::validation, "LMM has no blocks");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.x.cols() != p || b.z.cols() != q || b.x.rows() != b.y.size() || b.z.rows() != b.y.size()) {
      std::ostringstream os;
      os << "LMM block " << i << " has inconsistent dimensions";
      throw Error(ErrorKind::validation, os.str());
    }
    if (!b.x.allFinite() || !b.z.allFinite() || !b.y.allFinite()) {
      std::ostringstream os;
      os << "LMM block " << i << " has non-finite entries";
      throw Error(ErrorKind::validation, os.str());
    }
  }
  if (n_obs() <= static_cast<std::size_t>(p + q)) {
    throw Error(ErrorKind::validation, "LMM needs more observations than p + q");
  }
}

LmmFit lmm_fit_ml(const LmmProblem& problem, const Eigen::VectorXd& init_theta, const LmmOptions& opts) {
  problem.validate();
  const auto stats = sufficient_statistics(problem);
  const int q = problem.q;
  const double n_obs = static_cast<double>(problem.n_obs());
  const Parametrization param{opts.structure, q, std::log(opts.relative_floor), std::log(1e6)};
  const Objective obj{stats, param, problem.p, n_obs, opts.method};

  Eigen::VectorXd eta = Eigen::VectorXd::Zero(param.size());
  if (init_theta.size() == q) {
    // Start from the requested sds relative to the sigma implied by L = 0.
    const Profile base = obj.eval(Eigen::VectorXd::Constant(param.size(), param.lower));
    const double sigma = std::sqrt(base.sigma2);
    for (int k = 0; k < q; ++k) {
      eta[k] = std::log(std::max(init_theta[k], 1e-300) / sigma);
    }
  }
  eta = param.clamp(eta);

  LmmFit fit;
  fit.method = opts.method;
  fit.structure = opts.structure;

  Profile pr = obj.eval(eta);
  if (!pr.ok) throw Error(ErrorKind::convergence, "LMM objective undefined at the starting point");
  Eigen::VectorXd grad = obj.gradient(eta, pr);
  const int m = param.size();
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(m, m);
  fit.loglik_trace.push_back(pr.loglik);

  auto projected = [&](const Eigen::VectorXd& g, const Eigen::VectorXd& at) {
    // Ascent direction components that push into an active bound are dropped.
    Eigen::VectorXd out = g;
    for (int k = 0; k < m; ++k) {
      if (!param.bounded(k)) continue;
      if ((at[k] <= param.lower && g[k] < 0.0) || (at[k] >= param.upper && g[k] > 0.0)) out[k] = 0.0;
    }
    return out;
  };

  int stalled = 0;  // consecutive steps with no resolvable gain
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    const Eigen::VectorXd g = projected(grad, eta);
    const double scale = std::max(1.0, std::abs(pr.loglik));
    if (g.lpNorm<Eigen::Infinity>() < opts.grad_tol * scale) {
      fit.converged = true;
      break;
    }
    if (stalled >= 3) {
      fit.converged = g.lpNorm<Eigen::Infinity>() < 1e-6 * scale;
      break;
    }
    Eigen::VectorXd dir = hinv * g;
    for (int k = 0; k < m; ++k) {
      if (g[k] == 0.0) dir[k] = 0.0;
    }
    if (dir.dot(g) <= 0.0) {
      hinv.setIdentity();
      dir = g;
    }
    const double max_step = dir.lpNorm<Eigen::Infinity>();
    double t = max_step > 3.0 ? 3.0 / max_step : 1.0;

    bool accepted = false;
    Eigen::VectorXd eta_new;
    Profile pr_new;
    Eigen::VectorXd grad_new;
    for (int ls = 0; ls < 50; ++ls, t *= 0.5) {
      eta_new = param.clamp(eta + t * dir);
      pr_new = obj.eval(eta_new);
      if (!pr_new.ok) continue;
      const double gain = g.dot(eta_new - eta);
      if (pr_new.loglik >= pr.loglik + 1e-4 * gain) {
        grad_new = obj.gradient(eta_new, pr_new);
        accepted = true;
        break;
      }
      // Below the resolution of the objective: accept if the gradient shrinks.
      if (pr_new.loglik >= pr.loglik - 1e-13 * std::abs(pr.loglik)) {
        grad_new = obj.gradient(eta_new, pr_new);
        if (projected(grad_new, eta_new).norm() < g.norm() && pr_new.loglik >= pr.loglik) {
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) {
      if (!hinv.isIdentity()) {
        hinv.setIdentity();
        continue;
      }
      fit.converged = g.lpNorm<Eigen::Infinity>() < 1e-6 * scale;
      break;
    }
    const Eigen::VectorXd s = eta_new - eta;
    const Eigen::VectorXd yv = -(grad_new - grad);  // gradient of -loglik
    const double sy = s.dot(yv);
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(m, m);
      hinv = (id - rho * s * yv.transpose()) * hinv * (id - rho * yv * s.transpose()) + rho * s * s.transpose();
    }
    stalled = pr_new.loglik - pr.loglik <= 1e-14 * std::abs(pr.loglik) ? stalled + 1 : 0;
    eta = eta_new;
    pr = std::move(pr_new);
    grad = grad_new;
    ++fit.n_iter;
    fit.loglik_trace.push_back(pr.loglik);
  }

  // Newton polish on the free coordinates, hessian from differenced gradients.
  // Steps are kept only while the projected gradient keeps shrinking.
  for (int polish = 0; polish < 6; ++polish) {
    const Eigen::VectorXd g = projected(grad, eta);
    std::vector<int> free;
    for (int k = 0; k < m; ++k) {
      if (!param.bounded(k) || (eta[k] > param.lower && eta[k] < param.upper)) free.push_back(k);
    }
    if (free.empty() || g.lpNorm<Eigen::Infinity>() == 0.0) break;
    const int f = static_cast<int>(free.size());
    Eigen::MatrixXd h(f, f);
    bool ok = true;
    for (int a = 0; a < f && ok; ++a) {
      const double step = 1e-5;
      Eigen::VectorXd up = eta, dn = eta;
      up[free[a]] += step;
      dn[free[a]] -= step;
      const Profile pu = obj.eval(up), pd = obj.eval(dn);
      ok = pu.ok && pd.ok;
      if (!ok) break;
      const Eigen::VectorXd gu = obj.gradient(up, pu), gd = obj.gradient(dn, pd);
      for (int b = 0; b < f; ++b) h(b, a) = (gu[free[b]] - gd[free[b]]) / (2.0 * step);
    }
    if (!ok) break;
    h = 0.5 * (h + h.transpose());
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(-h);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
    Eigen::VectorXd gf(f);
    for (int a = 0; a < f; ++a) gf[a] = g[free[a]];
    const Eigen::VectorXd delta = ldlt.solve(gf);
    Eigen::VectorXd eta_new = eta;
    for (int a = 0; a < f; ++a) eta_new[free[a]] += delta[a];
    eta_new = param.clamp(eta_new);
    Profile pr_new = obj.eval(eta_new);
    if (!pr_new.ok || pr_new.loglik < pr.loglik - 1e-12 * std::abs(pr.loglik)) break;
    const Eigen::VectorXd grad_new = obj.gradient(eta_new, pr_new);
    if (projected(grad_new, eta_new).norm() >= g.norm()) break;
    eta = eta_new;
    pr = std::move(pr_new);
    grad = grad_new;
    fit.converged = fit.converged || projected(grad, eta).lpNorm<Eigen::Infinity>() <
                                         opts.grad_tol * std::max(1.0, std::abs(pr.loglik));
    if (delta.lpNorm<Eigen::Infinity>() < 1e-13) break;
  }

  // Variance components drifting to zero: snap to the floor when that does
  // not lower the likelihood.
  fit.at_boundary.assign(q, false);
  for (int k = 0; k < q; ++k) {
    if (eta[k] > std::log(1e-2)) continue;
    Eigen::VectorXd snapped = eta;
    snapped[k] = param.lower;
    Profile ps = obj.eval(snapped);
    if (ps.ok && ps.loglik >= pr.loglik - 1e-10 * (1.0 + std::abs(pr.loglik))) {
      eta = snapped;
      pr = std::move(ps);
    }
  }
  for (int k = 0; k < q; ++k) fit.at_boundary[k] = eta[k] <= param.lower + 1e-9;

  const Eigen::MatrixXd l = param.factor(eta);
  fit.relative_factor = l;
  fit.beta_fixed = pr.beta;
  fit.sigma2 = pr.sigma2;
  fit.loglik = pr.loglik;
  fit.cov_fixed = pr.sigma2 * pr.xvx.ldlt().solve(Eigen::MatrixXd::Identity(problem.p, problem.p));
  fit.se_fixed = fit.cov_fixed.diagonal().cwiseMax(0.0).cwiseSqrt();
  fit.sigma_random = pr.sigma2 * l * l.transpose();
  fit.theta = fit.sigma_random.diagonal().cwiseSqrt();
  fit.blups = blups_for(stats, l, pr.beta);
  return fit;
}

std::vector<Eigen::VectorXd> lmm_posterior_modes(const LmmFit& fit, const LmmProblem& problem) {
  return blups_for(sufficient_statistics(problem), fit.relative_factor, fit.beta_fixed);
}

double lmm_loglik(const LmmProblem& problem, const Eigen::VectorXd& beta, double sigma2,
                  const Eigen::MatrixXd& sigma_random) {
  problem.validate();
  const auto stats = sufficient_statistics(problem);
  const int q = problem.q;
  const Eigen::MatrixXd l = psd_square_root(sigma_random / sigma2);
  double loglik = -0.5 * static_cast<double>(problem.n_obs()) * (kLog2Pi + std::log(sigma2));
  for (const auto& s : stats) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(q, q) + l.transpose() * s.ztz * l;
    Eigen::LLT<Eigen::MatrixXd> chol(m);
    const double ete = s.yty - 2.0 * beta.dot(s.xty) + beta.dot(s.xtx * beta);
    const Eigen::VectorXd lze = l.transpose() * (s.zty - s.xtz.transpose() * beta);
    const double quad = ete - lze.dot(chol.solve(lze));
    loglik -= std::log(chol.matrixLLT().diagonal().array().square().prod()) * 0.5;
    loglik -= 0.5 * quad / sigma2;
  }
  return loglik;
}

}  // namespace axisfit
