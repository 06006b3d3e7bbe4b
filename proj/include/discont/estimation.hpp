#ifndef DISCONT_ESTIMATION_HPP
#define DISCONT_ESTIMATION_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "discont/builders.hpp"
#include "discont/panel.hpp"
#include "discont/statespace.hpp"

namespace discont {

struct OptimOptions {
  int max_iter = 200;
  double grad_tol = 1e-6;        // max-norm of the log-variance gradient
  double rel_tol = 1e-10;        // relative objective decrease
  double fd_step = 1e-6;         // central-difference step
  double theta_min = -30.0;      // floor on the log variances
  double boundary_threshold = -15.0;  // flat region: the variance is effectively zero
  int num_starts = 5;            // deterministic spread around the data heuristic
};

struct FitResult {
  Eigen::VectorXd theta;         // log variances at the optimum
  double loglik = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::vector<bool> at_boundary; // per component of theta
  int start_index = -1;          // which start produced the optimum
};

namespace detail {

// Negative diffuse log-likelihood with the floor applied; filter failures and
// non-finite values map to +infinity so the line search backs off.
inline double neg_loglik(const StateSpaceModel& model, const Eigen::MatrixXd& obs,
                         Eigen::VectorXd theta, double theta_min) {
  for (int i = 0; i < theta.size(); ++i) theta[i] = std::max(theta[i], theta_min);
  try {
    const double ll = diffuse_loglik(model, obs, theta);
    return std::isfinite(ll) ? -ll : std::numeric_limits<double>::infinity();
  } catch (const FilterError&) {
    return std::numeric_limits<double>::infinity();
  }
}

inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (int i = 0; i < x.size(); ++i) {
    const double h = step * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// BFGS with a bracketing-free Wolfe line search (backtracking with one
// expansion pass). Minimizes f from x0; returns the best point found.
struct BfgsOutcome {
  Eigen::VectorXd x;
  double fval = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

inline BfgsOutcome bfgs(const std::function<double(const Eigen::VectorXd&)>& f,
                        const Eigen::VectorXd& x0, const OptimOptions& opt) {
  const int n = static_cast<int>(x0.size());
  BfgsOutcome out;
  out.x = x0;
  for (int i = 0; i < n; ++i) out.x[i] = std::max(out.x[i], opt.theta_min);
  out.fval = f(out.x);
  ++out.evaluations;
  if (!std::isfinite(out.fval)) return out;

  auto grad = [&](const Eigen::VectorXd& x) {
    out.evaluations += 2 * n;
    return fd_gradient(f, x, opt.fd_step);
  };

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd g = grad(out.x);
  const double c1 = 1e-4, c2 = 0.9;

  for (int it = 0; it < opt.max_iter; ++it) {
    out.iterations = it + 1;
    if (g.cwiseAbs().maxCoeff() < opt.grad_tol) {
      out.converged = true;
      break;
    }
    Eigen::VectorXd d = -(H * g);
    double slope = g.dot(d);
    if (!(slope < 0.0)) {  // reset on a non-descent direction
      H.setIdentity();
      d = -g;
      slope = g.dot(d);
      if (!(slope < 0.0)) break;
    }

    // Wolfe line search
    double alpha = 1.0, f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new, g_new;
    bool ok = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = out.x + alpha * d;
      for (int i = 0; i < n; ++i) x_new[i] = std::max(x_new[i], opt.theta_min);
      f_new = f(x_new);
      ++out.evaluations;
      if (std::isfinite(f_new) && f_new <= out.fval + c1 * alpha * slope) {
        g_new = grad(x_new);
        if (g_new.dot(d) >= c2 * slope) {
          ok = true;
          break;
        }
        // curvature not yet satisfied: try a longer step once, else accept
        if (alpha < 4.0 && ls == 0) {
          alpha *= 2.0;
          continue;
        }
        ok = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!ok) break;  // line search failed; gradient is the convergence verdict

    const Eigen::VectorXd s = x_new - out.x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    const double f_old = out.fval;
    out.x = x_new;
    out.fval = f_new;
    g = g_new;
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      const double rho = 1.0 / sy;
      H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) +
          rho * s * s.transpose();
    } else {
      H.setIdentity();
    }
    if (std::abs(f_old - f_new) <= opt.rel_tol * (1.0 + std::abs(f_old))) {
      out.converged = g.cwiseAbs().maxCoeff() < 1e-3;
      break;
    }
  }
  if (!out.converged && g.cwiseAbs().maxCoeff() < opt.grad_tol) out.converged = true;
  return out;
}

// Data-driven starting point: first-difference variance split between the
// observation noise and the process noise, on the log-variance scale.
inline Eigen::VectorXd heuristic_start(const StateSpaceModel& model,
                                       const Eigen::MatrixXd& obs) {
  const int p = static_cast<int>(obs.rows());
  const int T = static_cast<int>(obs.cols());
  double vsum = 0.0;
  int vcnt = 0;
  for (int k = 0; k < p; ++k) {
    for (int t = 1; t < T; ++t) {
      const double a = obs(k, t), b = obs(k, t - 1);
      if (std::isfinite(a) && std::isfinite(b)) {
        const double d = a - b;
        vsum += d * d;
        ++vcnt;
      }
    }
  }
  const double v1 = vcnt > 0 ? vsum / vcnt : 1.0;
  const double scale = model.obs_scale.mean();

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(model.num_theta);
  std::vector<bool> is_obs(model.num_theta, false);
  for (int k = 0; k < model.num_obs; ++k) {
    if (model.obs_theta[k] >= 0) is_obs[model.obs_theta[k]] = true;
    if (!model.obs_theta_post.empty() && model.obs_theta_post[k] >= 0)
      is_obs[model.obs_theta_post[k]] = true;
  }
  const double obs_guess = std::log(std::max(0.5 * v1 / std::max(scale, 1e-300), 1e-8));
  const double state_guess = std::log(std::max(v1, 1e-8)) - 6.0;
  for (int i = 0; i < model.num_theta; ++i) theta[i] = is_obs[i] ? obs_guess : state_guess;
  return theta;
}

}  // namespace detail

// Maximum-likelihood fit of the log variances via BFGS with a central
// finite-difference gradient and a deterministic multi-start around the
// data-driven initial point.
inline FitResult fit_mle(const StateSpaceModel& model, const Eigen::MatrixXd& obs,
                         const OptimOptions& opt = {}) {
  model.validate();
  if (model.num_theta == 0)
    throw std::invalid_argument("model has no free hyperparameters");

  auto f = [&](const Eigen::VectorXd& th) {
    return detail::neg_loglik(model, obs, th, opt.theta_min);
  };

  static const double kOffsets[] = {0.0, -2.0, 2.0, -4.0, 4.0};
  const Eigen::VectorXd base = detail::heuristic_start(model, obs);

  FitResult best;
  for (int s = 0; s < opt.num_starts; ++s) {
    const double off = kOffsets[s % 5] * (1 + s / 5);
    detail::BfgsOutcome o = detail::bfgs(f, base.array() + off, opt);
    best.evaluations += o.evaluations;
    if (-o.fval > best.loglik ||
        (best.start_index < 0 && std::isfinite(o.fval))) {
      best.theta = o.x;
      best.loglik = -o.fval;
      best.iterations = o.iterations;
      best.converged = o.converged;
      best.start_index = s;
    }
  }
  if (best.start_index < 0)
    throw std::runtime_error("likelihood could not be evaluated from any start");
  best.at_boundary.assign(model.num_theta, false);
  for (int i = 0; i < model.num_theta; ++i)
    best.at_boundary[i] = best.theta[i] <= opt.boundary_threshold;
  return best;
}

// Max-norm of the central-difference likelihood gradient, for reporting the
// first-order condition at a returned optimum.
inline double gradient_maxnorm(const StateSpaceModel& model, const Eigen::MatrixXd& obs,
                               const Eigen::VectorXd& theta, double step = 1e-5) {
  auto f = [&](const Eigen::VectorXd& th) {
    return detail::neg_loglik(model, obs, th, -1e300);
  };
  return detail::fd_gradient(f, theta, step).cwiseAbs().maxCoeff();
}

// One estimated survey discontinuity per modelled series, with the flag
// convention *: |d/se| > 1.96, **: > 2.576.
struct Discontinuity {
  Eigen::VectorXd estimate;
  Eigen::VectorXd se;
  std::vector<std::string> flag;
  int period = -1;  // period the coefficients were read at
};

inline std::string significance_flag(double est, double se) {
  if (!(se > 0.0)) return "";
  const double z = std::abs(est / se);
  if (z > 2.576) return "**";
  if (z > 1.96) return "*";
  return "";
}

// Reads the smoothed intervention coefficients (and their standard errors)
// at a given period; defaults to the last period, where the restriction is
// fully binding and all information has accrued.
inline Discontinuity extract_discontinuities(const BuiltModel& bm,
                                             const FilterSmootherOutput& fo,
                                             int period = -1) {
  const int T = static_cast<int>(fo.smoothed_mean.size());
  if (T == 0) throw std::invalid_argument("smoother output is empty");
  int t = period < 0 ? T - 1 : period;
  if (t < 0 || t >= T) throw std::invalid_argument("period out of range");

  Discontinuity d;
  d.period = t;
  d.estimate = fo.smoothed_mean[t].segment(bm.coef_offset, bm.coef_count);
  d.se.resize(bm.coef_count);
  for (int i = 0; i < bm.coef_count; ++i) {
    const double v = fo.smoothed_cov[t](bm.coef_offset + i, bm.coef_offset + i);
    d.se[i] = v > 0.0 ? std::sqrt(v) : 0.0;
    d.flag.push_back(significance_flag(d.estimate[i], d.se[i]));
  }
  return d;
}

// Model-free before/after comparison at the redesign: the difference of the
// proportions in the adjacent periods, with the two sampling variances added.
// Uses the supplied design-based standard errors when present and a binomial
// approximation otherwise.
inline Discontinuity naive_difference(const CompositionalPanel& panel) {
  panel.validate();
  const int K = panel.num_categories();
  const int tb = panel.redesign_period - 1;
  const int ta = panel.redesign_period;

  Discontinuity d;
  d.period = ta;
  d.estimate.resize(K);
  d.se.resize(K);
  for (int k = 0; k < K; ++k) {
    d.estimate[k] = panel.proportions(ta, k) - panel.proportions(tb, k);
    double vb, va;
    if (panel.obs_se) {
      vb = (*panel.obs_se)(tb, k) * (*panel.obs_se)(tb, k);
      va = (*panel.obs_se)(ta, k) * (*panel.obs_se)(ta, k);
    } else {
      const double u = panel.unit_total;
      vb = panel.proportions(tb, k) * (u - panel.proportions(tb, k)) /
           panel.sample_sizes[tb];
      va = panel.proportions(ta, k) * (u - panel.proportions(ta, k)) /
           panel.sample_sizes[ta];
    }
    d.se[k] = std::sqrt(vb + va);
    d.flag.push_back(significance_flag(d.estimate[k], d.se[k]));
  }
  return d;
}

}  // namespace discont

#endif
