#ifndef DISCONT_STATESPACE_HPP
#define DISCONT_STATESPACE_HPP

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace discont {

struct FilterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Linear Gaussian state-space model with time-varying measurement design
// and diagonal noise covariances:
//
//   y_t = Z_t a_t + eps_t,   Cov(eps_t) = Diag(obs variances at t)
//   a_t = T a_{t-1} + eta_t, Cov(eta_t) = Diag(state variances)
//
// Each diagonal variance entry is either tied to a component of the
// hyperparameter vector theta (as exp(theta_i), a log-variance) or fixed.
// Observation entries carry an extra per-period multiplicative scale,
// which holds 1/n_t or squared user-supplied standard errors.
struct StateSpaceModel {
  int num_obs = 0;
  int num_states = 0;
  std::vector<Eigen::MatrixXd> design;   // per period, p x m
  Eigen::MatrixXd transition;            // m x m, time invariant

  Eigen::MatrixXd obs_scale;             // T x p multiplicative scale
  std::vector<int> obs_theta;            // p entries, theta index or -1 (fixed)
  std::vector<int> obs_theta_post;       // when nonempty, used from obs_split on
  Eigen::VectorXd obs_fixed;             // p, used where tie < 0
  int obs_split = -1;                    // first period using the post ties

  std::vector<int> state_theta;          // m entries, theta index or -1 (fixed)
  Eigen::VectorXd state_fixed;           // m

  std::vector<bool> diffuse;             // m, diffuse initial states
  Eigen::VectorXd init_mean;             // prior mean of a_1 (non-diffuse part)
  Eigen::MatrixXd init_cov;              // prior covariance of a_1 (non-diffuse part)

  int num_theta = 0;

  int num_periods() const { return static_cast<int>(design.size()); }

  double obs_variance(int t, int k, const Eigen::VectorXd& theta) const {
    int tie = obs_theta[k];
    if (!obs_theta_post.empty() && obs_split >= 0 && t >= obs_split)
      tie = obs_theta_post[k];
    const double base = tie >= 0 ? std::exp(theta[tie]) : obs_fixed[k];
    return base * obs_scale(t, k);
  }

  Eigen::VectorXd obs_variances(int t, const Eigen::VectorXd& theta) const {
    Eigen::VectorXd v(num_obs);
    for (int k = 0; k < num_obs; ++k) v[k] = obs_variance(t, k, theta);
    return v;
  }

  Eigen::VectorXd state_variances(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd v(num_states);
    for (int i = 0; i < num_states; ++i)
      v[i] = state_theta[i] >= 0 ? std::exp(theta[state_theta[i]]) : state_fixed[i];
    return v;
  }

  Eigen::MatrixXd obs_noise_cov(int t, const Eigen::VectorXd& theta) const {
    return obs_variances(t, theta).asDiagonal();
  }
  Eigen::MatrixXd state_noise_cov(const Eigen::VectorXd& theta) const {
    return state_variances(theta).asDiagonal();
  }

  void validate() const {
    if (num_obs <= 0 || num_states <= 0)
      throw std::invalid_argument("model dimensions must be positive");
    if (design.empty()) throw std::invalid_argument("model has no periods");
    for (const auto& Z : design)
      if (Z.rows() != num_obs || Z.cols() != num_states)
        throw std::invalid_argument("design matrix has wrong shape");
    if (transition.rows() != num_states || transition.cols() != num_states)
      throw std::invalid_argument("transition matrix has wrong shape");
    if (static_cast<int>(obs_theta.size()) != num_obs ||
        static_cast<int>(state_theta.size()) != num_states)
      throw std::invalid_argument("hyperparameter map does not cover the model");
    if (obs_scale.rows() != num_periods() || obs_scale.cols() != num_obs)
      throw std::invalid_argument("observation scale matrix has wrong shape");
    auto check_tie = [this](int tie, double fixed) {
      if (tie >= num_theta)
        throw std::invalid_argument("hyperparameter tie out of range");
      if (tie < 0 && !(fixed >= 0.0))
        throw std::invalid_argument("fixed variance entry must be >= 0");
    };
    for (int k = 0; k < num_obs; ++k) check_tie(obs_theta[k], obs_fixed[k]);
    if (!obs_theta_post.empty())
      for (int k = 0; k < num_obs; ++k) check_tie(obs_theta_post[k], obs_fixed[k]);
    for (int i = 0; i < num_states; ++i) check_tie(state_theta[i], state_fixed[i]);
    if (static_cast<int>(diffuse.size()) != num_states)
      throw std::invalid_argument("diffuse mask has wrong length");
    if (init_mean.size() != num_states || init_cov.rows() != num_states)
      throw std::invalid_argument("initial state prior has wrong shape");
  }

  // Sensible defaults once dimensions and design are set: everything diffuse,
  // zero fixed variances, unit observation scale.
  void init_defaults() {
    obs_scale = Eigen::MatrixXd::Ones(num_periods(), num_obs);
    obs_theta.assign(num_obs, -1);
    obs_fixed = Eigen::VectorXd::Zero(num_obs);
    state_theta.assign(num_states, -1);
    state_fixed = Eigen::VectorXd::Zero(num_states);
    diffuse.assign(num_states, true);
    init_mean = Eigen::VectorXd::Zero(num_states);
    init_cov = Eigen::MatrixXd::Zero(num_states, num_states);
  }
};

struct FilterSmootherOutput {
  std::vector<Eigen::VectorXd> filtered_mean;   // a_{t|t}
  std::vector<Eigen::MatrixXd> filtered_cov;    // finite part of P_{t|t}
  std::vector<Eigen::VectorXd> smoothed_mean;
  std::vector<Eigen::MatrixXd> smoothed_cov;
  std::vector<Eigen::VectorXd> innovations;     // y_t - Z_t a_{t|t-1}
  std::vector<Eigen::MatrixXd> innovation_cov;  // finite part of Z P Z' + H
  double loglik = std::numeric_limits<double>::quiet_NaN();
  int diffuse_periods = 0;        // periods consumed before the diffuse prior resolved
  int diffuse_element_count = 0;  // scalar updates with nonzero diffuse variance

  // Per-element filtering quantities kept for the smoother backward pass.
  std::vector<Eigen::VectorXd> pred_mean;       // a_{t|t-1}
  std::vector<Eigen::MatrixXd> pred_cov;        // P*_{t|t-1}
  std::vector<Eigen::MatrixXd> pred_cov_inf;    // P_inf,{t|t-1}
  Eigen::MatrixXd uni_v, uni_fstar, uni_finf;   // p x T
  std::vector<Eigen::MatrixXd> uni_kstar, uni_kinf;  // per t, m x p
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> observed;  // p x T
};

namespace detail {

inline void symmetrize(Eigen::MatrixXd& P) {
  P = 0.5 * (P + P.transpose()).eval();
}

}  // namespace detail

// Kalman filter with exact diffuse initialization, processing the elements
// of each observation vector one at a time (valid because the observation
// noise covariance is diagonal). Returns filtered means/covariances, the
// exact diffuse log-likelihood, and the stored per-element quantities the
// fixed-interval smoother consumes. With store=false only the likelihood
// path runs.
inline FilterSmootherOutput kalman_filter(const StateSpaceModel& model,
                                          const Eigen::MatrixXd& observations,
                                          const Eigen::VectorXd& theta,
                                          bool store = true) {
  model.validate();
  const int p = model.num_obs;
  const int m = model.num_states;
  const int T = model.num_periods();
  if (observations.rows() != p || observations.cols() != T)
    throw std::invalid_argument("observation matrix must be p x T");
  if (theta.size() != model.num_theta)
    throw std::invalid_argument("theta has wrong length");
  for (int i = 0; i < theta.size(); ++i)
    if (!std::isfinite(theta[i]))
      throw std::invalid_argument("non-finite hyperparameter");

  constexpr double kLog2Pi = 1.8378770664093454836;
  const double inf_tol = 1e-8;       // P_inf collapse / F_inf activity threshold
  const double singular_tol = 1e-12;

  FilterSmootherOutput out;
  if (store) {
    out.filtered_mean.resize(T);
    out.filtered_cov.resize(T);
    out.innovations.resize(T);
    out.innovation_cov.resize(T);
    out.pred_mean.resize(T);
    out.pred_cov.resize(T);
    out.pred_cov_inf.resize(T);
    out.uni_v.setZero(p, T);
    out.uni_fstar.setZero(p, T);
    out.uni_finf.setZero(p, T);
    out.uni_kstar.assign(T, Eigen::MatrixXd::Zero(m, p));
    out.uni_kinf.assign(T, Eigen::MatrixXd::Zero(m, p));
    out.observed.setConstant(p, T, false);
  }

  Eigen::VectorXd a = model.init_mean;
  Eigen::MatrixXd Pstar = model.init_cov;
  Eigen::MatrixXd Pinf = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i)
    if (model.diffuse[i]) Pinf(i, i) = 1.0;
  const bool any_diffuse = Pinf.diagonal().sum() > 0.0;

  const Eigen::VectorXd state_var = model.state_variances(theta);
  const Eigen::MatrixXd& Tr = model.transition;

  double loglik = 0.0;
  bool diffuse_active = any_diffuse;
  out.diffuse_periods = 0;

  Eigen::VectorXd K(m), Kinf(m);
  for (int t = 0; t < T; ++t) {
    const Eigen::MatrixXd& Z = model.design[t];
    if (store) {
      out.pred_mean[t] = a;
      out.pred_cov[t] = Pstar;
      out.pred_cov_inf[t] = Pinf;
      out.innovations[t] = observations.col(t) - Z * a;
      Eigen::MatrixXd F = Z * Pstar * Z.transpose();
      F.diagonal() += model.obs_variances(t, theta);
      out.innovation_cov[t] = F;
    }
    if (diffuse_active) ++out.diffuse_periods;

    for (int k = 0; k < p; ++k) {
      const double yk = observations(k, t);
      if (std::isnan(yk)) continue;  // treated as missing
      if (!std::isfinite(yk))
        throw FilterError("non-finite observation at period index " +
                          std::to_string(t + 1));
      const auto z = Z.row(k);
      const double h = model.obs_variance(t, k, theta);
      if (!(h >= 0.0) || !std::isfinite(h))
        throw FilterError("invalid observation variance at period index " +
                          std::to_string(t + 1));
      const double v = yk - z.dot(a);
      K.noalias() = Pstar * z.transpose();
      const double fstar = z.dot(K) + h;

      double finf = 0.0;
      if (diffuse_active) {
        Kinf.noalias() = Pinf * z.transpose();
        finf = z.dot(Kinf);
        if (finf < inf_tol) finf = 0.0;
      }

      if (store) {
        out.observed(k, t) = true;
        out.uni_v(k, t) = v;
        out.uni_fstar(k, t) = fstar;
        out.uni_finf(k, t) = finf;
        out.uni_kstar[t].col(k) = K;
        if (diffuse_active) out.uni_kinf[t].col(k) = Kinf;
      }

      if (finf > 0.0) {
        ++out.diffuse_element_count;
        a.noalias() += Kinf * (v / finf);
        Pstar.noalias() += Kinf * Kinf.transpose() * (fstar / (finf * finf));
        Pstar.noalias() -= (K * Kinf.transpose() + Kinf * K.transpose()) / finf;
        Pinf.noalias() -= Kinf * Kinf.transpose() / finf;
        detail::symmetrize(Pstar);
        detail::symmetrize(Pinf);
        loglik -= 0.5 * (kLog2Pi + std::log(finf));
      } else {
        if (fstar < singular_tol * std::max(1.0, std::abs(z.dot(K))))
          throw FilterError("innovation variance numerically singular at period index " +
                            std::to_string(t + 1));
        a.noalias() += K * (v / fstar);
        if (store) {
          // Joseph-stabilized form for the covariances that feed smoothed
          // standard errors.
          Eigen::MatrixXd L = Eigen::MatrixXd::Identity(m, m);
          L.noalias() -= (K / fstar) * z;
          Pstar = (L * Pstar * L.transpose()).eval();
          Pstar.noalias() += (K / fstar) * h * (K / fstar).transpose();
        } else {
          Pstar.noalias() -= K * K.transpose() / fstar;
        }
        detail::symmetrize(Pstar);
        loglik -= 0.5 * (kLog2Pi + std::log(fstar) + v * v / fstar);
      }
    }

    if (diffuse_active && Pinf.cwiseAbs().maxCoeff() < inf_tol) diffuse_active = false;

    if (store) {
      out.filtered_mean[t] = a;
      out.filtered_cov[t] = Pstar;
    }

    if (t + 1 < T) {
      a = (Tr * a).eval();
      Pstar = (Tr * Pstar * Tr.transpose()).eval();
      Pstar.diagonal() += state_var;
      detail::symmetrize(Pstar);
      if (diffuse_active) {
        Pinf = (Tr * Pinf * Tr.transpose()).eval();
        detail::symmetrize(Pinf);
      } else {
        Pinf.setZero();
      }
    }
  }

  if (diffuse_active)
    throw FilterError("diffuse initial conditions not resolved by the end of the series");

  out.loglik = loglik;
  return out;
}

inline double diffuse_loglik(const StateSpaceModel& model,
                             const Eigen::MatrixXd& observations,
                             const Eigen::VectorXd& theta) {
  return kalman_filter(model, observations, theta, /*store=*/false).loglik;
}

// Fixed-interval smoother, univariate backward recursions with the exact
// diffuse extension (two-vector r and three-matrix N during the diffuse
// phase). Fills smoothed_mean/smoothed_cov in place.
inline void fixed_interval_smoother(const StateSpaceModel& model,
                                    FilterSmootherOutput& fo) {
  const int p = model.num_obs;
  const int m = model.num_states;
  const int T = model.num_periods();
  if (static_cast<int>(fo.pred_mean.size()) != T || fo.uni_v.cols() != T ||
      fo.uni_v.rows() != p || (T > 0 && fo.pred_mean[0].size() != m))
    throw std::invalid_argument("filter output does not match the model");

  fo.smoothed_mean.resize(T);
  fo.smoothed_cov.resize(T);

  const Eigen::MatrixXd& Tr = model.transition;
  const int d = fo.diffuse_periods;

  Eigen::VectorXd r0 = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd r1 = Eigen::VectorXd::Zero(m);
  Eigen::MatrixXd N0 = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd N1 = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd N2 = Eigen::MatrixXd::Zero(m, m);

  for (int t = T - 1; t >= 0; --t) {
    const Eigen::MatrixXd& Z = model.design[t];
    const bool in_diffuse = t < d;
    for (int k = p - 1; k >= 0; --k) {
      if (!fo.observed(k, t)) continue;
      const auto z = Z.row(k);
      const double v = fo.uni_v(k, t);
      const double fstar = fo.uni_fstar(k, t);
      const double finf = fo.uni_finf(k, t);
      const Eigen::VectorXd K = fo.uni_kstar[t].col(k);
      if (in_diffuse && finf > 0.0) {
        const Eigen::VectorXd Kinf = fo.uni_kinf[t].col(k);
        const double f1 = 1.0 / finf;
        Eigen::MatrixXd Linf = Eigen::MatrixXd::Identity(m, m);
        Linf.noalias() -= (Kinf * f1) * z;
        Eigen::MatrixXd Lc = -((K * f1 - Kinf * (fstar * f1 * f1)) * z);
        const Eigen::MatrixXd zz = z.transpose() * z;
        Eigen::MatrixXd N2n = -zz * (fstar * f1 * f1);
        N2n.noalias() += Linf.transpose() * N2 * Linf;
        N2n.noalias() += Linf.transpose() * N1 * Lc;
        N2n.noalias() += Lc.transpose() * N1 * Linf;
        N2n.noalias() += Lc.transpose() * N0 * Lc;
        Eigen::MatrixXd N1n = zz * f1;
        N1n.noalias() += Linf.transpose() * N1 * Linf;
        N1n.noalias() += Linf.transpose() * N0 * Lc;
        N1n.noalias() += Lc.transpose() * N0 * Linf;
        Eigen::MatrixXd N0n = Linf.transpose() * N0 * Linf;
        N2 = N2n;
        N1 = N1n;
        N0 = N0n;
        Eigen::VectorXd r1n = z.transpose() * (v * f1);
        r1n.noalias() += Linf.transpose() * r1;
        r1n.noalias() += Lc.transpose() * r0;
        r1 = r1n;
        r0 = (Linf.transpose() * r0).eval();
      } else {
        Eigen::MatrixXd L = Eigen::MatrixXd::Identity(m, m);
        L.noalias() -= (K / fstar) * z;
        r0 = (z.transpose() * (v / fstar) + L.transpose() * r0).eval();
        N0 = (z.transpose() * z / fstar + L.transpose() * N0 * L).eval();
        if (in_diffuse) {
          r1 = (L.transpose() * r1).eval();
          N1 = (L.transpose() * N1 * L).eval();
          N2 = (L.transpose() * N2 * L).eval();
        }
      }
    }

    const Eigen::MatrixXd& Ps = fo.pred_cov[t];
    Eigen::VectorXd alpha = fo.pred_mean[t] + Ps * r0;
    Eigen::MatrixXd V = Ps - Ps * N0 * Ps;
    if (in_diffuse) {
      const Eigen::MatrixXd& Pi = fo.pred_cov_inf[t];
      alpha.noalias() += Pi * r1;
      const Eigen::MatrixXd cross = Pi * N1 * Ps;
      V.noalias() -= cross;
      V.noalias() -= cross.transpose();
      V.noalias() -= Pi * N2 * Pi;
    }
    detail::symmetrize(V);
    fo.smoothed_mean[t] = alpha;
    fo.smoothed_cov[t] = V;

    if (t > 0) {
      r0 = (Tr.transpose() * r0).eval();
      N0 = (Tr.transpose() * N0 * Tr).eval();
      if (t - 1 < d) {
        r1 = (Tr.transpose() * r1).eval();
        N1 = (Tr.transpose() * N1 * Tr).eval();
        N2 = (Tr.transpose() * N2 * Tr).eval();
      }
    }
  }
}

// Filter + smoother in one call.
inline FilterSmootherOutput kalman_smoother(const StateSpaceModel& model,
                                            const Eigen::MatrixXd& observations,
                                            const Eigen::VectorXd& theta) {
  FilterSmootherOutput out = kalman_filter(model, observations, theta, true);
  fixed_interval_smoother(model, out);
  return out;
}

}  // namespace discont

#endif
