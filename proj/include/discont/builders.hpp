#ifndef DISCONT_BUILDERS_HPP
#define DISCONT_BUILDERS_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

#include "discont/panel.hpp"
#include "discont/statespace.hpp"
#include "discont/transforms.hpp"

namespace discont {

enum class InterventionKind { level, slope, seasonal };
enum class AdjustDirection { after, before };

struct InterventionSpec {
  InterventionKind kind = InterventionKind::level;
  AdjustDirection adjust_direction = AdjustDirection::after;
  int seasonal_period = 0;  // s, required when kind == seasonal
};

enum class ModelVariant { M1, M2, M3, M4 };

struct ModelSpec {
  ModelVariant variant = ModelVariant::M2;
  bool common_obs_variance = true;   // single sigma^2_eps across equations
  bool variance_break = false;       // separate obs variances before/after T_R
  int reference_category = -1;       // M3 only; -1 means the last category
};

enum class AnalysisScale { original, alr, clr };

// A ready-to-fit model together with the observation matrix it applies to
// and bookkeeping for where the intervention coefficients live.
struct BuiltModel {
  StateSpaceModel model;
  Eigen::MatrixXd observations;  // p x T
  int num_series = 0;            // p
  int coef_offset = 0;           // first intervention-coefficient state
  int coef_count = 0;
  AnalysisScale scale = AnalysisScale::original;
  int obs_theta_index = -1;      // common obs-variance component, -1 if per-series
  int reference = -1;            // logratio reference category (alr scale only)
  int redesign_period = -1;
  InterventionSpec intervention;
};

// Intervention regressor delta_t. The level shape is a step dummy; the slope
// shape grows linearly after the redesign (adjust-after) or counts down to it
// (adjust-before).
inline Eigen::VectorXd build_intervention_regressor(InterventionKind kind,
                                                    int redesign_period, int T,
                                                    AdjustDirection direction =
                                                        AdjustDirection::after) {
  if (redesign_period <= 0 || redesign_period >= T)
    throw std::invalid_argument("redesign period must lie strictly inside the series");
  Eigen::VectorXd delta = Eigen::VectorXd::Zero(T);
  for (int t = 0; t < T; ++t) {
    switch (kind) {
      case InterventionKind::level:
      case InterventionKind::seasonal:
        delta[t] = t >= redesign_period ? 1.0 : 0.0;
        break;
      case InterventionKind::slope:
        if (direction == AdjustDirection::after)
          delta[t] = t >= redesign_period ? 1.0 + t - redesign_period : 0.0;
        else
          delta[t] = t < redesign_period ? static_cast<double>(t - redesign_period) : 0.0;
        break;
    }
  }
  return delta;
}

// Transition block that forces the coefficients to sum to zero at every step.
inline Eigen::MatrixXd zero_sum_coefficient_transition(int K) {
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(K, K);
  T.topLeftCorner(K - 1, K - 1).setIdentity();
  T.row(K - 1).head(K - 1).setConstant(-1.0);
  return T;
}

// Companion matrix of the dummy-variable seasonal model, (s-1) x (s-1).
inline Eigen::MatrixXd dummy_seasonal_transition(int s) {
  if (s < 2) throw std::invalid_argument("seasonal period must be >= 2");
  Eigen::MatrixXd Ts = Eigen::MatrixXd::Zero(s - 1, s - 1);
  Ts.row(0).setConstant(-1.0);
  Ts.bottomLeftCorner(s - 2, s - 2).setIdentity();
  return Ts;
}

namespace detail {

// Shared construction for M1-M4: p smooth-trend blocks plus p intervention
// coefficients, state order (L_1, R_1, ..., L_p, R_p, beta_1, ..., beta_p).
inline BuiltModel build_trend_coef_model(const Eigen::MatrixXd& values,  // T x p
                                         const Eigen::VectorXd& sample_sizes,
                                         const Eigen::MatrixXd* se,  // optional T x p
                                         int redesign_period,
                                         const InterventionSpec& ispec,
                                         const ModelSpec& mspec,
                                         bool restricted) {
  const int T = static_cast<int>(values.rows());
  const int p = static_cast<int>(values.cols());
  if (ispec.kind == InterventionKind::seasonal)
    throw std::invalid_argument("seasonal interventions use build_seasonal_intervention");

  BuiltModel out;
  out.num_series = p;
  out.coef_offset = 2 * p;
  out.coef_count = p;
  out.redesign_period = redesign_period;
  out.intervention = ispec;
  out.observations = values.transpose();

  auto& m = out.model;
  m.num_obs = p;
  m.num_states = 3 * p;

  const Eigen::VectorXd delta =
      build_intervention_regressor(ispec.kind, redesign_period, T, ispec.adjust_direction);
  m.design.resize(T);
  for (int t = 0; t < T; ++t) {
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(p, 3 * p);
    for (int k = 0; k < p; ++k) {
      Z(k, 2 * k) = 1.0;
      Z(k, 2 * p + k) = delta[t];
    }
    m.design[t] = Z;
  }

  m.transition = Eigen::MatrixXd::Zero(3 * p, 3 * p);
  for (int k = 0; k < p; ++k) {
    m.transition(2 * k, 2 * k) = 1.0;
    m.transition(2 * k, 2 * k + 1) = 1.0;
    m.transition(2 * k + 1, 2 * k + 1) = 1.0;
  }
  m.transition.bottomRightCorner(p, p) =
      restricted ? zero_sum_coefficient_transition(p)
                 : Eigen::MatrixXd::Identity(p, p);

  m.init_defaults();

  // theta layout: p slope log-variances, then the observation log-variance(s)
  int ntheta = 0;
  for (int k = 0; k < p; ++k) m.state_theta[2 * k + 1] = ntheta++;
  if (mspec.common_obs_variance) {
    out.obs_theta_index = ntheta;
    for (int k = 0; k < p; ++k) m.obs_theta[k] = ntheta;
    ++ntheta;
    if (mspec.variance_break) {
      m.obs_theta_post.assign(p, ntheta);
      ++ntheta;
    }
  } else {
    for (int k = 0; k < p; ++k) m.obs_theta[k] = ntheta++;
    if (mspec.variance_break) {
      m.obs_theta_post.resize(p);
      for (int k = 0; k < p; ++k) m.obs_theta_post[k] = ntheta++;
    }
  }
  if (mspec.variance_break) m.obs_split = redesign_period;
  m.num_theta = ntheta;

  for (int t = 0; t < T; ++t)
    for (int k = 0; k < p; ++k)
      m.obs_scale(t, k) = se ? (*se)(t, k) * (*se)(t, k) : 1.0 / sample_sizes[t];

  m.validate();
  return out;
}

inline const Eigen::MatrixXd* panel_se(const CompositionalPanel& panel) {
  return panel.obs_se ? &*panel.obs_se : nullptr;
}

}  // namespace detail

// M1: seemingly unrelated model on the untransformed series, coefficients free.
inline BuiltModel build_m1(const CompositionalPanel& panel, const InterventionSpec& ispec,
                           const ModelSpec& mspec = {ModelVariant::M1}) {
  panel.validate();
  BuiltModel out = detail::build_trend_coef_model(
      panel.proportions, panel.sample_sizes, detail::panel_se(panel),
      panel.redesign_period, ispec, mspec, /*restricted=*/false);
  out.scale = AnalysisScale::original;
  return out;
}

// M2: untransformed series with the zero-sum restriction on the coefficients.
inline BuiltModel build_m2(const CompositionalPanel& panel, const InterventionSpec& ispec,
                           const ModelSpec& mspec = {ModelVariant::M2}) {
  panel.validate();
  BuiltModel out = detail::build_trend_coef_model(
      panel.proportions, panel.sample_sizes, detail::panel_se(panel),
      panel.redesign_period, ispec, mspec, /*restricted=*/true);
  out.scale = AnalysisScale::original;
  return out;
}

// M3: model on the K-1 logratio-transformed series, coefficients free.
inline BuiltModel build_m3(const TransformedPanel& tpanel,
                           const InterventionSpec& ispec,
                           const ModelSpec& mspec = {ModelVariant::M3}) {
  if (tpanel.kind != TransformKind::alr)
    throw std::invalid_argument("M3 requires a logratio-transformed panel");
  BuiltModel out = detail::build_trend_coef_model(
      tpanel.values, tpanel.sample_sizes, nullptr, tpanel.redesign_period, ispec,
      mspec, /*restricted=*/false);
  out.scale = AnalysisScale::alr;
  out.reference = tpanel.reference;
  return out;
}

// M4: zero-sum restricted model on the K central-logratio series.
inline BuiltModel build_m4(const TransformedPanel& tpanel,
                           const InterventionSpec& ispec,
                           const ModelSpec& mspec = {ModelVariant::M4}) {
  if (tpanel.kind != TransformKind::clr)
    throw std::invalid_argument("M4 requires a central-logratio-transformed panel");
  BuiltModel out = detail::build_trend_coef_model(
      tpanel.values, tpanel.sample_sizes, nullptr, tpanel.redesign_period, ispec,
      mspec, /*restricted=*/true);
  out.scale = AnalysisScale::clr;
  return out;
}

// Seasonal intervention on top of M2 (untransformed) or M4 (central logratio):
// each series gains a stochastic dummy seasonal and the level coefficient is
// replaced by a time-independent seasonal intervention block whose category
// sum is forced to zero. State order: trends (2p), seasonal p(s-1),
// seasonal intervention p(s-1).
inline BuiltModel build_seasonal_intervention(const CompositionalPanel& panel, int s,
                                              ModelVariant base_variant,
                                              const ModelSpec& mspec = {}) {
  if (base_variant != ModelVariant::M2 && base_variant != ModelVariant::M4)
    throw std::invalid_argument("seasonal intervention base must be M2 or M4");
  panel.validate();
  if (s < 2) throw std::invalid_argument("seasonal period must be >= 2");
  const int T = panel.num_periods();
  if (T < 2 * s + 2)
    throw std::invalid_argument("series too short to identify the seasonal states");

  Eigen::MatrixXd values = panel.proportions;
  AnalysisScale scale = AnalysisScale::original;
  if (base_variant == ModelVariant::M4) {
    values = clr_panel(panel).values;
    scale = AnalysisScale::clr;
  }
  const int p = static_cast<int>(values.cols());
  const int q = s - 1;
  const int m = 2 * p + 2 * p * q;

  BuiltModel out;
  out.num_series = p;
  out.coef_offset = 2 * p + p * q;
  out.coef_count = p * q;
  out.scale = scale;
  out.redesign_period = panel.redesign_period;
  out.intervention = {InterventionKind::seasonal, AdjustDirection::after, s};
  out.observations = values.transpose();

  auto& mod = out.model;
  mod.num_obs = p;
  mod.num_states = m;

  const Eigen::VectorXd delta = build_intervention_regressor(
      InterventionKind::level, panel.redesign_period, T);
  mod.design.resize(T);
  for (int t = 0; t < T; ++t) {
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(p, m);
    for (int k = 0; k < p; ++k) {
      Z(k, 2 * k) = 1.0;
      Z(k, 2 * p + k * q) = 1.0;              // z_s' = (1, 0, ..., 0)
      Z(k, 2 * p + p * q + k * q) = delta[t];
    }
    mod.design[t] = Z;
  }

  const Eigen::MatrixXd Ts = dummy_seasonal_transition(s);
  const Eigen::MatrixXd Tiv = zero_sum_coefficient_transition(p);
  mod.transition = Eigen::MatrixXd::Zero(m, m);
  for (int k = 0; k < p; ++k) {
    mod.transition(2 * k, 2 * k) = 1.0;
    mod.transition(2 * k, 2 * k + 1) = 1.0;
    mod.transition(2 * k + 1, 2 * k + 1) = 1.0;
    mod.transition.block(2 * p + k * q, 2 * p + k * q, q, q) = Ts;
  }
  // seasonal intervention block: T_iv (x) T_s
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b)
      if (Tiv(a, b) != 0.0)
        mod.transition.block(2 * p + p * q + a * q, 2 * p + p * q + b * q, q, q) =
            Tiv(a, b) * Ts;

  mod.init_defaults();

  int ntheta = 0;
  for (int k = 0; k < p; ++k) mod.state_theta[2 * k + 1] = ntheta++;
  for (int k = 0; k < p; ++k) mod.state_theta[2 * p + k * q] = ntheta++;
  if (mspec.common_obs_variance) {
    out.obs_theta_index = ntheta;
    for (int k = 0; k < p; ++k) mod.obs_theta[k] = ntheta;
    ++ntheta;
  } else {
    for (int k = 0; k < p; ++k) mod.obs_theta[k] = ntheta++;
  }
  mod.num_theta = ntheta;

  for (int t = 0; t < T; ++t)
    for (int k = 0; k < p; ++k) mod.obs_scale(t, k) = 1.0 / panel.sample_sizes[t];

  mod.validate();
  return out;
}

// One joint model over the national series and its H subpopulations. The
// coefficient transition rebuilds the national coefficients as the
// share-weighted sum of the zero-sum-projected domain coefficients, so the
// adjusted series aggregate consistently and keep their unit sums.
inline BuiltModel build_domain_consistent(const CompositionalPanel& panel,
                                          const InterventionSpec& ispec,
                                          const ModelSpec& mspec = {},
                                          int state_dim_cap = 96) {
  panel.validate();
  if (!panel.domains)
    throw std::invalid_argument("panel has no domain block");
  const auto& dom = *panel.domains;
  const int H = static_cast<int>(dom.proportions.size());
  const int K = panel.num_categories();
  const int T = panel.num_periods();
  const int G = H + 1;
  const int p = G * K;
  if (3 * p > state_dim_cap)
    throw std::invalid_argument(
        "domain-consistent state dimension " + std::to_string(3 * p) +
        " exceeds the cap; benchmark the separately adjusted series with the "
        "Lagrange method instead");

  // stacked observations, group-major: total first, then the H domains
  Eigen::MatrixXd values(T, p);
  values.leftCols(K) = panel.proportions;
  for (int h = 0; h < H; ++h) values.middleCols((h + 1) * K, K) = dom.proportions[h];

  BuiltModel out = detail::build_trend_coef_model(
      values, panel.sample_sizes, nullptr, panel.redesign_period, ispec, mspec,
      /*restricted=*/false);
  out.scale = AnalysisScale::original;

  // coefficient coupling
  const Eigen::MatrixXd Tiv = zero_sum_coefficient_transition(K);
  Eigen::MatrixXd Tc = Eigen::MatrixXd::Zero(p, p);
  for (int h = 0; h < H; ++h) {
    Tc.block(0, (h + 1) * K, K, K) = dom.shares[h] * Tiv;
    Tc.block((h + 1) * K, (h + 1) * K, K, K) = Tiv;
  }
  out.model.transition.bottomRightCorner(p, p) = Tc;

  // per-group sample sizes for the observation variance scale
  for (int t = 0; t < T; ++t)
    for (int h = 0; h < H; ++h) {
      const double n = dom.sample_sizes.empty()
                           ? dom.shares[h] * panel.sample_sizes[t]
                           : dom.sample_sizes[h][t];
      for (int k = 0; k < K; ++k) out.model.obs_scale(t, (h + 1) * K + k) = 1.0 / n;
    }

  out.model.validate();
  return out;
}

}  // namespace discont

#endif
