#ifndef DISCONT_ADJUST_HPP
#define DISCONT_ADJUST_HPP

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "discont/builders.hpp"
#include "discont/panel.hpp"
#include "discont/statespace.hpp"
#include "discont/transforms.hpp"

namespace discont {

struct AdjustmentResult {
  Eigen::MatrixXd adjusted;       // T x K, on the panel unit
  Eigen::MatrixXd model_scale;    // T x p, the adjusted model-scale series
  bool out_of_range = false;      // raw-scale correction left the simplex
};

namespace detail {

// Smoothed intervention effect of each series at each period, evaluated as if
// the effect applied there (its full pattern, ignoring the step truncation).
// For constant coefficients this is beta_k (times the slope ramp); for the
// seasonal block it is the current seasonal-intervention state.
inline Eigen::MatrixXd full_effect(const BuiltModel& bm,
                                   const FilterSmootherOutput& fo) {
  const int T = static_cast<int>(fo.smoothed_mean.size());
  const int p = bm.num_series;
  const int TR = bm.redesign_period;
  Eigen::MatrixXd e(T, p);
  // level and slope coefficients are time invariant; read them at the final
  // period, where the zero-sum restriction binds and all information has
  // accrued (the smoothed initial state predates the restriction)
  switch (bm.intervention.kind) {
    case InterventionKind::level:
      for (int t = 0; t < T; ++t)
        for (int k = 0; k < p; ++k)
          e(t, k) = fo.smoothed_mean[T - 1][bm.coef_offset + k];
      break;
    case InterventionKind::slope:
      for (int t = 0; t < T; ++t) {
        const double ramp = bm.intervention.adjust_direction == AdjustDirection::after
                                ? 1.0 + t - TR
                                : static_cast<double>(t - TR);
        for (int k = 0; k < p; ++k)
          e(t, k) = ramp * fo.smoothed_mean[T - 1][bm.coef_offset + k];
      }
      break;
    case InterventionKind::seasonal: {
      const int q = bm.intervention.seasonal_period - 1;
      for (int t = 0; t < T; ++t)
        for (int k = 0; k < p; ++k)
          e(t, k) = fo.smoothed_mean[t][bm.coef_offset + k * q];
      break;
    }
  }
  return e;
}

// Regressor pattern actually present in the data generating equation.
inline double actual_weight(const BuiltModel& bm, int t) {
  const int TR = bm.redesign_period;
  switch (bm.intervention.kind) {
    case InterventionKind::level:
    case InterventionKind::seasonal:
      return t >= TR ? 1.0 : 0.0;
    case InterventionKind::slope:
      return (bm.intervention.adjust_direction == AdjustDirection::after)
                 ? (t >= TR ? 1.0 : 0.0)
                 : (t < TR ? 1.0 : 0.0);
  }
  return 0.0;
}

// Pattern of the regime the series is aligned to: the old design for
// adjust-after, the new design for adjust-before.
inline double target_weight(const BuiltModel& bm, int t) {
  const int TR = bm.redesign_period;
  if (bm.intervention.adjust_direction == AdjustDirection::after) return 0.0;
  switch (bm.intervention.kind) {
    case InterventionKind::level:
    case InterventionKind::seasonal:
      return 1.0;
    case InterventionKind::slope:
      // the new-design regime carries no pre-break deviation
      return t >= TR ? 1.0 : 0.0;
  }
  return 0.0;
}

}  // namespace detail

// Removes the estimated redesign effect from the model-scale observations:
// x~_t = x_t - e_t (actual - target), which leaves the aligned-to regime
// untouched and corrects the other one.
inline Eigen::MatrixXd adjust_model_scale(const BuiltModel& bm,
                                          const FilterSmootherOutput& fo) {
  const int T = static_cast<int>(fo.smoothed_mean.size());
  const int p = bm.num_series;
  if (bm.observations.cols() != T)
    throw std::invalid_argument("smoother output does not match the built model");
  const Eigen::MatrixXd e = detail::full_effect(bm, fo);
  Eigen::MatrixXd out(T, p);
  for (int t = 0; t < T; ++t) {
    const double w = detail::actual_weight(bm, t) - detail::target_weight(bm, t);
    for (int k = 0; k < p; ++k) out(t, k) = bm.observations(k, t) - w * e(t, k);
  }
  return out;
}

// Full adjusted composition on the panel unit. Raw-scale models correct the
// proportions directly (flagging values pushed outside [0, unit]); logratio
// models correct in transform space and map back, which keeps the adjusted
// shares positive and summing to the unit by construction.
inline AdjustmentResult adjust_series(const CompositionalPanel& panel,
                                      const BuiltModel& bm,
                                      const FilterSmootherOutput& fo) {
  panel.validate();
  const int T = panel.num_periods();
  const int K = panel.num_categories();
  AdjustmentResult res;
  res.model_scale = adjust_model_scale(bm, fo);

  switch (bm.scale) {
    case AnalysisScale::original: {
      if (bm.num_series != K)
        throw std::invalid_argument("panel does not match the built model");
      res.adjusted = res.model_scale;
      for (int t = 0; t < T; ++t)
        for (int k = 0; k < K; ++k)
          if (res.adjusted(t, k) < 0.0 || res.adjusted(t, k) > panel.unit_total)
            res.out_of_range = true;
      break;
    }
    case AnalysisScale::alr: {
      res.adjusted.resize(T, K);
      for (int t = 0; t < T; ++t) {
        Eigen::VectorXd y = alr_inverse(res.model_scale.row(t).transpose(), bm.reference);
        res.adjusted.row(t) = (panel.unit_total * y).transpose();
      }
      break;
    }
    case AnalysisScale::clr: {
      res.adjusted.resize(T, K);
      for (int t = 0; t < T; ++t) {
        Eigen::VectorXd y = clr_inverse(res.model_scale.row(t).transpose());
        res.adjusted.row(t) = (panel.unit_total * y).transpose();
      }
      break;
    }
  }
  return res;
}

// Per-period discontinuity on the original scale: observed minus adjusted.
// Constant for the raw-scale models, generally time varying after a logratio
// transform.
inline Eigen::MatrixXd original_scale_discontinuity(const CompositionalPanel& panel,
                                                    const AdjustmentResult& res) {
  return panel.proportions - res.adjusted;
}

}  // namespace discont

#endif
