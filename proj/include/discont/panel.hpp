#ifndef DISCONT_PANEL_HPP
#define DISCONT_PANEL_HPP

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "discont/transforms.hpp"

namespace discont {

// Series for H subpopulations alongside the national total, with the
// population shares f_h = N_h / N.
struct DomainBlock {
  std::vector<Eigen::MatrixXd> proportions;  // H matrices, each T x K
  Eigen::VectorXd shares;                    // H, sums to 1
  std::vector<Eigen::VectorXd> sample_sizes; // optional per-domain n_t; may be empty
};

// Observed K-category proportion series with per-period sample sizes and
// the first period observed under the redesigned survey.
struct CompositionalPanel {
  std::vector<std::string> periods;   // T labels
  Eigen::MatrixXd proportions;        // T x K, on the declared unit
  Eigen::VectorXd sample_sizes;       // T
  int redesign_period = -1;           // 0-based index of first new-design period
  double unit_total = 100.0;          // 100 for percentages, 1 for fractions
  std::optional<Eigen::MatrixXd> obs_se;  // T x K per-cell standard errors
  std::optional<DomainBlock> domains;

  int num_periods() const { return static_cast<int>(proportions.rows()); }
  int num_categories() const { return static_cast<int>(proportions.cols()); }

  void validate() const {
    const int T = num_periods();
    const int K = num_categories();
    if (T < 2 || K < 2) throw std::invalid_argument("panel needs T >= 2 and K >= 2");
    if (static_cast<int>(periods.size()) != T)
      throw std::invalid_argument("period labels do not match series length");
    if (sample_sizes.size() != T)
      throw std::invalid_argument("sample size series does not match series length");
    for (int t = 0; t < T; ++t) {
      if (!(sample_sizes[t] > 0))
        throw std::invalid_argument("sample size must be positive at period " + periods[t]);
      double row = 0.0;
      for (int k = 0; k < K; ++k) {
        const double v = proportions(t, k);
        if (!std::isfinite(v) || v < 0.0 || v > unit_total)
          throw std::invalid_argument("proportion out of range at period " + periods[t]);
        row += v;
      }
      if (std::abs(row - unit_total) > 1e-9 * unit_total)
        throw std::invalid_argument("proportions do not sum to the unit total at period " +
                                    periods[t]);
    }
    if (redesign_period <= 0 || redesign_period >= T)
      throw std::invalid_argument("redesign period must lie strictly inside the series");
    if (obs_se && (obs_se->rows() != T || obs_se->cols() != K))
      throw std::invalid_argument("standard error matrix does not match panel shape");
    if (domains) {
      const auto& d = *domains;
      const int H = static_cast<int>(d.proportions.size());
      if (H < 1) throw std::invalid_argument("domain block has no subpopulations");
      if (d.shares.size() != H)
        throw std::invalid_argument("domain share vector does not match subpopulation count");
      if (std::abs(d.shares.sum() - 1.0) > 1e-12)
        throw std::invalid_argument("domain shares must sum to 1");
      for (const auto& m : d.proportions)
        if (m.rows() != T || m.cols() != K)
          throw std::invalid_argument("domain series does not match panel shape");
    }
  }

  // Row as a fraction composition regardless of declared unit.
  Eigen::VectorXd fraction_row(int t) const {
    return proportions.row(t).transpose() / unit_total;
  }
};

inline TransformedPanel alr_panel(const CompositionalPanel& panel, int reference) {
  panel.validate();
  const int T = panel.num_periods();
  const int K = panel.num_categories();
  TransformedPanel out;
  out.kind = TransformKind::alr;
  out.reference = reference;
  out.values.resize(T, K - 1);
  for (int t = 0; t < T; ++t)
    out.values.row(t) = alr_forward(panel.fraction_row(t), reference, t).transpose();
  out.periods = panel.periods;
  out.sample_sizes = panel.sample_sizes;
  out.redesign_period = panel.redesign_period;
  return out;
}

inline TransformedPanel clr_panel(const CompositionalPanel& panel) {
  panel.validate();
  const int T = panel.num_periods();
  const int K = panel.num_categories();
  TransformedPanel out;
  out.kind = TransformKind::clr;
  out.values.resize(T, K);
  out.gmean.resize(T);
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd y = panel.fraction_row(t);
    out.values.row(t) = clr_forward(y, t).transpose();
    out.gmean[t] = geometric_mean(y);
  }
  out.periods = panel.periods;
  out.sample_sizes = panel.sample_sizes;
  out.redesign_period = panel.redesign_period;
  return out;
}

}  // namespace discont

#endif
