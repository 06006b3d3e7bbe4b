#ifndef DISCONT_SIMULATE_HPP
#define DISCONT_SIMULATE_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "discont/builders.hpp"
#include "discont/estimation.hpp"
#include "discont/panel.hpp"
#include "discont/statespace.hpp"

namespace discont {

// splitmix64 step; also used to derive independent per-replicate seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t replicate_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t s = master ^ (0xA3C59AC2ULL + index * 0x9E3779B97F4A7C15ULL);
  splitmix64(s);
  return splitmix64(s);
}

// Deterministic portable generator: raw splitmix64 bits feed a 53-bit uniform
// and a Box-Muller normal, so streams are identical across platforms and
// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  double uniform() {  // in [0, 1)
    return static_cast<double>(splitmix64(state_) >> 11) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // integer in [lo, hi] inclusive
  long uniform_int(long lo, long hi) {
    return lo + static_cast<long>(uniform() * static_cast<double>(hi - lo + 1));
  }

 private:
  std::uint64_t state_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Draws observations from a state-space model: the initial state is taken as
// given, process noise enters from the second period on, observation noise in
// every period.
inline Eigen::MatrixXd simulate_from_model(const StateSpaceModel& model,
                                           const Eigen::VectorXd& theta,
                                           const Eigen::VectorXd& start_state,
                                           Rng& rng) {
  model.validate();
  if (start_state.size() != model.num_states)
    throw std::invalid_argument("start state does not match the model");
  const int T = model.num_periods();
  const int p = model.num_obs;
  const Eigen::VectorXd q = model.state_variances(theta);

  Eigen::MatrixXd y(p, T);
  Eigen::VectorXd alpha = start_state;
  for (int t = 0; t < T; ++t) {
    if (t > 0) {
      alpha = model.transition * alpha;
      for (int i = 0; i < model.num_states; ++i)
        if (q[i] > 0.0) alpha[i] += std::sqrt(q[i]) * rng.normal();
    }
    y.col(t) = model.design[t] * alpha;
    for (int k = 0; k < p; ++k)
      y(k, t) += std::sqrt(model.obs_variance(t, k, theta)) * rng.normal();
  }
  return y;
}

// One multinomial composition draw: n trials over the category probabilities,
// returned as counts.
inline Eigen::VectorXd multinomial_draw(long n, const Eigen::VectorXd& probs,
                                        Rng& rng) {
  const int K = static_cast<int>(probs.size());
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(K);
  // sequential binomial-free bucketing; K is small so the scan is cheap
  for (long i = 0; i < n; ++i) {
    double u = rng.uniform();
    int k = 0;
    while (k < K - 1 && u >= probs[k]) {
      u -= probs[k];
      ++k;
    }
    counts[k] += 1.0;
  }
  return counts;
}

// Multinomial survey panel around a deterministic composition path, with a
// discontinuity added to the post-redesign probabilities.
inline CompositionalPanel simulate_multinomial_panel(
    const Eigen::MatrixXd& base_path,        // T x K fractions, rows sum to 1
    const Eigen::VectorXd& sample_sizes,     // T
    const Eigen::VectorXd& delta_fraction,   // K, sums to 0
    int redesign_period, Rng& rng, double unit = 100.0) {
  const int T = static_cast<int>(base_path.rows());
  const int K = static_cast<int>(base_path.cols());
  if (std::abs(delta_fraction.sum()) > 1e-12)
    throw std::invalid_argument("injected discontinuity must sum to zero");

  CompositionalPanel panel;
  panel.unit_total = unit;
  panel.redesign_period = redesign_period;
  panel.sample_sizes = sample_sizes;
  panel.proportions.resize(T, K);
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd p = base_path.row(t).transpose();
    if (t >= redesign_period) p += delta_fraction;
    if (p.minCoeff() <= 0.0 || std::abs(p.sum() - 1.0) > 1e-9)
      throw std::invalid_argument("probability path leaves the simplex at period " +
                                  std::to_string(t + 1));
    const long n = static_cast<long>(sample_sizes[t]);
    panel.proportions.row(t) =
        (unit / static_cast<double>(n)) * multinomial_draw(n, p, rng).transpose();
    panel.periods.push_back(std::to_string(t + 1));
  }
  return panel;
}

// Monte Carlo design for the logratio-transform model: the generating process
// is the fitted model itself (smooth trends, a level break, survey noise
// shrinking with the interview count).
struct SimulationScenario {
  int total_periods = 11;
  int redesign_period = 8;
  Eigen::VectorXd start_levels;  // p, transformed scale
  Eigen::VectorXd start_slopes;  // p
  Eigen::VectorXd slope_sd;      // p, sigma_R
  double obs_sd = 1.0;           // sigma_eps; per-period variance obs_sd^2 / n_t
  Eigen::VectorXd beta;          // p, generating discontinuities
  double n_min = 4000.0;
  double n_max = 5000.0;
  int replicates = 200;
  std::uint64_t seed = 1;

  void validate() const {
    const int p = static_cast<int>(beta.size());
    if (p < 1) throw std::invalid_argument("scenario has no series");
    if (start_levels.size() != p || start_slopes.size() != p || slope_sd.size() != p)
      throw std::invalid_argument("scenario vectors disagree on the series count");
    if (redesign_period <= 0 || redesign_period >= total_periods)
      throw std::invalid_argument("redesign period must lie strictly inside the series");
    if (!(n_min > 0) || n_max < n_min)
      throw std::invalid_argument("sample size range is invalid");
    if (replicates < 1) throw std::invalid_argument("need at least one replicate");
  }
};

struct StudySummary {
  Eigen::VectorXd beta_mean, beta_sd;     // p
  Eigen::VectorXd hyper_mean, hyper_sd;   // p slope sds then the obs sd
  Eigen::MatrixXd beta_draws;             // done x p
  Eigen::MatrixXd hyper_draws;            // done x (p+1)
  int replicates_requested = 0;
  int replicates_done = 0;
  int failures = 0;
  double max_gradient_norm = 0.0;  // worst first-order condition across fits
};

// Column means and standard deviations with the n-1 denominator, two passes.
inline void summarize_columns(const Eigen::MatrixXd& draws, Eigen::VectorXd& mean,
                              Eigen::VectorXd& sd) {
  const int n = static_cast<int>(draws.rows());
  if (n < 2) throw std::invalid_argument("need at least two draws to summarize");
  mean = draws.colwise().mean();
  sd.resize(draws.cols());
  for (int j = 0; j < draws.cols(); ++j)
    sd[j] = std::sqrt((draws.col(j).array() - mean[j]).square().sum() / (n - 1));
}

namespace detail {

// One replicate: generate a transformed panel from the trend + break process,
// refit it, and report the discontinuity and hyperparameter estimates.
inline bool study_replicate(const SimulationScenario& sc, const OptimOptions& opt,
                            const Eigen::VectorXd& delta, int rep,
                            Eigen::VectorXd& beta_row, Eigen::VectorXd& hyper_row,
                            double& grad_norm) {
  const int p = static_cast<int>(sc.beta.size());
  const int T = sc.total_periods;
  Rng rng(replicate_seed(sc.seed, static_cast<std::uint64_t>(rep)));

  Eigen::VectorXd n_t(T);
  for (int t = 0; t < T; ++t)
    n_t[t] = std::floor(sc.n_min + (sc.n_max - sc.n_min) * rng.uniform());

  Eigen::MatrixXd values(T, p);
  for (int k = 0; k < p; ++k) {
    double L = sc.start_levels[k], R = sc.start_slopes[k];
    for (int t = 0; t < T; ++t) {
      if (t > 0) {
        L += R;
        R += sc.slope_sd[k] * rng.normal();
      }
      values(t, k) = L + sc.beta[k] * delta[t] +
                     sc.obs_sd / std::sqrt(n_t[t]) * rng.normal();
    }
  }

  TransformedPanel tp;
  tp.kind = TransformKind::alr;
  tp.reference = p;  // the dropped category
  tp.values = values;
  tp.sample_sizes = n_t;
  tp.redesign_period = sc.redesign_period;
  for (int t = 0; t < T; ++t) tp.periods.push_back(std::to_string(t + 1));

  try {
    auto bm = build_m3(tp, {InterventionKind::level});
    auto fit = fit_mle(bm.model, bm.observations, opt);
    auto fo = kalman_smoother(bm.model, bm.observations, fit.theta);
    auto d = extract_discontinuities(bm, fo);
    beta_row = d.estimate;
    hyper_row.resize(p + 1);
    for (int k = 0; k <= p; ++k) hyper_row[k] = std::exp(0.5 * fit.theta[k]);
    grad_norm = gradient_maxnorm(bm.model, bm.observations, fit.theta);
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace detail

// Simulates, refits, and summarizes the discontinuity and hyperparameter
// estimates across replicates. Each replicate is seeded independently, so the
// result is identical for any worker count; replicates whose fit fails are
// dropped, and more than 20% of them failing aborts the study.
inline StudySummary run_study(const SimulationScenario& sc,
                              const OptimOptions& opt = {.num_starts = 1},
                              int workers = 1) {
  sc.validate();
  const int p = static_cast<int>(sc.beta.size());
  const int R = sc.replicates;

  const Eigen::VectorXd delta = build_intervention_regressor(
      InterventionKind::level, sc.redesign_period, sc.total_periods);

  Eigen::MatrixXd beta_all(R, p), hyper_all(R, p + 1);
  std::vector<char> ok(R, 0);
  std::vector<double> grads(R, 0.0);

  auto worker = [&](int lo, int hi) {
    Eigen::VectorXd brow, hrow;
    for (int rep = lo; rep < hi; ++rep) {
      double g = 0.0;
      if (detail::study_replicate(sc, opt, delta, rep, brow, hrow, g)) {
        beta_all.row(rep) = brow.transpose();
        hyper_all.row(rep) = hrow.transpose();
        grads[rep] = g;
        ok[rep] = 1;
      }
    }
  };

  if (workers <= 1) {
    worker(0, R);
  } else {
    const int W = std::min(workers, R);
    std::vector<std::thread> pool;
    for (int w = 0; w < W; ++w) {
      const int lo = R * w / W, hi = R * (w + 1) / W;
      pool.emplace_back(worker, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  StudySummary out;
  out.replicates_requested = R;
  out.beta_draws.resize(R, p);
  out.hyper_draws.resize(R, p + 1);
  int done = 0;
  for (int rep = 0; rep < R; ++rep) {
    if (!ok[rep]) {
      ++out.failures;
      continue;
    }
    out.beta_draws.row(done) = beta_all.row(rep);
    out.hyper_draws.row(done) = hyper_all.row(rep);
    if (grads[rep] > out.max_gradient_norm) out.max_gradient_norm = grads[rep];
    ++done;
  }

  if (out.failures * 5 > R)
    throw std::runtime_error("more than 20% of the replicates failed to fit (" +
                             std::to_string(out.failures) + " of " +
                             std::to_string(R) + ")");

  out.replicates_done = done;
  out.beta_draws.conservativeResize(done, p);
  out.hyper_draws.conservativeResize(done, p + 1);
  if (done >= 2) {
    summarize_columns(out.beta_draws, out.beta_mean, out.beta_sd);
    summarize_columns(out.hyper_draws, out.hyper_mean, out.hyper_sd);
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.beta_mean = done == 1 ? Eigen::VectorXd(out.beta_draws.row(0).transpose())
                              : Eigen::VectorXd::Constant(p, nan);
    out.hyper_mean = done == 1 ? Eigen::VectorXd(out.hyper_draws.row(0).transpose())
                               : Eigen::VectorXd::Constant(p + 1, nan);
    out.beta_sd = Eigen::VectorXd::Constant(p, nan);
    out.hyper_sd = Eigen::VectorXd::Constant(p + 1, nan);
  }
  return out;
}

}  // namespace discont

#endif
