// Acceptance suite: one pass/fail line per criterion, with the measured
// numbers printed so any failure is diagnosable from the output alone.

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "discont/adjust.hpp"
#include "discont/benchmark.hpp"
#include "discont/builders.hpp"
#include "discont/estimation.hpp"
#include "discont/panel.hpp"
#include "discont/report.hpp"
#include "discont/simulate.hpp"
#include "discont/statespace.hpp"
#include "discont/transforms.hpp"

#include "oracle.hpp"
#include "testutil.hpp"

using namespace discont;

namespace {

int g_failures = 0;
std::vector<std::string> g_notes;
double g_max_grad = 0.0;  // worst first-order condition across all fits

void note(const std::string& s) { g_notes.push_back(s); }

void conclude(int criterion, const std::string& what, bool pass) {
  std::printf("criterion %d: %s - %s\n", criterion, pass ? "PASS" : "FAIL",
              what.c_str());
  for (const auto& n : g_notes) std::printf("    %s\n", n.c_str());
  g_notes.clear();
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

bool within_band(const char* label, double got, double target, double rel) {
  const bool ok = std::abs(got - target) <= rel * std::abs(target);
  if (!ok)
    note(std::string(label) + ": " + fmt(got) + " outside +/-" +
         fmt(100 * rel) + "% of " + fmt(target));
  return ok;
}

// ---------------------------------------------------------------------------
// criterion 1: model-based replication study over three series lengths

SimulationScenario length_scenario(int T, int TR, std::uint64_t seed) {
  SimulationScenario sc;
  sc.total_periods = T;
  sc.redesign_period = TR;
  sc.start_levels = Eigen::VectorXd(3);
  sc.start_levels << 1.792, 0.531, 0.262;
  sc.start_slopes = Eigen::VectorXd::Zero(3);
  sc.slope_sd = Eigen::VectorXd(3);
  sc.slope_sd << 0.0480, 0.0237, 0.000;
  sc.obs_sd = 5.260;
  sc.beta = Eigen::VectorXd(3);
  sc.beta << 0.380, 0.300, 0.140;
  sc.n_min = 4000.0;
  sc.n_max = 5000.0;
  sc.replicates = 2000;
  sc.seed = seed;
  return sc;
}

void criterion_1() {
  const double beta_true[3] = {0.380, 0.300, 0.140};
  const double disc_sd_t11[3] = {0.141, 0.122, 0.104};
  const double hyper_sd_target[3][4] = {{0.0464, 0.0412, 0.0392, 1.2177},
                                        {0.0208, 0.0139, 0.0064, 0.5833},
                                        {0.0123, 0.0079, 0.0014, 0.3869}};
  const int Ts[3] = {11, 22, 44}, TRs[3] = {8, 16, 32};
  const std::uint64_t seeds[3] = {20260824, 20260825, 20260826};

  bool pass = true;
  Eigen::MatrixXd hyper_sd(3, 4);
  for (int c = 0; c < 3; ++c) {
    auto sum = run_study(length_scenario(Ts[c], TRs[c], seeds[c]));
    if (sum.max_gradient_norm > g_max_grad) g_max_grad = sum.max_gradient_norm;
    if (sum.failures > 0)
      note("T=" + std::to_string(Ts[c]) + ": " + std::to_string(sum.failures) +
           " fit failures");

    for (int k = 0; k < 3; ++k) {
      if (std::abs(sum.beta_mean[k] - beta_true[k]) > 0.015) {
        note("T=" + std::to_string(Ts[c]) + " disc " + std::to_string(k + 1) +
             " mean " + fmt(sum.beta_mean[k]) + " not within 0.015 of " +
             fmt(beta_true[k]));
        pass = false;
      }
      if (c == 0)
        pass = within_band(("T=11 disc " + std::to_string(k + 1) + " sd").c_str(),
                           sum.beta_sd[k], disc_sd_t11[k], 0.15) && pass;
    }
    for (int j = 0; j < 4; ++j) {
      hyper_sd(c, j) = sum.hyper_sd[j];
      pass = within_band(("T=" + std::to_string(Ts[c]) + " hyper " +
                          std::to_string(j + 1) + " sd").c_str(),
                         sum.hyper_sd[j], hyper_sd_target[c][j], 0.20) && pass;
    }
  }
  for (int j = 0; j < 4; ++j) {
    if (!(hyper_sd(0, j) > hyper_sd(1, j) && hyper_sd(1, j) > hyper_sd(2, j))) {
      note("hyper " + std::to_string(j + 1) +
           " resample sd not strictly decreasing in T");
      pass = false;
    }
  }
  conclude(1, "replication study over lengths 11/22/44 (2000 replicates each)", pass);
}

// ---------------------------------------------------------------------------
// criterion 2: multinomial scenario, all four estimators unbiased

void criterion_2() {
  const int T = 22, TR = 16, K = 4, R = 400;
  Eigen::VectorXd delta_pct(K);
  delta_pct << 4.5, -0.1, -3.0, -1.4;
  const Eigen::VectorXd delta_frac = delta_pct / 100.0;

  Eigen::MatrixXd base(T, K);
  for (int t = 0; t < T; ++t) {
    base(t, 0) = 0.55 + 0.001 * t;
    base(t, 1) = 0.25 - 0.0005 * t;
    base(t, 2) = 0.12;
    base(t, 3) = 1.0 - base(t, 0) - base(t, 1) - base(t, 2);
  }

  // per estimator: replicate x category
  std::vector<Eigen::MatrixXd> draws(4, Eigen::MatrixXd(R, K));
  int failures = 0;
  const OptimOptions opt{.num_starts = 1};

  for (int rep = 0; rep < R; ++rep) {
    Rng rng(replicate_seed(77001, static_cast<std::uint64_t>(rep)));
    Eigen::VectorXd n_t(T);
    for (int t = 0; t < T; ++t) n_t[t] = std::floor(4000.0 + 1000.0 * rng.uniform());
    CompositionalPanel panel;
    try {
      panel = simulate_multinomial_panel(base, n_t, delta_frac, TR, rng);
      panel.validate();

      for (int m = 0; m < 4; ++m) {
        BuiltModel bm;
        if (m == 0) bm = build_m1(panel, {InterventionKind::level});
        if (m == 1) bm = build_m2(panel, {InterventionKind::level});
        if (m == 2) bm = build_m3(alr_panel(panel, K - 1), {InterventionKind::level});
        if (m == 3) bm = build_m4(clr_panel(panel), {InterventionKind::level});
        auto fit = fit_mle(bm.model, bm.observations, opt);
        const double g = gradient_maxnorm(bm.model, bm.observations, fit.theta);
        if (g > g_max_grad) g_max_grad = g;
        auto fo = kalman_smoother(bm.model, bm.observations, fit.theta);
        if (m <= 1) {
          auto d = extract_discontinuities(bm, fo);
          draws[m].row(rep) = d.estimate.transpose();
        } else {
          auto adj = adjust_series(panel, bm, fo);
          auto path = original_scale_discontinuity(panel, adj);
          Eigen::RowVectorXd avg = Eigen::RowVectorXd::Zero(K);
          for (int t = TR; t < T; ++t) avg += path.row(t);
          draws[m].row(rep) = avg / (T - TR);
        }
      }
    } catch (const std::exception&) {
      ++failures;
      for (int m = 0; m < 4; ++m) draws[m].row(rep).setZero();
    }
  }

  bool pass = failures == 0;
  if (failures > 0) note(std::to_string(failures) + " replicates failed");
  const char* names[4] = {"m1", "m2", "m3", "m4"};
  for (int m = 0; m < 4; ++m) {
    Eigen::VectorXd mean, sd;
    summarize_columns(draws[m], mean, sd);
    for (int k = 0; k < K; ++k) {
      const double bias = mean[k] - delta_pct[k];
      if (std::abs(bias) > sd[k]) {
        note(std::string(names[m]) + " cat " + std::to_string(k + 1) + ": bias " +
             fmt(bias) + " exceeds 1 resample sd " + fmt(sd[k]));
        pass = false;
      }
      if (std::abs(bias) > 3.0 * sd[k] / std::sqrt(static_cast<double>(R))) {
        note(std::string(names[m]) + " cat " + std::to_string(k + 1) + ": bias " +
             fmt(bias) + " exceeds 3 MC se " + fmt(3.0 * sd[k] / std::sqrt(1.0 * R)));
        pass = false;
      }
    }
  }
  conclude(2, "multinomial study: all estimators unbiased for the injected break",
           pass);
}

// ---------------------------------------------------------------------------
// criterion 3: oracle equivalence of filter, smoother, and likelihood

void criterion_3() {
  bool pass = true;
  std::mt19937_64 rng(31415);

  // proper-prior models against the dense conditioning oracle
  for (int rep = 0; rep < 20; ++rep) {
    auto rc = testutil::random_case(rng, /*all_diffuse=*/false);
    auto fo = kalman_smoother(rc.model, rc.observations, rc.theta);
    auto or_ = oracle::joint_gaussian(rc.model, rc.observations, rc.theta, 0.0);
    const int T = static_cast<int>(rc.observations.cols());
    double worst = 0.0;
    for (int t = 0; t < T; ++t) {
      worst = std::max(worst, (fo.filtered_mean[t] - or_.filtered_mean[t])
                                  .cwiseAbs()
                                  .maxCoeff());
      worst = std::max(worst, (fo.smoothed_mean[t] - or_.smoothed_mean[t])
                                  .cwiseAbs()
                                  .maxCoeff());
      worst = std::max(worst, (fo.smoothed_cov[t] - or_.smoothed_cov[t])
                                  .cwiseAbs()
                                  .maxCoeff());
    }
    worst = std::max(worst, std::abs(fo.loglik - or_.loglik));
    if (worst > 1e-6) {
      note("proper case " + std::to_string(rep) + ": worst deviation " + fmt(worst));
      pass = false;
    }
  }

  // diffuse models against the large-kappa limit
  for (int rep = 0; rep < 10; ++rep) {
    auto rc = testutil::random_case(rng, /*all_diffuse=*/true);
    auto fo = kalman_smoother(rc.model, rc.observations, rc.theta);
    const double kappa = 1e8;
    auto or_ = oracle::joint_gaussian(rc.model, rc.observations, rc.theta, kappa);
    const double ll = or_.loglik + 0.5 * or_.num_diffuse * std::log(kappa);
    double worst = std::abs(ll - fo.loglik);
    const int T = static_cast<int>(rc.observations.cols());
    for (int t = 0; t < T; ++t) {
      const double scale = 1.0 + or_.smoothed_mean[t].cwiseAbs().maxCoeff();
      worst = std::max(worst, (fo.smoothed_mean[t] - or_.smoothed_mean[t])
                                      .cwiseAbs()
                                      .maxCoeff() /
                                  scale);
    }
    if (worst > 1e-4) {
      note("diffuse case " + std::to_string(rep) + ": worst deviation " + fmt(worst));
      pass = false;
    }
  }
  conclude(3, "filter/smoother/likelihood match the dense conditioning oracle", pass);
}

// ---------------------------------------------------------------------------
// criterion 4: constraint suite

CompositionalPanel random_panel(std::mt19937_64& rng, int T, int K, int TR) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  CompositionalPanel p;
  p.proportions.resize(T, K);
  const double jump = 2.0 + 2.0 * ud(rng);
  for (int t = 0; t < T; ++t) {
    double rest = 100.0;
    for (int k = 0; k < K - 1; ++k) {
      double v = (k == 0 ? 50.0 : 30.0 / (K - 2 > 0 ? K - 2 : 1)) + 0.3 * nd(rng);
      if (t >= TR) v += (k == 0 ? jump : -jump / (K - 1));
      p.proportions(t, k) = v;
      rest -= v;
    }
    p.proportions(t, K - 1) = rest;
    p.periods.push_back(std::to_string(t + 1));
  }
  p.sample_sizes = Eigen::VectorXd::Constant(T, 4500.0);
  p.redesign_period = TR;
  return p;
}

void criterion_4() {
  bool pass = true;
  std::mt19937_64 rng(2026);
  const OptimOptions opt{.num_starts = 1};

  double worst_sum = 0.0, worst_m2_unit = 0.0, worst_m34_unit = 0.0;
  bool inside = true;
  for (int rep = 0; rep < 100; ++rep) {
    auto panel = random_panel(rng, 12, 3, 7);
    const bool use_m4 = rep % 2 == 1;
    BuiltModel bm = use_m4 ? build_m4(clr_panel(panel), {InterventionKind::level})
                           : build_m2(panel, {InterventionKind::level});
    auto fit = fit_mle(bm.model, bm.observations, opt);
    const double g = gradient_maxnorm(bm.model, bm.observations, fit.theta);
    if (g > g_max_grad) g_max_grad = g;
    auto fo = kalman_smoother(bm.model, bm.observations, fit.theta);
    auto d = extract_discontinuities(bm, fo);
    worst_sum = std::max(worst_sum, std::abs(d.estimate.sum()));

    auto adj = adjust_series(panel, bm, fo);
    for (int t = 0; t < panel.num_periods(); ++t) {
      const double miss = std::abs(adj.adjusted.row(t).sum() - 100.0);
      if (use_m4) {
        worst_m34_unit = std::max(worst_m34_unit, miss);
        for (int k = 0; k < 3; ++k)
          inside = inside && adj.adjusted(t, k) > 0.0 && adj.adjusted(t, k) < 100.0;
      } else {
        worst_m2_unit = std::max(worst_m2_unit, miss);
      }
    }

    // alternate in a logratio model on the same panels
    if (rep % 10 == 0) {
      auto bm3 = build_m3(alr_panel(panel, 2), {InterventionKind::level});
      auto f3 = fit_mle(bm3.model, bm3.observations, opt);
      auto fo3 = kalman_smoother(bm3.model, bm3.observations, f3.theta);
      auto a3 = adjust_series(panel, bm3, fo3);
      for (int t = 0; t < panel.num_periods(); ++t) {
        worst_m34_unit =
            std::max(worst_m34_unit, std::abs(a3.adjusted.row(t).sum() - 100.0));
        for (int k = 0; k < 3; ++k)
          inside = inside && a3.adjusted(t, k) > 0.0 && a3.adjusted(t, k) < 100.0;
      }
    }
  }
  if (worst_sum > 1e-8) {
    note("worst coefficient sum " + fmt(worst_sum) + " > 1e-8");
    pass = false;
  }
  if (worst_m2_unit > 1e-9) {
    note("worst m2 adjusted unit-sum error " + fmt(worst_m2_unit) + " > 1e-9");
    pass = false;
  }
  if (worst_m34_unit > 1e-9) {
    note("worst m3/m4 adjusted unit-sum error " + fmt(worst_m34_unit) + " > 1e-9");
    pass = false;
  }
  if (!inside) {
    note("a logratio-adjusted value left the open interval (0, unit)");
    pass = false;
  }

  // benchmarking restrictions on random instances up to K=5, H=3
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 20; ++rep) {
    const int K = 2 + rep % 4, H = 1 + rep % 3;
    Eigen::VectorXd f(H);
    for (int h = 0; h < H; ++h) f[h] = 1.0 + (rng() % 5);
    f /= f.sum();
    const int n = (H + 1) * K;
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = 100.0 / K + nd(rng);
    Eigen::MatrixXd A(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = 0.3 * nd(rng);
    Eigen::MatrixXd V = A * A.transpose() + 0.2 * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd Rm = build_restrictions(K, H, f);
    const Eigen::VectorXd c = restriction_targets(K, H, 100.0);
    auto res = benchmark_lagrange(y, V, Rm, c);
    const double viol = (Rm * res.adjusted - c).cwiseAbs().maxCoeff();
    if (viol > 1e-8) {
      note("benchmark restriction violation " + fmt(viol));
      pass = false;
    }
    for (int i = 0; i < n; ++i)
      if (res.cov(i, i) > V(i, i) + 1e-12) {
        note("benchmark inflated a variance at index " + std::to_string(i));
        pass = false;
      }
  }

  // domain-consistent aggregation identity
  {
    auto panel = random_panel(rng, 14, 3, 8);
    DomainBlock dom;
    dom.shares = Eigen::VectorXd(2);
    dom.shares << 0.4, 0.6;
    std::mt19937_64 rng2(5);
    dom.proportions = {random_panel(rng2, 14, 3, 8).proportions,
                       random_panel(rng2, 14, 3, 8).proportions};
    // make the total consistent with the domains so the data are coherent
    panel.proportions =
        0.4 * dom.proportions[0] + 0.6 * dom.proportions[1];
    panel.domains = dom;
    auto bm = build_domain_consistent(panel, {InterventionKind::level});
    auto fit = fit_mle(bm.model, bm.observations, opt);
    const double g = gradient_maxnorm(bm.model, bm.observations, fit.theta);
    if (g > g_max_grad) g_max_grad = g;
    auto fo = kalman_smoother(bm.model, bm.observations, fit.theta);
    auto d = extract_discontinuities(bm, fo);
    Eigen::VectorXd total = d.estimate.head(3);
    Eigen::VectorXd agg = 0.4 * d.estimate.segment(3, 3) + 0.6 * d.estimate.segment(6, 3);
    const double miss = (total - agg).cwiseAbs().maxCoeff();
    if (miss > 1e-8) {
      note("domain aggregation identity violated by " + fmt(miss));
      pass = false;
    }
  }
  conclude(4, "zero-sum, unit-sum, benchmark, and aggregation constraints", pass);
}

// ---------------------------------------------------------------------------
// criterion 5: transform round trips

void criterion_5() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.02, 1.0);
  bool pass = true;
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int K = 3 + rep % 5;
    Eigen::VectorXd y(K);
    for (int k = 0; k < K; ++k) y[k] = u(rng);
    y /= y.sum();
    const int ref = rep % K;
    worst = std::max(worst,
                     (alr_inverse(alr_forward(y, ref), ref) - y).cwiseAbs().maxCoeff());
    worst = std::max(worst, (clr_inverse(clr_forward(y)) - y).cwiseAbs().maxCoeff());
  }
  if (worst > 1e-12) {
    note("worst round-trip error " + fmt(worst));
    pass = false;
  }
  conclude(5, "logratio round trips on 1000 random compositions", pass);
}

// ---------------------------------------------------------------------------
// criterion 6: optimizer validity

void criterion_6() {
  bool pass = true;
  if (g_max_grad >= 1e-3) {
    note("worst finite-difference gradient across all fits: " + fmt(g_max_grad));
    pass = false;
  } else {
    note("worst finite-difference gradient across all fits: " + fmt(g_max_grad));
  }

  // single-hyperparameter fit against an exhaustive scan
  const int T = 60;
  StateSpaceModel m;
  m.num_obs = 1;
  m.num_states = 1;
  m.design.assign(T, Eigen::MatrixXd::Ones(1, 1));
  m.transition = Eigen::MatrixXd::Ones(1, 1);
  m.init_defaults();
  m.state_theta[0] = 0;
  m.obs_fixed[0] = 1.0;  // known unit observation noise
  m.num_theta = 1;

  Rng rng(4321);
  Eigen::MatrixXd y(1, T);
  double level = 2.0;
  for (int t = 0; t < T; ++t) {
    if (t > 0) level += 0.6 * rng.normal();
    y(0, t) = level + rng.normal();
  }

  auto fit = fit_mle(m, y);
  double best = -1e300, best_th = 0.0;
  Eigen::VectorXd th(1);
  for (double a = -8.0; a <= 4.0; a += 0.005) {
    th << a;
    const double ll = diffuse_loglik(m, y, th);
    if (ll > best) {
      best = ll;
      best_th = a;
    }
  }
  if (fit.loglik < best - 1e-9) {
    note("optimizer likelihood " + fmt(fit.loglik) + " below grid optimum " + fmt(best));
    pass = false;
  }
  if (std::abs(fit.theta[0] - best_th) > 0.005 + 1e-12) {
    note("optimizer argmax " + fmt(fit.theta[0]) + " vs grid " + fmt(best_th));
    pass = false;
  }
  conclude(6, "first-order conditions and grid-search agreement", pass);
}

// ---------------------------------------------------------------------------
// criterion 7: byte-identical reports

void criterion_7() {
  bool pass = true;
  SimulationScenario sc = length_scenario(11, 8, 5150);
  sc.replicates = 24;

  SimulationReport r1{sc, run_study(sc), {"a", "b", "c"}, {"h1", "h2", "h3", "h4"}};
  SimulationReport r2{sc, run_study(sc), {"a", "b", "c"}, {"h1", "h2", "h3", "h4"}};
  SimulationReport r3{sc, run_study(sc, {.num_starts = 1}, 4),
                      {"a", "b", "c"},
                      {"h1", "h2", "h3", "h4"}};
  const std::string s1 = to_json(r1).dump(2), s2 = to_json(r2).dump(2),
                    s3 = to_json(r3).dump(2);
  if (s1 != s2) {
    note("re-run produced a different study report");
    pass = false;
  }
  if (s1 != s3) {
    note("worker count changed the study report");
    pass = false;
  }

  std::mt19937_64 rng(12);
  auto panel = random_panel(rng, 12, 3, 7);
  auto one = [&]() {
    auto bm = build_m2(panel, {InterventionKind::level});
    auto fit = fit_mle(bm.model, bm.observations);
    auto fo = kalman_smoother(bm.model, bm.observations, fit.theta);
    AnalysisReport rep;
    rep.model = "m2";
    rep.intervention = "level";
    rep.adjust_direction = "after";
    rep.categories = {"x", "y", "z"};
    rep.periods = panel.periods;
    rep.redesign_label = panel.periods[panel.redesign_period];
    rep.coef_names = rep.categories;
    rep.disc = extract_discontinuities(bm, fo);
    rep.theta = fit.theta;
    rep.at_boundary = fit.at_boundary;
    rep.hyper_sd_scale = (0.5 * fit.theta.array()).exp().matrix();
    rep.hyper_names = {"s1", "s2", "s3", "obs"};
    rep.loglik = fit.loglik;
    rep.gradient_norm = gradient_maxnorm(bm.model, bm.observations, fit.theta);
    rep.iterations = fit.iterations;
    rep.converged = fit.converged;
    auto adj = adjust_series(panel, bm, fo);
    rep.adjusted = adj.adjusted;
    rep.discontinuity_path = original_scale_discontinuity(panel, adj);
    rep.trend.resize(panel.num_periods(), 3);
    for (int t = 0; t < panel.num_periods(); ++t)
      for (int k = 0; k < 3; ++k) rep.trend(t, k) = fo.smoothed_mean[t][2 * k];
    return to_json(rep).dump(2) + to_text(rep);
  };
  if (one() != one()) {
    note("re-run produced a different analysis report");
    pass = false;
  }
  conclude(7, "byte-identical reports across reruns and worker counts", pass);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  if (g_failures == 0) {
    std::printf("all acceptance criteria passed\n");
    return 0;
  }
  std::printf("%d criterion(s) failed\n", g_failures);
  return 1;
}
