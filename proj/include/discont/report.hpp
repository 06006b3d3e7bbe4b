#ifndef DISCONT_REPORT_HPP
#define DISCONT_REPORT_HPP

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "discont/estimation.hpp"
#include "discont/io.hpp"
#include "discont/simulate.hpp"

namespace discont {

using json = nlohmann::ordered_json;

namespace report {

inline json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json mat_to_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    a.push_back(row);
  }
  return a;
}

// fixed-width bin counts, plot-ready
inline json histogram(const Eigen::VectorXd& draws, int bins = 20) {
  json h;
  const double lo = draws.minCoeff(), hi = draws.maxCoeff();
  const double width = hi > lo ? (hi - lo) / bins : 1.0;
  std::vector<int> counts(bins, 0);
  for (int i = 0; i < draws.size(); ++i) {
    int b = static_cast<int>((draws[i] - lo) / width);
    if (b >= bins) b = bins - 1;
    if (b < 0) b = 0;
    ++counts[b];
  }
  h["lower"] = lo;
  h["upper"] = hi > lo ? hi : lo + 1.0;
  h["counts"] = counts;
  return h;
}

}  // namespace report

struct AnalysisReport {
  std::string model;
  std::string intervention;
  std::string adjust_direction;
  std::vector<std::string> categories;
  std::vector<std::string> periods;
  std::string redesign_label;
  std::vector<std::string> coef_names;
  Discontinuity disc;                 // model-scale coefficients
  Discontinuity naive;                // year-over-year diagnostic
  bool has_naive = false;
  std::vector<std::string> hyper_names;
  Eigen::VectorXd hyper_sd_scale;     // exp(theta/2)
  Eigen::VectorXd theta;
  std::vector<bool> at_boundary;
  double loglik = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
  Eigen::MatrixXd adjusted;           // T x K, panel unit
  Eigen::MatrixXd discontinuity_path; // T x K, observed minus adjusted
  Eigen::MatrixXd trend;              // T x p, smoothed model-scale trend levels
};

inline json to_json(const AnalysisReport& r) {
  json j;
  j["model"] = r.model;
  j["intervention"] = r.intervention;
  j["adjust_direction"] = r.adjust_direction;
  j["categories"] = r.categories;
  j["periods"] = r.periods;
  j["redesign_period"] = r.redesign_label;
  json coefs = json::array();
  for (int i = 0; i < r.disc.estimate.size(); ++i) {
    json c;
    c["name"] = r.coef_names[i];
    c["estimate"] = r.disc.estimate[i];
    c["se"] = r.disc.se[i];
    c["flag"] = r.disc.flag[i];
    coefs.push_back(c);
  }
  j["discontinuities"] = coefs;
  if (r.has_naive) {
    json nv = json::array();
    for (int i = 0; i < r.naive.estimate.size(); ++i) {
      json c;
      c["name"] = r.categories[i];
      c["estimate"] = r.naive.estimate[i];
      c["se"] = r.naive.se[i];
      c["flag"] = r.naive.flag[i];
      nv.push_back(c);
    }
    j["naive_differences"] = nv;
  }
  json hyp = json::array();
  for (int i = 0; i < r.theta.size(); ++i) {
    json h;
    h["name"] = r.hyper_names[i];
    h["sd"] = r.hyper_sd_scale[i];
    h["log_variance"] = r.theta[i];
    h["at_boundary"] = static_cast<bool>(r.at_boundary[i]);
    hyp.push_back(h);
  }
  j["hyperparameters"] = hyp;
  j["loglik"] = r.loglik;
  j["gradient_norm"] = r.gradient_norm;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["warnings"] = r.warnings;
  j["adjusted"] = report::mat_to_json(r.adjusted);
  j["discontinuity_path"] = report::mat_to_json(r.discontinuity_path);
  j["trend"] = report::mat_to_json(r.trend);
  return j;
}

inline std::string to_text(const AnalysisReport& r) {
  std::ostringstream os;
  os << "discontinuity analysis (" << r.model << ", " << r.intervention
     << " intervention, adjust " << r.adjust_direction << ")\n";
  os << "redesign period: " << r.redesign_label << "\n";
  os << "log-likelihood: " << format_full(r.loglik) << "\n";
  os << "converged: " << (r.converged ? "yes" : "NO") << " after " << r.iterations
     << " iterations, gradient max-norm " << format_full(r.gradient_norm) << "\n\n";

  os << "estimated discontinuities (model scale)\n";
  for (int i = 0; i < r.disc.estimate.size(); ++i)
    os << "  " << r.coef_names[i] << ": " << format_full(r.disc.estimate[i])
       << "  (se " << format_full(r.disc.se[i]) << ") " << r.disc.flag[i] << "\n";

  if (r.has_naive) {
    os << "\nnaive before/after differences\n";
    for (int i = 0; i < r.naive.estimate.size(); ++i)
      os << "  " << r.categories[i] << ": " << format_full(r.naive.estimate[i])
         << "  (se " << format_full(r.naive.se[i]) << ") " << r.naive.flag[i] << "\n";
  }

  os << "\nhyperparameters (standard deviation scale)\n";
  for (int i = 0; i < r.theta.size(); ++i)
    os << "  " << r.hyper_names[i] << ": " << format_full(r.hyper_sd_scale[i])
       << (r.at_boundary[i] ? "  [boundary]" : "") << "\n";

  for (const auto& w : r.warnings) os << "\nwarning: " << w << "\n";
  return os.str();
}

struct SimulationReport {
  SimulationScenario scenario;
  StudySummary summary;
  std::vector<std::string> beta_names, hyper_names;
};

inline json to_json(const SimulationReport& r) {
  json j;
  json sc;
  sc["total_periods"] = r.scenario.total_periods;
  sc["redesign_period"] = r.scenario.redesign_period + 1;  // 1-based in reports
  sc["start_levels"] = report::vec_to_json(r.scenario.start_levels);
  sc["start_slopes"] = report::vec_to_json(r.scenario.start_slopes);
  sc["slope_sd"] = report::vec_to_json(r.scenario.slope_sd);
  sc["obs_sd"] = r.scenario.obs_sd;
  sc["beta"] = report::vec_to_json(r.scenario.beta);
  sc["n_min"] = r.scenario.n_min;
  sc["n_max"] = r.scenario.n_max;
  sc["replicates"] = r.scenario.replicates;
  sc["seed"] = r.scenario.seed;
  j["scenario"] = sc;

  j["replicates_done"] = r.summary.replicates_done;
  j["failures"] = r.summary.failures;
  const bool have_sd = r.summary.replicates_done >= 2;

  json betas = json::array();
  for (int k = 0; k < r.summary.beta_mean.size(); ++k) {
    json b;
    b["name"] = r.beta_names[k];
    b["true_value"] = r.scenario.beta[k];
    b["mean"] = r.summary.beta_mean[k];
    if (have_sd) {
      b["sd"] = r.summary.beta_sd[k];
      b["histogram"] = report::histogram(r.summary.beta_draws.col(k));
    } else {
      b["sd"] = "unavailable";
    }
    betas.push_back(b);
  }
  j["discontinuities"] = betas;

  json hyps = json::array();
  for (int k = 0; k < r.summary.hyper_mean.size(); ++k) {
    json h;
    h["name"] = r.hyper_names[k];
    h["mean"] = r.summary.hyper_mean[k];
    if (have_sd) {
      h["sd"] = r.summary.hyper_sd[k];
      h["histogram"] = report::histogram(r.summary.hyper_draws.col(k));
    } else {
      h["sd"] = "unavailable";
    }
    hyps.push_back(h);
  }
  j["hyperparameters"] = hyps;
  return j;
}

inline std::string to_text(const SimulationReport& r) {
  std::ostringstream os;
  os << "replication study: " << r.summary.replicates_done << " of "
     << r.scenario.replicates << " replicates fitted, " << r.summary.failures
     << " failures\n\n";
  const bool have_sd = r.summary.replicates_done >= 2;
  os << "discontinuities (true / mean / sd)\n";
  for (int k = 0; k < r.summary.beta_mean.size(); ++k) {
    os << "  " << r.beta_names[k] << ": " << format_full(r.scenario.beta[k]) << " / "
       << format_full(r.summary.beta_mean[k]) << " / "
       << (have_sd ? format_full(r.summary.beta_sd[k]) : std::string("unavailable"))
       << "\n";
  }
  os << "\nhyperparameters (mean / sd)\n";
  for (int k = 0; k < r.summary.hyper_mean.size(); ++k) {
    os << "  " << r.hyper_names[k] << ": " << format_full(r.summary.hyper_mean[k])
       << " / "
       << (have_sd ? format_full(r.summary.hyper_sd[k]) : std::string("unavailable"))
       << "\n";
  }
  return os.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << content;
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << j.dump(2) << '\n';
}

}  // namespace discont

#endif
