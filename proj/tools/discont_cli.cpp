// Batch front-end: fit discontinuity models to compositional survey series,
// run replication studies, benchmark domain series, and print the naive
// before/after diagnostic.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Dense>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "discont/adjust.hpp"
#include "discont/benchmark.hpp"
#include "discont/builders.hpp"
#include "discont/estimation.hpp"
#include "discont/io.hpp"
#include "discont/panel.hpp"
#include "discont/report.hpp"
#include "discont/simulate.hpp"
#include "discont/statespace.hpp"
#include "discont/transforms.hpp"

using namespace discont;

namespace {

struct CommonInput {
  std::string series, sizes, se, redesign, end_period;
  std::string output = "discont_report";
};

void add_common(CLI::App* cmd, CommonInput& in) {
  cmd->add_option("--series", in.series, "proportion series csv (period,cat_1..cat_K)")
      ->required();
  cmd->add_option("--sizes", in.sizes, "sample size csv (period,n)")->required();
  cmd->add_option("--se", in.se, "optional per-cell standard error csv");
  cmd->add_option("--redesign-period", in.redesign,
                  "first period observed under the new design (label or 1-based index)")
      ->required();
  cmd->add_option("--end-period", in.end_period,
                  "truncate the series after this period (label or 1-based index)");
  cmd->add_option("--output", in.output, "output path prefix");
}

NamedPanel load_panel(const CommonInput& in) {
  NamedPanel np = read_named_panel(in.series, in.sizes, in.se);
  if (!in.end_period.empty())
    truncate_panel(np.panel,
                   resolve_period(np.panel.periods, in.end_period, "--end-period"));
  np.panel.redesign_period =
      resolve_period(np.panel.periods, in.redesign, "--redesign-period");
  np.panel.validate();
  return np;
}

int run_analyze(const CommonInput& in, const std::string& model,
                const std::string& intervention, const std::string& adjust,
                const std::string& reference_cat, int seasonal_period,
                bool variance_break, const std::vector<std::string>& domain_series,
                const std::string& shares_csv) {
  NamedPanel np = load_panel(in);
  auto& panel = np.panel;
  const int K = panel.num_categories();

  InterventionSpec ispec;
  ispec.kind = intervention == "slope"      ? InterventionKind::slope
               : intervention == "seasonal" ? InterventionKind::seasonal
                                            : InterventionKind::level;
  ispec.adjust_direction =
      adjust == "before" ? AdjustDirection::before : AdjustDirection::after;
  ispec.seasonal_period = seasonal_period;

  ModelSpec mspec;
  mspec.variance_break = variance_break;

  if (!reference_cat.empty() && model != "m3")
    throw CLI::ValidationError("--reference-cat", "only meaningful with --model m3");
  if (ispec.kind == InterventionKind::seasonal && seasonal_period < 2)
    throw CLI::ValidationError("--seasonal-period",
                               "required (>= 2) with --intervention seasonal");

  // assemble the model
  BuiltModel bm;
  std::vector<std::string> coef_names, hyper_names, series_names;
  bool domain_model = false;

  if (!domain_series.empty()) {
    domain_model = true;
    DomainBlock dom;
    std::vector<double> shares;
    for (const auto& tok : io::split_line(shares_csv))
      shares.push_back(std::stod(tok));
    if (shares.size() != domain_series.size())
      throw CLI::ValidationError("--shares",
                                 "needs one share per --domain-series file");
    dom.shares = Eigen::Map<Eigen::VectorXd>(shares.data(), shares.size());
    for (const auto& path : domain_series) {
      NamedPanel d = read_named_panel(path, in.sizes);
      if (!in.end_period.empty())
        truncate_panel(d.panel,
                       resolve_period(d.panel.periods, in.end_period, "--end-period"));
      dom.proportions.push_back(d.panel.proportions);
    }
    panel.domains = dom;
    panel.validate();
    bm = build_domain_consistent(panel, ispec, mspec);
    std::vector<std::string> groups = {"total"};
    for (size_t h = 0; h < domain_series.size(); ++h)
      groups.push_back("domain_" + std::to_string(h + 1));
    for (const auto& g : groups)
      for (const auto& c : np.categories) series_names.push_back(g + ":" + c);
    coef_names = series_names;
  } else if (model == "m1") {
    bm = build_m1(panel, ispec, mspec);
    series_names = coef_names = np.categories;
  } else if (model == "m2") {
    bm = build_m2(panel, ispec, mspec);
    series_names = coef_names = np.categories;
  } else if (model == "m3") {
    int ref = K - 1;
    if (!reference_cat.empty()) {
      for (int k = 0; k < K; ++k)
        if (np.categories[k] == reference_cat) ref = -2 - k;
      if (ref >= 0) {
        try {
          const long idx = std::stol(reference_cat);
          if (idx < 1 || idx > K)
            throw CLI::ValidationError("--reference-cat",
                                       "must name a category or give a 1-based index");
          ref = static_cast<int>(idx - 1);
        } catch (const std::invalid_argument&) {
          throw CLI::ValidationError("--reference-cat",
                                     "'" + reference_cat + "' matches no category");
        }
      } else {
        ref = -ref - 2;
      }
    }
    bm = build_m3(alr_panel(panel, ref), ispec, mspec);
    for (int k = 0; k < K; ++k) {
      if (k == ref) continue;
      const std::string nm = "log(" + np.categories[k] + "/" + np.categories[ref] + ")";
      series_names.push_back(nm);
      coef_names.push_back(nm);
    }
  } else if (model == "m4") {
    bm = build_m4(clr_panel(panel), ispec, mspec);
    for (const auto& c : np.categories) {
      series_names.push_back("clr(" + c + ")");
      coef_names.push_back("clr(" + c + ")");
    }
  } else {
    throw CLI::ValidationError("--model", "unknown model '" + model + "'");
  }

  if (ispec.kind == InterventionKind::seasonal) {
    if (model != "m2" && model != "m4")
      throw CLI::ValidationError("--intervention",
                                 "seasonal interventions support m2 and m4 only");
    bm = build_seasonal_intervention(panel, seasonal_period,
                                     model == "m2" ? ModelVariant::M2
                                                   : ModelVariant::M4,
                                     mspec);
    coef_names.clear();
    for (const auto& s : series_names)
      for (int j = 1; j < seasonal_period; ++j)
        coef_names.push_back(s + " season state " + std::to_string(j));
  }

  // fit and smooth
  auto fit = fit_mle(bm.model, bm.observations);
  auto fo = kalman_smoother(bm.model, bm.observations, fit.theta);
  auto disc = extract_discontinuities(bm, fo);

  AnalysisReport rep;
  rep.model = domain_model ? "domain-consistent" : model;
  rep.intervention = intervention;
  rep.adjust_direction = adjust;
  rep.categories = np.categories;
  rep.periods = panel.periods;
  rep.redesign_label = panel.periods[panel.redesign_period];
  rep.coef_names = coef_names;
  rep.disc = disc;
  rep.theta = fit.theta;
  rep.at_boundary = fit.at_boundary;
  rep.hyper_sd_scale = (0.5 * fit.theta).array().exp();
  rep.loglik = fit.loglik;
  rep.gradient_norm = gradient_maxnorm(bm.model, bm.observations, fit.theta);
  rep.iterations = fit.iterations;
  rep.converged = fit.converged;
  if (!fit.converged)
    rep.warnings.push_back("optimizer did not meet its convergence tolerances; "
                           "estimates are reported anyway");
  for (size_t i = 0; i < fit.at_boundary.size(); ++i)
    if (fit.at_boundary[i])
      rep.warnings.push_back("hyperparameter " + std::to_string(i + 1) +
                             " at the zero-variance boundary");

  // hyperparameter names follow the theta layout of the builders
  const int p = bm.num_series;
  if (ispec.kind == InterventionKind::seasonal) {
    for (const auto& s : series_names) rep.hyper_names.push_back("slope sd " + s);
    for (const auto& s : series_names) rep.hyper_names.push_back("seasonal sd " + s);
  } else {
    for (const auto& s : series_names) rep.hyper_names.push_back("slope sd " + s);
  }
  if (bm.obs_theta_index >= 0) {
    rep.hyper_names.push_back("survey error sd");
    if (variance_break) rep.hyper_names.push_back("survey error sd (post)");
  } else {
    for (const auto& s : series_names)
      rep.hyper_names.push_back("survey error sd " + s);
    if (variance_break)
      for (const auto& s : series_names)
        rep.hyper_names.push_back("survey error sd (post) " + s);
  }

  // adjusted series and discontinuity path
  std::vector<std::string> out_names = series_names;
  if (domain_model) {
    rep.adjusted = adjust_model_scale(bm, fo);
    rep.discontinuity_path.resize(0, 0);
  } else {
    auto adj = adjust_series(panel, bm, fo);
    rep.adjusted = adj.adjusted;
    rep.discontinuity_path = original_scale_discontinuity(panel, adj);
    out_names = np.categories;
    if (adj.out_of_range)
      rep.warnings.push_back(
          "raw-scale adjustment pushed a proportion outside [0, unit]; consider "
          "a logratio model");
  }

  const int T = panel.num_periods();
  rep.trend.resize(T, p);
  for (int t = 0; t < T; ++t)
    for (int k = 0; k < p; ++k) rep.trend(t, k) = fo.smoothed_mean[t][2 * k];

  if (!rep.has_naive && !domain_model) {
    rep.naive = naive_difference(panel);
    rep.has_naive = true;
  }

  write_json_file(in.output + ".json", to_json(rep));
  write_text_file(in.output + ".txt", to_text(rep));
  write_series_csv(in.output + "_adjusted.csv", out_names, panel.periods, rep.adjusted);
  std::cout << to_text(rep);
  return 0;
}

SimulationScenario scenario_from_json(const nlohmann::json& j) {
  SimulationScenario sc;
  sc.total_periods = j.at("total_periods").get<int>();
  sc.redesign_period = j.at("redesign_period").get<int>() - 1;  // 1-based in files
  auto vec = [&](const char* key) {
    const auto a = j.at(key).get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(a.data(), a.size()).eval();
  };
  sc.start_levels = vec("start_levels");
  sc.start_slopes = vec("start_slopes");
  sc.slope_sd = vec("slope_sd");
  sc.obs_sd = j.at("obs_sd").get<double>();
  sc.beta = vec("beta");
  sc.n_min = j.at("n_min").get<double>();
  sc.n_max = j.at("n_max").get<double>();
  sc.replicates = j.value("replicates", 200);
  sc.seed = j.value("seed", std::uint64_t{1});
  return sc;
}

int run_simulate(const std::string& scenario_path, int replicates, long seed,
                 int workers, int starts, const std::string& output) {
  std::ifstream f(scenario_path);
  if (!f) throw std::runtime_error(scenario_path + ": cannot open scenario file");
  nlohmann::json sj = nlohmann::json::parse(f);
  SimulationScenario sc = scenario_from_json(sj);
  if (replicates > 0) sc.replicates = replicates;
  if (seed >= 0) sc.seed = static_cast<std::uint64_t>(seed);

  SimulationReport rep;
  rep.scenario = sc;
  rep.summary = run_study(sc, {.num_starts = starts}, workers);
  const int p = static_cast<int>(sc.beta.size());
  if (sj.contains("names")) {
    rep.beta_names = sj.at("names").get<std::vector<std::string>>();
  } else {
    for (int k = 0; k < p; ++k)
      rep.beta_names.push_back("series_" + std::to_string(k + 1));
  }
  for (int k = 0; k < p; ++k)
    rep.hyper_names.push_back("slope sd " + rep.beta_names[k]);
  rep.hyper_names.push_back("survey error sd");

  write_json_file(output + ".json", to_json(rep));
  write_text_file(output + ".txt", to_text(rep));
  std::cout << to_text(rep);
  return 0;
}

int run_benchmark(const std::string& input_path, const std::string& output) {
  std::ifstream f(input_path);
  if (!f) throw std::runtime_error(input_path + ": cannot open input file");
  nlohmann::json j = nlohmann::json::parse(f);

  const auto shares_v = j.at("shares").get<std::vector<double>>();
  const int H = static_cast<int>(shares_v.size());
  const Eigen::VectorXd shares =
      Eigen::Map<const Eigen::VectorXd>(shares_v.data(), H);
  const double unit = j.value("unit", 100.0);

  const auto total = j.at("total").get<std::vector<std::vector<double>>>();
  const auto domains =
      j.at("domains").get<std::vector<std::vector<std::vector<double>>>>();
  if (static_cast<int>(domains.size()) != H)
    throw std::runtime_error("need one domain series per share");
  const int T = static_cast<int>(total.size());
  const int K = static_cast<int>(total.front().size());
  const int n = (H + 1) * K;

  const auto vars = j.at("variances").get<std::vector<std::vector<double>>>();
  if (static_cast<int>(vars.size()) != T ||
      static_cast<int>(vars.front().size()) != n)
    throw std::runtime_error("variances must be per period, one per stacked value");

  const Eigen::MatrixXd R = build_restrictions(K, H, shares);
  const Eigen::VectorXd c = restriction_targets(K, H, unit);

  nlohmann::ordered_json out;
  out["unit"] = unit;
  out["shares"] = shares_v;
  nlohmann::ordered_json periods = nlohmann::ordered_json::array();
  bool any_warn = false;
  for (int t = 0; t < T; ++t) {
    Eigen::VectorXd y(n);
    for (int k = 0; k < K; ++k) y[k] = total[t][k];
    for (int h = 0; h < H; ++h)
      for (int k = 0; k < K; ++k) y[(h + 1) * K + k] = domains[h][t][k];
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) V(i, i) = vars[t][i];

    auto res = benchmark_lagrange(y, V, R, c);
    any_warn = any_warn || res.ill_conditioned;

    nlohmann::ordered_json pj;
    pj["adjusted_total"] = std::vector<double>(res.adjusted.data(),
                                               res.adjusted.data() + K);
    nlohmann::ordered_json dj = nlohmann::ordered_json::array();
    for (int h = 0; h < H; ++h)
      dj.push_back(std::vector<double>(res.adjusted.data() + (h + 1) * K,
                                       res.adjusted.data() + (h + 2) * K));
    pj["adjusted_domains"] = dj;
    nlohmann::ordered_json vj = nlohmann::ordered_json::array();
    for (int i = 0; i < n; ++i) vj.push_back(res.cov(i, i));
    pj["adjusted_variances"] = vj;
    pj["condition"] = res.condition;
    periods.push_back(pj);
  }
  out["periods"] = periods;
  if (any_warn)
    out["warnings"] = {"restriction system condition number exceeds 1e10"};

  write_json_file(output + ".json", out);
  std::cout << "benchmarked " << T << " period(s); wrote " << output << ".json\n";
  if (any_warn) std::cout << "warning: restriction system is ill conditioned\n";
  return 0;
}

int run_diff(const CommonInput& in) {
  NamedPanel np = load_panel(in);
  auto d = naive_difference(np.panel);

  nlohmann::ordered_json out;
  out["redesign_period"] = np.panel.periods[np.panel.redesign_period];
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::ostringstream text;
  text << "naive before/after differences at " << out["redesign_period"].get<std::string>()
       << "\n";
  for (int k = 0; k < d.estimate.size(); ++k) {
    nlohmann::ordered_json r;
    r["name"] = np.categories[k];
    r["estimate"] = d.estimate[k];
    r["se"] = d.se[k];
    r["flag"] = d.flag[k];
    rows.push_back(r);
    text << "  " << np.categories[k] << ": " << format_full(d.estimate[k]) << "  (se "
         << format_full(d.se[k]) << ") " << d.flag[k] << "\n";
  }
  out["differences"] = rows;
  write_json_file(in.output + ".json", out);
  write_text_file(in.output + ".txt", text.str());
  std::cout << text.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"discontinuity estimation for compositional survey series"};
  app.require_subcommand(1);

  CommonInput ana_in, diff_in;
  std::string model = "m2", intervention = "level", adjust = "after";
  std::string reference_cat;
  int seasonal_period = 0;
  bool variance_break = false;
  std::vector<std::string> domain_series;
  std::string shares_csv;

  auto* ana = app.add_subcommand("analyze", "fit a model and adjust the series");
  add_common(ana, ana_in);
  ana->add_option("--model", model, "m1, m2, m3, or m4")
      ->check(CLI::IsMember({"m1", "m2", "m3", "m4"}));
  ana->add_option("--intervention", intervention, "level, slope, or seasonal")
      ->check(CLI::IsMember({"level", "slope", "seasonal"}));
  ana->add_option("--adjust", adjust, "which side of the redesign to correct")
      ->check(CLI::IsMember({"after", "before"}));
  ana->add_option("--reference-cat", reference_cat,
                  "m3 reference category (name or 1-based index)");
  ana->add_option("--seasonal-period", seasonal_period,
                  "season length for seasonal interventions");
  ana->add_flag("--variance-break", variance_break,
                "separate survey error variances before and after the redesign");
  ana->add_option("--domain-series", domain_series,
                  "subpopulation series csv files (joint domain-consistent fit)");
  ana->add_option("--shares", shares_csv,
                  "comma-separated population shares for --domain-series");

  std::string scenario_path, sim_output = "discont_study";
  int replicates = 0, workers = 1, starts = 1;
  long seed = -1;
  auto* sim = app.add_subcommand("simulate", "run a replication study");
  sim->add_option("--scenario", scenario_path, "scenario json file")->required();
  sim->add_option("--replicates", replicates, "override the scenario's replicate count");
  sim->add_option("--seed", seed, "override the scenario's master seed");
  sim->add_option("--workers", workers, "worker threads (any count gives the same result)");
  sim->add_option("--starts", starts, "optimizer starts per fit");
  sim->add_option("--output", sim_output, "output path prefix");

  std::string bench_input, bench_output = "discont_benchmark";
  auto* ben = app.add_subcommand("benchmark",
                                 "reconcile domain series with the national series");
  ben->add_option("--input", bench_input, "json with total, domains, shares, variances")
      ->required();
  ben->add_option("--output", bench_output, "output path prefix");

  auto* dif = app.add_subcommand("diff", "naive before/after difference diagnostic");
  add_common(dif, diff_in);

  CLI11_PARSE(app, argc, argv);

  try {
    if (ana->parsed())
      return run_analyze(ana_in, model, intervention, adjust, reference_cat,
                         seasonal_period, variance_break, domain_series, shares_csv);
    if (sim->parsed())
      return run_simulate(scenario_path, replicates, seed, workers, starts, sim_output);
    if (ben->parsed()) return run_benchmark(bench_input, bench_output);
    if (dif->parsed()) return run_diff(diff_in);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
