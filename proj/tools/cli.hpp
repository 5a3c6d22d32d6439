#pragma once

// Command-line front end. `run` is callable in-process so the commands can be
// exercised from tests without spawning a binary.

#include "farmhazard/dataset.hpp"
#include "farmhazard/metrics.hpp"
#include "farmhazard/parallel.hpp"
#include "farmhazard/procedures.hpp"
#include "farmhazard/screening.hpp"
#include "farmhazard/sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace farmhazard::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

struct Manifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void write(const fs::path& dir) const {
    json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["seed"] = seed;
    j["config"] = config;
    j["inputs"] = json::array();
    for (const auto& p : inputs)
      j["inputs"].push_back({{"path", p}, {"sha256", sha256_file(p)}, {"bytes", fs::file_size(p)}});
    j["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ofstream(dir / "manifest.json") << j.dump(2) << '\n';
  }
};

inline fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InputError("cannot create output directory '" + dir + "'");
  return fs::path(dir);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

struct DataArgs {
  std::string csv;
  std::string time_col = "time";
  std::string status_col = "status";
  std::string covariates;
  bool impute = false;
  bool drop_zero_times = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--csv", csv, "Input CSV file")->required();
    cmd->add_option("--time", time_col, "Observed-time column");
    cmd->add_option("--status", status_col, "Event-indicator column (1 event, 0 censored)");
    cmd->add_option("--covariates", covariates, "Comma-separated covariate columns (default: all others)");
    cmd->add_flag("--impute", impute, "Replace missing covariate cells by column medians");
    cmd->add_flag("--drop-zero-times", drop_zero_times, "Remove rows with zero follow-up time");
  }

  SurvivalDataset load(std::ostream& err) const {
    SurvivalDataset ds = load_csv(csv, CsvSchema{time_col, status_col, split_list(covariates)});
    if (impute && ds.has_missing()) ds = impute_median(ds);
    if (!ds.zero_time_rows().empty()) {
      if (drop_zero_times) {
        err << "note: dropped " << ds.zero_time_rows().size() << " row(s) with zero follow-up time\n";
        ds = ds.without_zero_times();
      }
    }
    return ds;
  }

  json to_json() const {
    return {{"csv", csv},           {"time", time_col}, {"status", status_col}, {"covariates", covariates},
            {"impute", impute},     {"drop_zero_times", drop_zero_times}};
  }
};

struct TuneArgs {
  std::string method = "farmhazard-l";
  int folds = 10;
  std::uint64_t seed = 1;
  std::optional<double> lambda;
  std::optional<Index> k;
  std::string criterion = "deviance";
  std::string rule = "min";
  bool no_standardize = false;
  Index grid_points = 100;
  std::optional<Index> max_support;

  void add(CLI::App* cmd, bool with_lambda) {
    cmd->add_option("--method", method, "lasso, enet, scad, farmhazard-l or farmhazard-s");
    cmd->add_option("--cv", folds, "Cross-validation folds");
    cmd->add_option("--seed", seed, "Fold assignment seed");
    if (with_lambda) cmd->add_option("--lambda", lambda, "Fixed lambda (skips cross-validation)");
    cmd->add_option("--k", k, "Number of factors (default: ACT estimate)");
    cmd->add_option("--criterion", criterion, "Cross-validation score: deviance or refit");
    cmd->add_option("--rule", rule, "Lambda choice on the CV curve: min or one-se");
    cmd->add_option("--grid-points", grid_points, "Lambda grid size");
    cmd->add_option("--max-support", max_support, "Truncate CV paths once this many covariates are active");
    cmd->add_flag("--no-standardize", no_standardize, "Fit on the raw covariate scale");
  }

  ProcedureOptions options(unsigned threads) const {
    ProcedureOptions o;
    o.k = k;
    o.standardize = !no_standardize;
    o.cv_folds = folds;
    o.seed = seed;
    o.lambda = lambda;
    o.grid_points = grid_points;
    o.criterion = parse_criterion(criterion);
    if (rule == "min")
      o.rule = SelectionRule::min;
    else if (rule == "one-se" || rule == "one_se")
      o.rule = SelectionRule::one_se;
    else
      throw InputError("unknown rule '" + rule + "' (expected min or one-se)");
    o.path.max_support = max_support;
    o.threads = threads;
    return o;
  }

  json to_json() const {
    json j{{"method", method},       {"cv", folds},   {"seed", seed}, {"criterion", criterion},
           {"rule", rule},           {"standardize", !no_standardize}, {"grid_points", grid_points}};
    j["lambda"] = lambda ? json(*lambda) : json(nullptr);
    j["k"] = k ? json(*k) : json(nullptr);
    j["max_support"] = max_support ? json(*max_support) : json(nullptr);
    return j;
  }
};

inline json cv_json(const CvResult& cv) {
  return {{"lambda_star", cv.lambda_star}, {"best_index", cv.best_index}, {"min_index", cv.min_index},
          {"lambdas", cv.lambdas},         {"cv_curve", cv.cv_curve},     {"cv_se", cv.cv_se}};
}

inline void write_cv_csv(const fs::path& file, const CvResult& cv) {
  std::ofstream os(file);
  os << "index,lambda,cv,se\n";
  for (std::size_t m = 0; m < cv.lambdas.size(); ++m)
    os << m << ',' << fmt17(cv.lambdas[m]) << ',' << fmt17(cv.cv_curve[m]) << ',' << fmt17(cv.cv_se[m]) << '\n';
}

// ---- fit ---------------------------------------------------------------------

inline int cmd_fit(const DataArgs& data, const TuneArgs& tune, const std::string& out_dir, unsigned threads,
                   std::ostream& out, std::ostream& err) {
  Manifest man{"fit", {{"data", data.to_json()}, {"tuning", tune.to_json()}, {"threads", threads}}, tune.seed,
               {data.csv}};
  const Method method = parse_method(tune.method);
  const SurvivalDataset ds = data.load(err);
  MethodSuite suite(ds, tune.options(threads));
  const ProcedureFit& fit = suite.fit(method);
  const fs::path dir = prepare_out(out_dir);

  {
    std::ofstream os(dir / "coefficients.csv");
    os << "index,name,beta\n";
    for (Index j = 0; j < fit.beta_hat.size(); ++j)
      if (fit.beta_hat[j] != 0.0)
        os << j << ',' << ds.column_names()[static_cast<std::size_t>(j)] << ',' << fmt17(fit.beta_hat[j]) << '\n';
  }
  json j;
  j["method"] = method_name(method);
  j["lambda"] = fit.lambda;
  j["n"] = ds.n();
  j["p"] = ds.p();
  j["events"] = ds.n_events();
  j["k"] = is_augmented(method) ? json(fit.k) : json(nullptr);
  j["gamma_hat"] = std::vector<double>(fit.gamma_hat.data(), fit.gamma_hat.data() + fit.gamma_hat.size());
  j["support_size"] = model_size(fit.beta_hat);
  j["converged"] = fit.fit.converged;
  j["kkt_max_violation"] = fit.fit.kkt_max_violation;
  j["kkt_tolerance"] = fit.fit.kkt_tolerance;
  j["iterations"] = fit.fit.n_iterations;
  j["objective"] = fit.fit.objective;
  j["warnings"] = fit.warnings;
  j["cv"] = fit.cv ? cv_json(*fit.cv) : json(nullptr);
  std::ofstream(dir / "fit.json") << j.dump(2) << '\n';
  if (fit.cv) write_cv_csv(dir / "cv.csv", *fit.cv);
  man.write(dir);

  for (const auto& w : fit.warnings) err << "warning: " << w << '\n';
  out << method_name(method) << ": lambda=" << fmt17(fit.lambda) << " support=" << model_size(fit.beta_hat);
  if (is_augmented(method)) out << " k=" << fit.k;
  out << '\n';
  if (!fit.fit.converged) {
    err << "error: solver did not converge (KKT violation " << fit.fit.kkt_max_violation << " > tolerance "
        << fit.fit.kkt_tolerance << ")\n";
    return kExitNumerical;
  }
  return kExitOk;
}

// ---- cv ----------------------------------------------------------------------

inline int cmd_cv(const DataArgs& data, const TuneArgs& tune, const std::string& out_dir, unsigned threads,
                  std::ostream& out, std::ostream& err) {
  Manifest man{"cv", {{"data", data.to_json()}, {"tuning", tune.to_json()}, {"threads", threads}}, tune.seed,
               {data.csv}};
  const Method method = parse_method(tune.method);
  const SurvivalDataset ds = data.load(err);
  ProcedureOptions o = tune.options(threads);
  o.lambda.reset();
  const CvResult cv = cv_select_lambda(ds, method, tune.folds, tune.seed, o);
  const fs::path dir = prepare_out(out_dir);
  write_cv_csv(dir / "cv.csv", cv);
  json j = cv_json(cv);
  j["method"] = method_name(method);
  j["fold_ids"] = cv.fold_ids;
  std::ofstream(dir / "cv.json") << j.dump(2) << '\n';
  man.write(dir);
  out << method_name(method) << ": lambda_star=" << fmt17(cv.lambda_star) << " (index " << cv.best_index << " of "
      << cv.lambdas.size() << ")\n";
  return kExitOk;
}

// ---- screen ------------------------------------------------------------------

struct ScreenArgs {
  std::optional<Index> top_d;
  std::optional<double> threshold;
  std::optional<Index> k;
  std::string baseline = "none";
};

inline int cmd_screen(const DataArgs& data, const ScreenArgs& sa, const std::string& out_dir, unsigned threads,
                      std::ostream& out, std::ostream& err) {
  json cfg{{"data", data.to_json()}, {"baseline", sa.baseline}, {"threads", threads}};
  cfg["top_d"] = sa.top_d ? json(*sa.top_d) : json(nullptr);
  cfg["threshold"] = sa.threshold ? json(*sa.threshold) : json(nullptr);
  cfg["k"] = sa.k ? json(*sa.k) : json(nullptr);
  Manifest man{"screen", cfg, 0, {data.csv}};
  if (sa.top_d.has_value() == sa.threshold.has_value()) throw InputError("screen: give exactly one of --top-d or --threshold");
  const Selector sel = sa.top_d ? Selector::top(*sa.top_d) : Selector::at_least(*sa.threshold);
  const SurvivalDataset ds = data.load(err);
  ScreeningResult res;
  if (sa.baseline == "sis")
    res = sis_baseline(ds, sel, threads);
  else if (sa.baseline == "none")
    res = screen(ds, sa.k, sel, threads);
  else
    throw InputError("unknown baseline '" + sa.baseline + "' (expected sis or none)");

  const fs::path dir = prepare_out(out_dir);
  {
    std::vector<char> failed(static_cast<std::size_t>(ds.p()), 0);
    for (Index j : res.failed) failed[static_cast<std::size_t>(j)] = 1;
    std::ofstream os(dir / "ranking.csv");
    os << "rank,index,name,abs_beta,failed\n";
    for (std::size_t r = 0; r < res.ranking.size(); ++r) {
      const Index j = res.ranking[r];
      os << r + 1 << ',' << j << ',' << ds.column_names()[static_cast<std::size_t>(j)] << ','
         << fmt17(res.beta_marginal[j]) << ',' << int(failed[static_cast<std::size_t>(j)]) << '\n';
    }
  }
  {
    std::ofstream os(dir / "selected.csv");
    os << "index,name\n";
    for (Index j : res.selected) os << j << ',' << ds.column_names()[static_cast<std::size_t>(j)] << '\n';
  }
  man.write(dir);
  for (const auto& w : res.warnings) err << "warning: " << w << '\n';
  out << (sa.baseline == "sis" ? "sis" : "augmented") << ": selected " << res.selected.size() << " of " << ds.p();
  if (sa.baseline != "sis") out << " (k=" << res.k << ")";
  out << '\n';
  return kExitOk;
}

// ---- simulate ----------------------------------------------------------------

struct SimulateArgs {
  std::string preset;
  std::string config;
  std::optional<int> replications;
  std::optional<std::uint64_t> seed;
};

inline int cmd_simulate(const SimulateArgs& sa, const std::string& out_dir, unsigned threads, std::ostream& out,
                        std::ostream& err) {
  if (sa.preset.empty() == sa.config.empty()) throw InputError("simulate: give exactly one of --preset or --config");
  const std::string path = sa.preset.empty() ? sa.config : std::string(FARMHAZARD_PRESET_DIR) + "/" + sa.preset + ".json";
  if (!sa.preset.empty() && !fs::exists(path))
    throw InputError("unknown preset '" + sa.preset + "' (expected table1, table2, fig1, fig2, fig3)");
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  if (sa.replications) doc["base"]["replications"] = *sa.replications;
  if (sa.seed) doc["base"]["seed"] = *sa.seed;
  std::vector<SimConfig> cells = expand_preset(doc);

  json cfg{{"source", path}, {"threads", threads}, {"cells", cells}};
  Manifest man{"simulate", cfg, cells.front().seed, {path}};
  const fs::path dir = prepare_out(out_dir);

  std::vector<ExperimentReport> reports;
  json all = json::array();
  std::size_t idx = 0;
  for (const SimConfig& c : cells) {
    err << "cell " << ++idx << "/" << cells.size() << ": " << setting_name(c.setting) << " p=" << c.p
        << " rho=" << c.rho << " reps=" << c.replications << '\n';
    if (c.setting == Setting::screening) {
      const ScreeningReport r = run_screening_experiment(c, threads);
      const std::string stem = cells.size() == 1 ? "" : "cell" + std::to_string(idx) + "_";
      std::ofstream s1(dir / (stem + "screening.csv"));
      write_screening_csv(s1, r);
      std::ofstream s2(dir / (stem + "roc.csv"));
      write_roc_csv(s2, r);
      const json sj = screening_json(r);
      std::ofstream(dir / (stem + "screening.json")) << sj.dump(2) << '\n';
      all.push_back(sj);
      for (std::size_t i = 0; i < r.augmented.d.size(); ++i)
        out << "d=" << r.augmented.d[i] << " sure augmented=" << fmt17(r.augmented.sure[i].rate)
            << " sis=" << fmt17(r.sis.sure[i].rate) << '\n';
    } else {
      reports.push_back(run_experiment(c, threads));
      const ExperimentReport& r = reports.back();
      all.push_back(report_json(r));
      for (const auto& row : r.rows)
        out << c.name << " p=" << c.p << " rho=" << c.rho << ' ' << method_name(row.method)
            << " sign=" << fmt17(row.sign_rate.rate) << " size=" << fmt17(row.mean_size) << '\n';
    }
  }
  if (!reports.empty()) {
    std::ofstream os(dir / "report.csv");
    write_report_csv(os, reports);
  }
  std::ofstream(dir / "report.json") << all.dump(2) << '\n';
  man.write(dir);
  return kExitOk;
}

// ---- evaluate ----------------------------------------------------------------

struct EvaluateArgs {
  std::string coefficients;
  std::optional<double> split;
  int repeats = 1;
  std::string methods = "farmhazard-l,farmhazard-s,lasso";
  Index top_d = 1500;
};

inline Vector read_coefficients(const std::string& path, const SurvivalDataset& ds) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("index,name,beta", 0) != 0)
    throw InputError(path + ": expected header 'index,name,beta'");
  Vector beta = Vector::Zero(ds.p());
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto a = line.find(','), b = line.rfind(',');
    if (a == std::string::npos || a == b) throw InputError(path + ": row " + std::to_string(row) + " is malformed");
    const std::string name = line.substr(a + 1, b - a - 1);
    const auto& names = ds.column_names();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InputError(path + ": covariate '" + name + "' not found in the evaluation data");
    try {
      beta[it - names.begin()] = std::stod(line.substr(b + 1));
    } catch (const std::exception&) {
      throw InputError(path + ": row " + std::to_string(row) + " has a non-numeric coefficient");
    }
  }
  return beta;
}

inline int cmd_evaluate(const DataArgs& data, const TuneArgs& tune, const EvaluateArgs& ea, const std::string& out_dir,
                        unsigned threads, std::ostream& out, std::ostream& err) {
  json cfg{{"data", data.to_json()}, {"tuning", tune.to_json()}, {"repeats", ea.repeats},
           {"methods", ea.methods},  {"top_d", ea.top_d},         {"threads", threads}};
  cfg["split"] = ea.split ? json(*ea.split) : json(nullptr);
  cfg["coefficients"] = ea.coefficients;
  Manifest man{"evaluate", cfg, tune.seed, {data.csv}};
  const SurvivalDataset ds = data.load(err);
  const fs::path dir = prepare_out(out_dir);

  if (!ea.coefficients.empty()) {
    if (ea.split) throw InputError("evaluate: --coefficients and --split are mutually exclusive");
    man.inputs.push_back(ea.coefficients);
    if (ds.has_missing()) throw InputError("evaluate: covariates contain missing values; use --impute");
    const Vector beta = read_coefficients(ea.coefficients, ds);
    const double c = c_index(ds.x() * beta, ds.z(), ds.delta());
    std::ofstream(dir / "evaluate.json") << json{{"c_index", c}, {"n", ds.n()}}.dump(2) << '\n';
    man.write(dir);
    out << "c_index=" << fmt17(c) << '\n';
    return kExitOk;
  }

  if (!ea.split) throw InputError("evaluate: give --coefficients or --split");
  if (!(*ea.split > 0.0 && *ea.split < 1.0)) throw InputError("evaluate: --split must lie in (0, 1)");
  if (ea.repeats < 1) throw InputError("evaluate: --repeats must be >= 1");
  std::vector<Method> methods;
  for (const auto& m : split_list(ea.methods)) methods.push_back(parse_method(m));
  if (methods.empty()) throw InputError("evaluate: no methods given");
  if (ds.has_missing()) throw InputError("evaluate: covariates contain missing values; use --impute");

  // Standardize once on the full data, as the pipeline prescribes.
  const Standardized st = standardize(ds.x());
  std::vector<std::string> names;
  for (Index j : st.record.retained_columns) names.push_back(ds.column_names()[static_cast<std::size_t>(j)]);
  const SurvivalDataset full(ds.z(), ds.delta(), st.x, names);
  const Index n = full.n();
  const Index n_train = static_cast<Index>(std::llround(*ea.split * static_cast<double>(n)));
  if (n_train < 4 || n - n_train < 2) throw InputError("evaluate: split leaves too few training or test rows");

  std::ofstream csv(dir / "evaluate.csv");
  csv << "repeat,method,c_index,support_size,lambda,k\n";
  std::vector<std::vector<double>> scores(methods.size());
  for (int r = 0; r < ea.repeats; ++r) {
    Rng rng = replication_rng(tune.seed, static_cast<std::uint64_t>(r), 0x5b117);
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Index> train(perm.begin(), perm.begin() + n_train), test(perm.begin() + n_train, perm.end());
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    SurvivalDataset tr = full.subset(train);
    const SurvivalDataset te = full.subset(test);

    std::vector<Index> cols(static_cast<std::size_t>(full.p()));
    std::iota(cols.begin(), cols.end(), Index{0});
    if (ea.top_d > 0 && ea.top_d < full.p()) cols = screen(tr, tune.k, Selector::top(ea.top_d), threads).selected;
    std::vector<std::string> sub_names;
    for (Index j : cols) sub_names.push_back(full.column_names()[static_cast<std::size_t>(j)]);
    const SurvivalDataset tr_sub(tr.z(), tr.delta(), tr.x()(Eigen::all, cols), sub_names);
    const Matrix te_x = te.x()(Eigen::all, cols);

    ProcedureOptions o = tune.options(threads);
    o.lambda = tune.lambda;
    o.seed = tune.seed + static_cast<std::uint64_t>(r);
    MethodSuite suite(tr_sub, o);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      const ProcedureFit& fit = suite.fit(methods[m]);
      const double c = c_index(te_x * fit.beta_hat, te.z(), te.delta());
      scores[m].push_back(c);
      csv << r << ',' << method_name(methods[m]) << ',' << fmt17(c) << ',' << model_size(fit.beta_hat) << ','
          << fmt17(fit.lambda) << ',' << (is_augmented(methods[m]) ? std::to_string(fit.k) : "") << '\n';
    }
    err << "repeat " << r + 1 << "/" << ea.repeats << " done\n";
  }

  json summary = json::array();
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const auto& s = scores[m];
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
    double ss = 0.0;
    for (double v : s) ss += (v - mean) * (v - mean);
    const double se = s.size() > 1 ? std::sqrt(ss / static_cast<double>(s.size() - 1) / static_cast<double>(s.size())) : 0.0;
    summary.push_back({{"method", method_name(methods[m])}, {"mean_c_index", mean}, {"se", se}, {"c_index", s}});
    out << method_name(methods[m]) << ": mean c_index=" << fmt17(mean) << " se=" << fmt17(se) << '\n';
  }
  std::ofstream(dir / "evaluate.json") << json{{"repeats", ea.repeats}, {"split", *ea.split}, {"methods", summary}}.dump(2)
                                       << '\n';
  man.write(dir);
  return kExitOk;
}

// ---- entry point ---------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Factor-augmented regularized Cox regression"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  int threads_opt = 0;
  std::string out_dir = ".";
  app.add_option("--threads", threads_opt, "Worker threads (default: FARMHAZARD_THREADS or all cores)");

  DataArgs data;
  TuneArgs tune;
  ScreenArgs screen_args;
  SimulateArgs sim_args;
  EvaluateArgs eval_args;

  auto* fit = app.add_subcommand("fit", "Fit one procedure and write its coefficients");
  data.add(fit);
  tune.add(fit, true);
  fit->add_option("--out", out_dir, "Output directory");
  fit->add_option("--threads", threads_opt, "Worker threads");

  auto* cv = app.add_subcommand("cv", "Cross-validate lambda for one procedure");
  data.add(cv);
  tune.add(cv, false);
  cv->add_option("--out", out_dir, "Output directory");
  cv->add_option("--threads", threads_opt, "Worker threads");

  auto* scr = app.add_subcommand("screen", "Rank covariates by factor-adjusted marginal fits");
  data.add(scr);
  scr->add_option("--top-d", screen_args.top_d, "Keep the d highest-ranked covariates");
  scr->add_option("--threshold", screen_args.threshold, "Keep covariates with |beta| at least this value");
  scr->add_option("--k", screen_args.k, "Number of factors (default: ACT estimate)");
  scr->add_option("--baseline", screen_args.baseline, "Use 'sis' for the unadjusted baseline");
  scr->add_option("--out", out_dir, "Output directory");
  scr->add_option("--threads", threads_opt, "Worker threads");

  auto* sim = app.add_subcommand("simulate", "Run a simulation preset or config file");
  sim->add_option("--preset", sim_args.preset, "table1, table2, fig1, fig2 or fig3");
  sim->add_option("--config", sim_args.config, "JSON config file");
  sim->add_option("--replications", sim_args.replications, "Override the replication count");
  sim->add_option("--seed", sim_args.seed, "Override the seed");
  sim->add_option("--out", out_dir, "Output directory");
  sim->add_option("--threads", threads_opt, "Worker threads");

  auto* ev = app.add_subcommand("evaluate", "Out-of-sample C-index");
  data.add(ev);
  tune.add(ev, true);
  ev->add_option("--coefficients", eval_args.coefficients, "coefficients.csv written by fit");
  ev->add_option("--split", eval_args.split, "Training fraction for the repeated-split protocol");
  ev->add_option("--repeats", eval_args.repeats, "Number of random splits");
  ev->add_option("--methods", eval_args.methods, "Comma-separated procedures");
  ev->add_option("--top-d", eval_args.top_d, "Covariates kept by screening on each training part (0 = all)");
  ev->add_option("--out", out_dir, "Output directory");
  ev->add_option("--threads", threads_opt, "Worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (threads_opt < 0) throw InputError("--threads must be >= 0");
    const unsigned threads = resolve_threads(static_cast<unsigned>(threads_opt));
    if (*fit) return cmd_fit(data, tune, out_dir, threads, out, err);
    if (*cv) return cmd_cv(data, tune, out_dir, threads, out, err);
    if (*scr) return cmd_screen(data, screen_args, out_dir, threads, out, err);
    if (*sim) return cmd_simulate(sim_args, out_dir, threads, out, err);
    if (*ev) return cmd_evaluate(data, tune, eval_args, out_dir, threads, out, err);
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitInput;
}

}  // namespace farmhazard::cli
