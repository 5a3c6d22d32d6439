#pragma once

// Data generators and the replication harness for the selection and screening
// experiments.

#include "farmhazard/core.hpp"
#include "farmhazard/cox.hpp"
#include "farmhazard/dataset.hpp"
#include "farmhazard/factor.hpp"
#include "farmhazard/metrics.hpp"
#include "farmhazard/parallel.hpp"
#include "farmhazard/procedures.hpp"
#include "farmhazard/screening.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace farmhazard {

using Rng = std::mt19937_64;

/// Independent stream for replication `rep` of an experiment seeded `seed`.
inline Rng replication_rng(std::uint64_t seed, std::uint64_t rep, std::uint64_t salt = 0) {
  std::seed_seq seq{seed, rep, salt};
  return Rng(seq);
}

inline Matrix normal_matrix(Index rows, Index cols, double sd, Rng& rng) {
  std::normal_distribution<double> nd(0.0, sd);
  Matrix m(rows, cols);
  // Row-major fill so a prefix of rows does not depend on the column count.
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = nd(rng);
  return m;
}

struct FactorDesign {
  Matrix x, f, u, b;
};

/// x_i = B f_i + u_i, B and f standard normal, u ~ N(0, u_var).
inline FactorDesign gen_factor_design(Index n, Index p, Index k, Rng& rng, double u_var = 2.0) {
  if (k < 0) throw InputError("factor design: k must be >= 0");
  FactorDesign d;
  d.b = normal_matrix(p, k, 1.0, rng);
  d.f = normal_matrix(n, k, 1.0, rng);
  d.u = normal_matrix(n, p, std::sqrt(u_var), rng);
  d.x = d.u;
  if (k) d.x.noalias() += d.f * d.b.transpose();
  return d;
}

/// Rows N(0, Sigma_rho) via sqrt(rho) g 1' + sqrt(1 - rho) eps.
inline Matrix gen_equicorrelated(Index n, Index p, double rho, Rng& rng) {
  if (!(rho >= 0.0 && rho < 1.0)) throw InputError("equicorrelated design: rho must lie in [0, 1)");
  std::normal_distribution<double> nd;
  Matrix x(n, p);
  const double a = std::sqrt(rho), b = std::sqrt(1.0 - rho);
  for (Index i = 0; i < n; ++i) {
    const double g = nd(rng);
    for (Index j = 0; j < p; ++j) x(i, j) = a * g + b * nd(rng);
  }
  return x;
}

struct SurvivalDraw {
  Vector z;
  IntVector delta;
};

/// T ~ Exp(exp(x'beta)), C ~ Exp(ratio * exp(x'beta)); ratio = 3/7 gives 30%
/// censoring regardless of x.
inline SurvivalDraw gen_survival(const Matrix& x, const Vector& beta_star, Rng& rng, double censor_ratio = 3.0 / 7.0) {
  const Vector eta = x * beta_star;
  if (!eta.allFinite()) throw InputError("gen_survival: non-finite linear predictor");
  std::exponential_distribution<double> ex(1.0);
  SurvivalDraw s;
  s.z.resize(x.rows());
  s.delta.resize(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const double rate = std::exp(eta[i]);
    const double t = ex(rng) / rate;
    const double c = censor_ratio > 0.0 ? ex(rng) / (censor_ratio * rate) : std::numeric_limits<double>::infinity();
    s.z[i] = std::min(t, c);
    s.delta[i] = t <= c ? 1 : 0;
  }
  return s;
}

enum class Setting { factor, equicorrelated, screening };

inline const char* setting_name(Setting s) {
  switch (s) {
    case Setting::factor: return "factor";
    case Setting::equicorrelated: return "equicorrelated";
    case Setting::screening: return "screening";
  }
  return "?";
}

inline Setting parse_setting(const std::string& s) {
  if (s == "factor") return Setting::factor;
  if (s == "equicorrelated") return Setting::equicorrelated;
  if (s == "screening") return Setting::screening;
  throw InputError("unknown setting '" + s + "' (expected factor, equicorrelated, screening)");
}

struct BetaSpec {
  Index support_size = 4;
  bool uniform = true;  // false: every support entry equals `value`
  double value = 2.0;
  double lo = 2.0;
  double hi = 5.0;
};

struct SimConfig {
  std::string name = "custom";
  Setting setting = Setting::factor;
  Index n = 200;
  Index p = 500;
  Index k = 3;                  // true factor count (factor / screening settings)
  double rho = 0.0;             // equicorrelated setting
  double u_var = 2.0;           // idiosyncratic variance (factor setting)
  BetaSpec beta;
  double censor_ratio = 3.0 / 7.0;
  int replications = 200;
  std::uint64_t seed = 1;
  std::vector<Method> methods{Method::farmhazard_s, Method::farmhazard_l, Method::lasso, Method::scad,
                              Method::elastic_net};
  std::optional<Index> fit_k;   // factors used by the procedures; ACT when absent
  int cv_folds = 10;
  Criterion criterion = Criterion::refit;
  std::optional<Index> max_support = 50;  // path truncation during tuning
  Index top_d = 50;             // screening selector
  std::vector<Index> top_d_grid{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};

  void validate() const {
    if (n < 4) throw InputError("config: n must be >= 4");
    if (p < 1) throw InputError("config: p must be >= 1");
    if (k < 0) throw InputError("config: k must be >= 0");
    if (!(rho >= 0.0 && rho < 1.0)) throw InputError("config: rho must lie in [0, 1), got " + std::to_string(rho));
    if (!(u_var > 0.0)) throw InputError("config: u_var must be > 0");
    if (beta.support_size < 0 || beta.support_size > p) throw InputError("config: support_size must lie in [0, p]");
    if (beta.uniform && !(beta.lo <= beta.hi)) throw InputError("config: beta lo must not exceed hi");
    if (replications < 1) throw InputError("config: replications must be >= 1");
    if (!(censor_ratio >= 0.0)) throw InputError("config: censor_ratio must be >= 0");
    if (cv_folds < 2) throw InputError("config: cv_folds must be >= 2");
    if (top_d < 1) throw InputError("config: top_d must be >= 1");
    if (max_support && *max_support < 1) throw InputError("config: max_support must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const SimConfig& c) {
  std::vector<std::string> methods;
  for (Method m : c.methods) methods.emplace_back(method_name(m));
  j = nlohmann::json{{"name", c.name},
                     {"setting", setting_name(c.setting)},
                     {"n", c.n},
                     {"p", c.p},
                     {"k", c.k},
                     {"rho", c.rho},
                     {"u_var", c.u_var},
                     {"beta",
                      {{"support_size", c.beta.support_size},
                       {"law", c.beta.uniform ? "uniform" : "fixed"},
                       {"value", c.beta.value},
                       {"lo", c.beta.lo},
                       {"hi", c.beta.hi}}},
                     {"censor_ratio", c.censor_ratio},
                     {"replications", c.replications},
                     {"seed", c.seed},
                     {"methods", methods},
                     {"cv_folds", c.cv_folds},
                     {"criterion", criterion_name(c.criterion)},
                     {"top_d", c.top_d},
                     {"top_d_grid", c.top_d_grid}};
  j["fit_k"] = c.fit_k ? nlohmann::json(*c.fit_k) : nlohmann::json(nullptr);
  j["max_support"] = c.max_support ? nlohmann::json(*c.max_support) : nlohmann::json(nullptr);
}

/// Fills `c` from the keys present in `j`; unknown keys are rejected.
inline void merge_config(SimConfig& c, const nlohmann::json& j) {
  static const std::vector<std::string> known{"name", "setting", "n", "p", "k", "rho", "u_var", "beta", "censor_ratio",
                                              "replications", "seed", "methods", "fit_k", "cv_folds", "criterion",
                                              "max_support", "top_d", "top_d_grid"};
  if (!j.is_object()) throw InputError("config: expected a JSON object");
  try {
    for (auto it = j.begin(); it != j.end(); ++it)
      if (std::find(known.begin(), known.end(), it.key()) == known.end())
        throw InputError("config: unknown key '" + it.key() + "'");
    if (j.contains("name")) c.name = j["name"].get<std::string>();
    if (j.contains("setting")) c.setting = parse_setting(j["setting"].get<std::string>());
    if (j.contains("n")) c.n = j["n"].get<Index>();
    if (j.contains("p")) c.p = j["p"].get<Index>();
    if (j.contains("k")) c.k = j["k"].get<Index>();
    if (j.contains("rho")) c.rho = j["rho"].get<double>();
    if (j.contains("u_var")) c.u_var = j["u_var"].get<double>();
    if (j.contains("beta")) {
      const auto& b = j["beta"];
      if (b.contains("support_size")) c.beta.support_size = b["support_size"].get<Index>();
      if (b.contains("law")) {
        const auto law = b["law"].get<std::string>();
        if (law != "uniform" && law != "fixed") throw InputError("config: beta law must be uniform or fixed");
        c.beta.uniform = law == "uniform";
      }
      if (b.contains("value")) c.beta.value = b["value"].get<double>();
      if (b.contains("lo")) c.beta.lo = b["lo"].get<double>();
      if (b.contains("hi")) c.beta.hi = b["hi"].get<double>();
    }
    if (j.contains("censor_ratio")) c.censor_ratio = j["censor_ratio"].get<double>();
    if (j.contains("replications")) c.replications = j["replications"].get<int>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j["methods"]) c.methods.push_back(parse_method(m.get<std::string>()));
    }
    if (j.contains("fit_k")) {
      if (j["fit_k"].is_null())
        c.fit_k.reset();
      else
        c.fit_k = j["fit_k"].get<Index>();
    }
    if (j.contains("cv_folds")) c.cv_folds = j["cv_folds"].get<int>();
    if (j.contains("criterion")) c.criterion = parse_criterion(j["criterion"].get<std::string>());
    if (j.contains("max_support")) {
      if (j["max_support"].is_null())
        c.max_support.reset();
      else
        c.max_support = j["max_support"].get<Index>();
    }
    if (j.contains("top_d")) c.top_d = j["top_d"].get<Index>();
    if (j.contains("top_d_grid")) c.top_d_grid = j["top_d_grid"].get<std::vector<Index>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
}

/// A preset is a base config plus optional sweeps over p and rho; each
/// combination is one cell.
inline std::vector<SimConfig> expand_preset(const nlohmann::json& doc) {
  SimConfig base;
  nlohmann::json b = doc.contains("base") ? doc["base"] : nlohmann::json::object();
  if (doc.contains("name") && !b.contains("name")) b["name"] = doc["name"];
  merge_config(base, b);
  std::vector<Index> ps{base.p};
  std::vector<double> rhos{base.rho};
  std::vector<nlohmann::json> betas{nlohmann::json::object()};
  if (doc.contains("grid")) {
    const auto& g = doc["grid"];
    try {
      if (g.contains("p")) ps = g["p"].get<std::vector<Index>>();
      if (g.contains("rho")) rhos = g["rho"].get<std::vector<double>>();
      if (g.contains("beta")) betas = g["beta"].get<std::vector<nlohmann::json>>();
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("config grid: ") + e.what());
    }
  }
  std::vector<SimConfig> cells;
  for (const auto& bj : betas)
    for (double rho : rhos)
      for (Index p : ps) {
        SimConfig c = base;
        if (!bj.empty()) merge_config(c, nlohmann::json{{"beta", bj}});
        c.p = p;
        c.rho = rho;
        c.validate();
        cells.push_back(c);
      }
  return cells;
}

struct SimData {
  SurvivalDataset dataset;
  Vector beta_star;
  std::optional<FactorDesign> latent;
};

inline Vector draw_beta(const SimConfig& c, Rng& rng) {
  Vector beta = Vector::Zero(c.p);
  std::uniform_real_distribution<double> ud(c.beta.lo, c.beta.hi);
  for (Index j = 0; j < c.beta.support_size; ++j) beta[j] = c.beta.uniform ? ud(rng) : c.beta.value;
  return beta;
}

/// One replication's data. The screening setting is the factor design with
/// N(0, 1) idiosyncratic noise and beta = (1, 1, 1, 1, 0, ...) unless the
/// config overrides beta.
inline SimData generate(const SimConfig& c, Rng& rng) {
  Vector beta = draw_beta(c, rng);
  Matrix x;
  std::optional<FactorDesign> latent;
  switch (c.setting) {
    case Setting::factor:
    case Setting::screening: {
      FactorDesign fd = gen_factor_design(c.n, c.p, c.k, rng, c.u_var);
      x = fd.x;
      latent = std::move(fd);
      break;
    }
    case Setting::equicorrelated:
      x = gen_equicorrelated(c.n, c.p, c.rho, rng);
      break;
  }
  SurvivalDraw s = gen_survival(x, beta, rng, c.censor_ratio);
  return SimData{SurvivalDataset(std::move(s.z), std::move(s.delta), std::move(x)), std::move(beta), std::move(latent)};
}

struct MethodRow {
  Method method = Method::lasso;
  BinomialCI sign_rate;
  Index sign_hits = 0;
  double mean_size = 0.0;
  double se_size = 0.0;
  int completed = 0;
};

struct ExperimentReport {
  SimConfig config;
  std::vector<MethodRow> rows;
  int failures = 0;
  std::vector<std::string> failure_messages;
  double censoring_mean = 0.0;
  double seconds = 0.0;
};

struct ReplicationOutcome {
  bool ok = false;
  std::string error;
  double censored = 0.0;
  std::vector<char> sign_ok;
  std::vector<Index> size;
};

inline ReplicationOutcome run_replication(const SimConfig& c, int rep) {
  ReplicationOutcome out;
  try {
    Rng rng = replication_rng(c.seed, static_cast<std::uint64_t>(rep));
    SimData data = generate(c, rng);
    out.censored = 1.0 - static_cast<double>(data.dataset.n_events()) / static_cast<double>(c.n);
    ProcedureOptions opts;
    opts.k = c.fit_k;
    opts.cv_folds = c.cv_folds;
    opts.criterion = c.criterion;
    opts.path.max_support = c.max_support;
    opts.seed = c.seed * 1000003ULL + static_cast<std::uint64_t>(rep);
    MethodSuite suite(std::move(data.dataset), opts);
    for (Method m : c.methods) {
      const ProcedureFit& fit = suite.fit(m);
      out.sign_ok.push_back(sign_consistency(fit.beta_hat, data.beta_star));
      out.size.push_back(model_size(fit.beta_hat));
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = "replication " + std::to_string(rep) + ": " + e.what();
  }
  return out;
}

/// Runs every replication (in parallel, results gathered by index) and
/// aggregates sign rates with 95% Wilson intervals and sizes with standard
/// errors. Throws when 1% or more of the replications fail.
inline ExperimentReport run_experiment(const SimConfig& c, unsigned threads = 1,
                                       const std::function<void(int)>& progress = {}) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<ReplicationOutcome> outs(static_cast<std::size_t>(c.replications));
  std::mutex mu;
  int done = 0;
  parallel_for(outs.size(), threads, [&](std::size_t r) {
    outs[r] = run_replication(c, static_cast<int>(r));
    if (progress) {
      std::lock_guard<std::mutex> lock(mu);
      progress(++done);
    }
  });

  ExperimentReport rep;
  rep.config = c;
  const std::size_t nm = c.methods.size();
  std::vector<double> sum(nm, 0.0), sum2(nm, 0.0);
  std::vector<Index> hits(nm, 0);
  int ok = 0;
  double cens = 0.0;
  for (const auto& o : outs) {
    if (!o.ok) {
      ++rep.failures;
      rep.failure_messages.push_back(o.error);
      continue;
    }
    ++ok;
    cens += o.censored;
    for (std::size_t m = 0; m < nm; ++m) {
      hits[m] += o.sign_ok[m];
      sum[m] += static_cast<double>(o.size[m]);
      sum2[m] += static_cast<double>(o.size[m]) * static_cast<double>(o.size[m]);
    }
  }
  if (static_cast<double>(rep.failures) >= 0.01 * c.replications || ok == 0) {
    std::ostringstream msg;
    msg << "experiment '" << c.name << "': " << rep.failures << " of " << c.replications << " replications failed";
    if (!rep.failure_messages.empty()) msg << "; first: " << rep.failure_messages.front();
    throw NumericalError(msg.str());
  }
  rep.censoring_mean = cens / ok;
  for (std::size_t m = 0; m < nm; ++m) {
    MethodRow row;
    row.method = c.methods[m];
    row.completed = ok;
    row.sign_hits = hits[m];
    row.sign_rate = wilson_interval(hits[m], ok);
    row.mean_size = sum[m] / ok;
    const double var = ok > 1 ? std::max(0.0, (sum2[m] - ok * row.mean_size * row.mean_size) / (ok - 1)) : 0.0;
    row.se_size = std::sqrt(var / ok);
    rep.rows.push_back(row);
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

struct ScreeningSeries {
  std::string procedure;            // "augmented" or "sis"
  std::vector<Index> d;             // selection sizes
  std::vector<BinomialCI> sure;     // per d
  std::vector<double> fnr_mean;     // per d
  std::vector<double> fnr_se;       // per d
  std::vector<RocPoint> roc;        // averaged over replications
};

struct ScreeningReport {
  SimConfig config;
  ScreeningSeries augmented;
  ScreeningSeries sis;
  int failures = 0;
  double seconds = 0.0;
};

/// Screening experiment: for each replication both rankings are computed once
/// and every selection size in `top_d_grid` (plus `top_d`) is read off them.
inline ScreeningReport run_screening_experiment(const SimConfig& c, unsigned threads = 1,
                                                const std::function<void(int)>& progress = {}) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Index> ds = c.top_d_grid;
  if (std::find(ds.begin(), ds.end(), c.top_d) == ds.end()) ds.push_back(c.top_d);
  std::sort(ds.begin(), ds.end());
  for (Index& d : ds) d = std::min(d, c.p);

  struct Out {
    bool ok = false;
    std::vector<Index> rank_aug, rank_sis;
    std::string error;
  };
  std::vector<Out> outs(static_cast<std::size_t>(c.replications));
  std::mutex mu;
  int done = 0;
  parallel_for(outs.size(), threads, [&](std::size_t r) {
    try {
      Rng rng = replication_rng(c.seed, r);
      SimData data = generate(c, rng);
      outs[r].rank_aug = screen(data.dataset, c.fit_k, Selector::top(c.top_d)).ranking;
      outs[r].rank_sis = sis_baseline(data.dataset, Selector::top(c.top_d)).ranking;
      outs[r].ok = true;
    } catch (const std::exception& e) {
      outs[r].error = e.what();
    }
    if (progress) {
      std::lock_guard<std::mutex> lock(mu);
      progress(++done);
    }
  });

  ScreeningReport rep;
  rep.config = c;
  std::vector<Index> support;
  for (Index j = 0; j < c.beta.support_size; ++j) support.push_back(j);
  std::vector<std::vector<Index>> ra, rs;
  for (const auto& o : outs) {
    if (!o.ok) {
      ++rep.failures;
      continue;
    }
    ra.push_back(o.rank_aug);
    rs.push_back(o.rank_sis);
  }
  if (static_cast<double>(rep.failures) >= 0.01 * c.replications || ra.empty())
    throw NumericalError("screening experiment: " + std::to_string(rep.failures) + " replications failed");

  auto fill = [&](ScreeningSeries& s, const std::vector<std::vector<Index>>& ranks, const char* name) {
    s.procedure = name;
    s.d = ds;
    for (Index d : ds) {
      std::vector<std::vector<Index>> sel;
      std::vector<double> fnrs;
      for (const auto& r : ranks) {
        sel.emplace_back(r.begin(), r.begin() + d);
        fnrs.push_back(screening_metrics({sel.back()}, support, c.p).fnr_mean);
      }
      const ScreeningMetrics m = screening_metrics(sel, support, c.p);
      const auto reps = static_cast<Index>(ranks.size());
      s.sure.push_back(wilson_interval(static_cast<Index>(std::llround(m.sure_rate * reps)), reps));
      s.fnr_mean.push_back(m.fnr_mean);
      double v = 0.0;
      for (double f : fnrs) v += (f - m.fnr_mean) * (f - m.fnr_mean);
      s.fnr_se.push_back(reps > 1 ? std::sqrt(v / (reps - 1) / reps) : 0.0);
    }
    s.roc = screening_metrics({}, support, c.p, ranks).roc;
  };
  if (!support.empty()) {
    fill(rep.augmented, ra, "augmented");
    fill(rep.sis, rs, "sis");
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Mean of 1 - delta over `samples` draws (one large design, chunked).
inline double censoring_fraction(const SimConfig& c, Index samples, std::uint64_t seed) {
  Rng rng = replication_rng(seed, 0, 0xce115);
  SimConfig cc = c;
  Index events = 0, total = 0;
  while (total < samples) {
    cc.n = std::min<Index>(c.n, samples - total);
    if (cc.n < 1) break;
    Vector beta = draw_beta(cc, rng);
    Matrix x;
    if (cc.setting == Setting::equicorrelated)
      x = gen_equicorrelated(cc.n, cc.p, cc.rho, rng);
    else
      x = gen_factor_design(cc.n, cc.p, cc.k, rng, cc.u_var).x;
    const SurvivalDraw s = gen_survival(x, beta, rng, cc.censor_ratio);
    events += s.delta.sum();
    total += cc.n;
  }
  return 1.0 - static_cast<double>(events) / static_cast<double>(total);
}

struct DiagnosticsRow {
  double eta = 0.0;             // score at the truth on the augmented design
  double irrep_raw = 0.0;
  double irrep_augmented = 0.0;
  bool irrep_ok = false;
};

/// Theory diagnostics for one replication: the score at the truth on the
/// standardized augmented design, and the irrepresentable statistic at the
/// truth on the standardized raw and augmented designs. On the augmented design
/// the truth is (beta*, B'beta*), so the factor columns are part of the support.
inline DiagnosticsRow diagnostics_replication(const SimConfig& c, int rep) {
  Rng rng = replication_rng(c.seed, static_cast<std::uint64_t>(rep), 0xd1a6);
  SimData data = generate(c, rng);
  const FailureIndex idx = build_failure_index(data.dataset);
  const Matrix& x = data.dataset.x();
  const Vector true_eta = x * data.beta_star;

  const PreparedDesign aug = prepare_augmented_design(x, c.fit_k);
  const PreparedDesign raw = prepare_raw_design(x);
  DiagnosticsRow row;
  row.eta = score_at_truth(aug.design, true_eta, idx);

  std::vector<Index> s_raw, s_aug;
  Vector th_raw = Vector::Zero(raw.design.cols());
  for (Index col = 0; col < raw.n_penalized; ++col) {
    const double b = data.beta_star[raw.column_map[static_cast<std::size_t>(col)]];
    if (b != 0.0) {
      s_raw.push_back(col);
      th_raw[col] = b * raw.scale[col];
    }
  }
  Vector th_aug = Vector::Zero(aug.design.cols());
  Vector beta_kept(aug.n_penalized);
  for (Index col = 0; col < aug.n_penalized; ++col) {
    beta_kept[col] = data.beta_star[aug.column_map[static_cast<std::size_t>(col)]];
    if (beta_kept[col] != 0.0) {
      s_aug.push_back(col);
      th_aug[col] = beta_kept[col] * aug.scale[col];
    }
  }
  const Vector gamma = aug.k ? Vector(aug.factors->b_hat.transpose() * beta_kept) : Vector();
  for (Index f = 0; f < aug.k; ++f) {
    s_aug.push_back(aug.n_penalized + f);
    th_aug[aug.n_penalized + f] = gamma[f] * aug.scale[aug.n_penalized + f];
  }
  try {
    row.irrep_raw = irrepresentable_stat(raw.design, th_raw, s_raw, idx);
    row.irrep_augmented = irrepresentable_stat(aug.design, th_aug, s_aug, idx);
    row.irrep_ok = true;
  } catch (const NumericalError&) {
    row.irrep_ok = false;
  }
  return row;
}

inline std::vector<DiagnosticsRow> run_diagnostics(const SimConfig& c, int reps, unsigned threads = 1) {
  std::vector<DiagnosticsRow> rows(static_cast<std::size_t>(reps));
  parallel_for(rows.size(), threads, [&](std::size_t r) { rows[r] = diagnostics_replication(c, static_cast<int>(r)); });
  return rows;
}

// ---- emitters -------------------------------------------------------------

inline std::string fmt17(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_report_csv(std::ostream& os, const std::vector<ExperimentReport>& reports, bool header = true) {
  if (header)
    os << "cell,setting,n,p,rho,method,replications,sign_rate,sign_lower,sign_upper,mean_size,se_size,"
          "size_lower_2se,size_upper_2se,failures,censoring_mean\n";
  for (const auto& r : reports)
    for (const auto& row : r.rows)
      os << r.config.name << ',' << setting_name(r.config.setting) << ',' << r.config.n << ',' << r.config.p << ','
         << fmt17(r.config.rho) << ',' << method_name(row.method) << ',' << row.completed << ','
         << fmt17(row.sign_rate.rate) << ',' << fmt17(row.sign_rate.lower) << ',' << fmt17(row.sign_rate.upper) << ','
         << fmt17(row.mean_size) << ',' << fmt17(row.se_size) << ',' << fmt17(row.mean_size - 2 * row.se_size) << ','
         << fmt17(row.mean_size + 2 * row.se_size) << ',' << r.failures << ',' << fmt17(r.censoring_mean) << '\n';
}

inline nlohmann::json report_json(const ExperimentReport& r) {
  nlohmann::json j;
  j["config"] = r.config;
  j["failures"] = r.failures;
  j["failure_messages"] = r.failure_messages;
  j["censoring_mean"] = r.censoring_mean;
  j["seconds"] = r.seconds;
  for (const auto& row : r.rows)
    j["methods"].push_back({{"method", method_name(row.method)},
                            {"replications", row.completed},
                            {"sign_rate", row.sign_rate.rate},
                            {"sign_ci95", {row.sign_rate.lower, row.sign_rate.upper}},
                            {"mean_size", row.mean_size},
                            {"se_size", row.se_size},
                            {"size_2se", {row.mean_size - 2 * row.se_size, row.mean_size + 2 * row.se_size}},
                            {"mean_c_index", nullptr}});
  return j;
}

inline void write_screening_csv(std::ostream& os, const ScreeningReport& r) {
  os << "procedure,d,sure_rate,sure_lower,sure_upper,fnr_mean,fnr_lower_2se,fnr_upper_2se\n";
  for (const ScreeningSeries* s : {&r.augmented, &r.sis})
    for (std::size_t i = 0; i < s->d.size(); ++i)
      os << s->procedure << ',' << s->d[i] << ',' << fmt17(s->sure[i].rate) << ',' << fmt17(s->sure[i].lower) << ','
         << fmt17(s->sure[i].upper) << ',' << fmt17(s->fnr_mean[i]) << ','
         << fmt17(s->fnr_mean[i] - 2 * s->fnr_se[i]) << ',' << fmt17(s->fnr_mean[i] + 2 * s->fnr_se[i]) << '\n';
}

inline void write_roc_csv(std::ostream& os, const ScreeningReport& r) {
  os << "procedure,d,fpr,tpr\n";
  for (const ScreeningSeries* s : {&r.augmented, &r.sis})
    for (std::size_t i = 0; i < s->roc.size(); ++i)
      os << s->procedure << ',' << i << ',' << fmt17(s->roc[i].fpr) << ',' << fmt17(s->roc[i].tpr) << '\n';
}

inline nlohmann::json screening_json(const ScreeningReport& r) {
  nlohmann::json j;
  j["config"] = r.config;
  j["failures"] = r.failures;
  j["seconds"] = r.seconds;
  for (const ScreeningSeries* s : {&r.augmented, &r.sis}) {
    nlohmann::json sj;
    sj["d"] = s->d;
    for (std::size_t i = 0; i < s->d.size(); ++i) {
      sj["sure_rate"].push_back(s->sure[i].rate);
      sj["sure_ci95"].push_back({s->sure[i].lower, s->sure[i].upper});
      sj["fnr_mean"].push_back(s->fnr_mean[i]);
      sj["fnr_se"].push_back(s->fnr_se[i]);
    }
    sj["auc"] = roc_auc(s->roc);
    j[s->procedure] = sj;
  }
  return j;
}

}  // namespace farmhazard
