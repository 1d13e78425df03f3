// Command-line pipeline: simulate -> impute -> fit -> summary -> predict ->
// evaluate -> compare. Every run writes CSV outputs plus a plain-text
// manifest with the resolved configuration and input hashes.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "jm/config.hpp"
#include "jm/csv.hpp"
#include "jm/diagnostics.hpp"
#include "jm/evaluation.hpp"
#include "jm/growth.hpp"
#include "jm/prediction.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitConvergence = 5;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string seed;
  std::string threads;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON run configuration");
  cmd->add_option("--set", args.sets, "override a config key, e.g. --set mcmc.chains=2")->take_all();
  cmd->add_option("--seed", args.seed, "RNG seed (overrides config)");
  cmd->add_option("--threads", args.threads, "thread budget (overrides config)");
  cmd->add_option("--out", args.out, "output directory (overrides config)");
}

jm::RunConfig resolve_config(const CommonArgs& args) {
  std::vector<std::string> sets = args.sets;
  if (!args.seed.empty()) sets.push_back("seed=" + args.seed);
  if (!args.threads.empty()) sets.push_back("threads=" + args.threads);
  if (!args.out.empty()) sets.push_back("out=" + args.out);
  return jm::RunConfig::load(args.config_path, sets);
}

std::string out_dir(const jm::RunConfig& cfg) {
  const std::string dir = cfg.at("out").get<std::string>();
  fs::create_directories(dir);
  return dir;
}

std::vector<std::pair<std::string, std::string>> input_hashes(const std::vector<std::string>& paths) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& p : paths)
    if (!p.empty() && fs::exists(p)) out.push_back({"input_hash." + p, std::to_string(jm::hash_file(p))});
  return out;
}

jm::Cohort load_configured_cohort(const jm::RunConfig& cfg) {
  const std::string lpath = cfg.at("data.longitudinal").get<std::string>();
  const std::string spath = cfg.at("data.survival").get<std::string>();
  if (lpath.empty() || spath.empty())
    throw jm::ConfigError("data.longitudinal and data.survival must be set for this command");
  jm::LoadReport report;
  jm::Cohort cohort = jm::load_cohort(lpath, spath, cfg.schema_config(), &report);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  return cohort;
}

void write_draws_csv(const std::string& path, const jm::PosteriorDraws& draws, bool save_b) {
  jm::CsvWriter w(path);
  std::vector<std::string> header = {"chain", "iteration"};
  header.insert(header.end(), draws.names.begin(), draws.names.end());
  if (save_b) header.insert(header.end(), draws.b_names.begin(), draws.b_names.end());
  w.row(header);
  for (int r = 0; r < draws.theta.rows(); ++r) {
    std::vector<std::string> row = {std::to_string(draws.chain[r]), std::to_string(draws.iteration[r])};
    for (int c = 0; c < draws.theta.cols(); ++c) row.push_back(jm::format_double(draws.theta(r, c)));
    if (save_b)
      for (int c = 0; c < draws.b.cols(); ++c) row.push_back(jm::format_double(draws.b(r, c)));
    w.row(row);
  }
}

jm::PosteriorDraws read_draws_csv(const std::string& path) {
  const jm::CsvTable t = jm::read_csv(path);
  jm::PosteriorDraws draws;
  std::vector<int> theta_cols, b_cols;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    const std::string& h = t.header[j];
    if (h == "chain" || h == "iteration") continue;
    if (h.rfind("b.", 0) == 0) {
      b_cols.push_back(static_cast<int>(j));
      draws.b_names.push_back(h);
    } else {
      theta_cols.push_back(static_cast<int>(j));
      draws.names.push_back(h);
    }
  }
  const int rows = static_cast<int>(t.rows.size());
  const int c_chain = t.require_column("chain");
  const int c_iter = t.require_column("iteration");
  draws.theta.resize(rows, static_cast<int>(theta_cols.size()));
  draws.b.resize(rows, static_cast<int>(b_cols.size()));
  draws.chain.resize(rows);
  draws.iteration.resize(rows);
  int max_chain = 0;
  for (int r = 0; r < rows; ++r) {
    draws.chain[r] = static_cast<int>(jm::parse_double(t, r, c_chain));
    draws.iteration[r] = static_cast<int>(jm::parse_double(t, r, c_iter));
    max_chain = std::max(max_chain, draws.chain[r]);
    for (std::size_t c = 0; c < theta_cols.size(); ++c) draws.theta(r, static_cast<int>(c)) = jm::parse_double(t, r, theta_cols[c]);
    for (std::size_t c = 0; c < b_cols.size(); ++c) draws.b(r, static_cast<int>(c)) = jm::parse_double(t, r, b_cols[c]);
  }
  draws.n_chains = max_chain + 1;
  draws.per_chain = draws.n_chains > 0 ? rows / draws.n_chains : 0;
  draws.chain_info.resize(draws.n_chains);
  return draws;
}

void write_summary_csv(const std::string& path, const std::vector<jm::SummaryRow>& rows) {
  jm::CsvWriter w(path);
  w.row({"parameter", "mean", "sd", "q2.5", "q97.5", "tail_prob"});
  for (const auto& r : rows)
    w.row({r.name, jm::format_double(r.mean), jm::format_double(r.sd), jm::format_double(r.q025),
           jm::format_double(r.q975), jm::format_double(r.tail_prob)});
}

// ---------------------------------------------------------------------------

int cmd_simulate(const jm::RunConfig& cfg) {
  const std::string dir = out_dir(cfg);
  const jm::SimTruth truth = cfg.sim_truth();
  const int n = cfg.at("simulate.n").get<int>();
  const jm::SimCohort sim = jm::simulate_cohort(truth, n, cfg.seed());
  jm::write_cohort(sim.cohort, dir + "/longitudinal.csv", dir + "/survival.csv");
  jm::write_bmi_records(sim.bmi_records, dir + "/bmi.csv");
  jm::write_lms_reference(sim.lms, dir + "/lms.csv");
  jm::write_sim_truth(sim, dir + "/truth.csv");
  int events = 0;
  for (const auto& s : sim.cohort.subjects) events += s.event.event;
  jm::write_manifest(dir + "/manifest.txt", cfg,
                     {{"command", "simulate"},
                      {"n_subjects", std::to_string(sim.cohort.n_subjects())},
                      {"n_records", std::to_string(sim.cohort.n_records())},
                      {"n_events", std::to_string(events)},
                      {"baseline_level", jm::format_double(sim.baseline_level)}});
  std::cout << "simulated " << sim.cohort.n_subjects() << " subjects, " << sim.cohort.n_records() << " records, "
            << events << " events -> " << dir << "\n";
  return kExitOk;
}

int cmd_impute(const jm::RunConfig& cfg) {
  const std::string dir = out_dir(cfg);
  jm::Cohort cohort = load_configured_cohort(cfg);
  const std::string bmi_path = cfg.at("data.bmi").get<std::string>();
  const std::string lms_path = cfg.at("data.lms").get<std::string>();
  if (bmi_path.empty() || lms_path.empty()) throw jm::ConfigError("impute needs data.bmi and data.lms");
  const auto bmi = jm::load_bmi_records(bmi_path);
  const auto lms = jm::load_lms_reference(lms_path);
  jm::ImputationReport rep;
  const jm::Cohort imputed = jm::impute_cohort_bmiz(cohort, bmi, lms, &rep);
  jm::write_cohort(imputed, dir + "/longitudinal.csv", dir + "/survival.csv");
  {
    jm::CsvWriter w(dir + "/impute_report.csv");
    w.row({"subject_id", "time", "bmiz", "source"});
    for (const auto& s : imputed.subjects)
      for (const auto& r : s.records)
        w.row({s.id, jm::format_double(r.time), r.bmiz ? jm::format_double(*r.bmiz) : "",
               r.bmiz_imputed ? "imputed" : "observed"});
  }
  jm::write_manifest(dir + "/manifest.txt", cfg,
                     {{"command", "impute"},
                      {"observed_bmiz", std::to_string(rep.observed)},
                      {"imputed_bmiz", std::to_string(rep.imputed)}});
  std::cout << "imputed " << rep.imputed << " of " << (rep.observed + rep.imputed) << " BMIZ values -> " << dir
            << "\n";
  return kExitOk;
}

int cmd_fit(const jm::RunConfig& cfg) {
  const std::string dir = out_dir(cfg);
  jm::Cohort cohort = load_configured_cohort(cfg);

  // fill missing BMIZ inline when growth inputs are configured
  bool any_missing = false;
  for (const auto& s : cohort.subjects)
    for (const auto& r : s.records)
      if (!r.bmiz) any_missing = true;
  if (any_missing) {
    const std::string bmi_path = cfg.at("data.bmi").get<std::string>();
    const std::string lms_path = cfg.at("data.lms").get<std::string>();
    if (bmi_path.empty() || lms_path.empty())
      throw jm::DataError("cohort has missing BMIZ values; run the impute command or set data.bmi and data.lms");
    cohort = jm::impute_cohort_bmiz(cohort, jm::load_bmi_records(bmi_path), jm::load_lms_reference(lms_path));
  }

  const jm::ModelSpec spec = cfg.model_spec();
  const jm::PriorSpec prior = cfg.prior_spec();
  const jm::McmcConfig mcmc = cfg.mcmc_config();
  const jm::SplineBasis basis = jm::default_basis(cohort, spec);
  const jm::JointData data = jm::build_joint_data(cohort, spec, basis, mcmc.quad_nodes);
  const jm::PosteriorDraws draws = jm::run_mcmc(data, prior, mcmc);

  const bool save_b = cfg.at("mcmc.save_random_effects").get<bool>();
  write_draws_csv(dir + "/draws.csv", draws, save_b);
  write_summary_csv(dir + "/summary.csv", jm::summarize_draws(draws));

  std::vector<double> rhat(draws.names.size(), std::numeric_limits<double>::quiet_NaN());
  if (draws.n_chains >= 2) rhat = jm::gelman_rubin(draws);
  const std::vector<double> ess = jm::effective_sample_size(draws);
  {
    jm::CsvWriter w(dir + "/diagnostics.csv");
    w.row({"parameter", "rhat", "ess"});
    for (std::size_t j = 0; j < draws.names.size(); ++j)
      w.row({draws.names[j], jm::format_double(rhat[j]), jm::format_double(ess[j])});
  }

  const jm::WaicResult wres = jm::waic(data, draws);
  const jm::LpmlResult lres = jm::lpml(data, draws);

  double max_rhat = 0.0;
  for (double r : rhat)
    if (std::isfinite(r)) max_rhat = std::max(max_rhat, r);

  // machine-readable fit artifact consumed by predict/compare
  {
    json fit;
    fit["model"] = spec.name;
    fit["interior_knots"] = basis.interior_knots();
    fit["boundary"] = {basis.lo, basis.hi};
    fit["degree"] = basis.degree;
    fit["age_mean"] = cohort.age_standardization.mean;
    fit["age_sd"] = cohort.age_standardization.sd;
    fit["seed"] = cfg.seed();
    fit["waic"] = wres.waic;
    fit["lppd"] = wres.lppd;
    fit["p_waic"] = wres.p_waic;
    fit["lpml"] = lres.lpml;
    fit["max_rhat"] = max_rhat;
    fit["data"] = {{"longitudinal", cfg.at("data.longitudinal").get<std::string>()},
                   {"survival", cfg.at("data.survival").get<std::string>()}};
    std::ofstream out(dir + "/fit.json");
    out << fit.dump(2) << "\n";
  }

  std::vector<std::pair<std::string, std::string>> extra = {
      {"command", "fit"},
      {"model", spec.name},
      {"n_subjects", std::to_string(cohort.n_subjects())},
      {"max_rhat", jm::format_double(max_rhat)},
      {"waic", jm::format_double(wres.waic)},
      {"lpml", jm::format_double(lres.lpml)}};
  for (int c = 0; c < draws.n_chains; ++c)
    for (const auto& [k, v] : draws.chain_info[c].acceptance_rates)
      extra.push_back({"acceptance.chain" + std::to_string(c) + "." + k, jm::format_double(v)});
  auto hashes = input_hashes({cfg.at("data.longitudinal").get<std::string>(), cfg.at("data.survival").get<std::string>()});
  extra.insert(extra.end(), hashes.begin(), hashes.end());
  jm::write_manifest(dir + "/manifest.txt", cfg, extra);

  const double threshold = cfg.at("mcmc.rhat_threshold").get<double>();
  std::cout << "fit " << spec.name << ": " << draws.theta.rows() << " retained draws, max Rhat = " << max_rhat
            << ", WAIC = " << wres.waic << ", LPML = " << lres.lpml << " -> " << dir << "\n";
  if (draws.n_chains >= 2 && max_rhat > threshold) {
    std::cerr << "convergence failure: max Rhat " << max_rhat << " exceeds threshold " << threshold << "\n";
    return kExitConvergence;
  }
  return kExitOk;
}

int cmd_summary(const jm::RunConfig& cfg, const std::string& fit_dir) {
  const std::string dir = out_dir(cfg);
  const std::string source = fit_dir.empty() ? dir : fit_dir;
  const jm::PosteriorDraws draws = read_draws_csv(source + "/draws.csv");
  write_summary_csv(dir + "/summary.csv", jm::summarize_draws(draws));
  std::cout << "summary of " << draws.theta.rows() << " draws -> " << dir << "/summary.csv\n";
  return kExitOk;
}

int cmd_predict(const jm::RunConfig& cfg, const std::string& fit_dir_arg) {
  const std::string dir = out_dir(cfg);
  const std::string fit_dir = fit_dir_arg.empty() ? dir : fit_dir_arg;
  std::ifstream fin(fit_dir + "/fit.json");
  if (!fin) throw jm::DataError("predict: missing fit artifact " + fit_dir + "/fit.json (run fit first)");
  json fit;
  fin >> fit;

  jm::ModelSpec spec = jm::model_preset(fit.at("model").get<std::string>());
  const jm::SplineBasis basis =
      jm::SplineBasis::clamped(fit.at("boundary")[0].get<double>(), fit.at("boundary")[1].get<double>(),
                               fit.at("interior_knots").get<std::vector<double>>(), fit.at("degree").get<int>());

  // new subjects are standardized with the training parameters
  jm::RunConfig cfg2 = cfg;
  cfg2.tree["data"]["schema"]["age_mean"] = fit.at("age_mean").get<double>();
  cfg2.tree["data"]["schema"]["age_sd"] = fit.at("age_sd").get<double>();
  const jm::Cohort cohort = load_configured_cohort(cfg2);

  const jm::PosteriorDraws draws = read_draws_csv(fit_dir + "/draws.csv");

  std::vector<std::string> subjects;
  for (const auto& s : cfg.at("predict.subjects")) subjects.push_back(s.get<std::string>());
  if (subjects.empty())
    for (const auto& s : cohort.subjects) subjects.push_back(s.id);
  std::vector<double> landmarks;
  for (const auto& v : cfg.at("predict.landmarks")) landmarks.push_back(v.get<double>());
  std::vector<double> horizons;
  for (const auto& v : cfg.at("predict.horizons")) horizons.push_back(v.get<double>());
  std::vector<double> curve_grid;
  for (const auto& v : cfg.at("predict.curve_grid")) curve_grid.push_back(v.get<double>());
  const bool per_draw = cfg.at("predict.per_draw_output").get<bool>();

  jm::CsvWriter w(dir + "/predictions.csv");
  w.row({"subject_id", "t_L", "dt", "pi_mean", "pi_lo", "pi_hi", "error"});
  std::unique_ptr<jm::CsvWriter> wd;
  if (per_draw) {
    wd = std::make_unique<jm::CsvWriter>(dir + "/predictions_draws.csv");
    wd->row({"subject_id", "t_L", "dt", "draw", "pi"});
  }
  std::unique_ptr<jm::CsvWriter> wc;
  if (!curve_grid.empty()) {
    wc = std::make_unique<jm::CsvWriter>(dir + "/prediction_curves.csv");
    wc->row({"subject_id", "t_L", "dt", "pi_mean", "pi_lo", "pi_hi"});
  }

  int n_ok = 0, n_err = 0;
  for (const auto& sid : subjects) {
    const jm::Subject* subj = cohort.find(sid);
    if (!subj) {
      w.row({sid, "", "", "", "", "", "unknown subject"});
      ++n_err;
      continue;
    }
    for (double t_L : landmarks) {
      jm::PredictionRequest req;
      req.subject = *subj;
      req.landmark = t_L;
      req.horizons = horizons;
      req.mh_steps = cfg.at("predict.mh_steps").get<int>();
      req.max_draws = cfg.at("predict.max_draws").get<int>();
      req.seed = cfg.seed();
      try {
        const auto results = jm::prediction_curve(req, draws, spec, basis);
        for (const auto& r : results) {
          w.row({sid, jm::format_double(r.landmark), jm::format_double(r.horizon), jm::format_double(r.pi_mean),
                 jm::format_double(r.pi_lo), jm::format_double(r.pi_hi), ""});
          if (wd)
            for (int k = 0; k < r.per_draw.size(); ++k)
              wd->row({sid, jm::format_double(r.landmark), jm::format_double(r.horizon), std::to_string(k),
                       jm::format_double(r.per_draw[k])});
        }
        if (wc && !curve_grid.empty()) {
          jm::PredictionRequest curve_req = req;
          curve_req.horizons = curve_grid;
          const auto curve = jm::prediction_curve(curve_req, draws, spec, basis);
          for (const auto& r : curve)
            wc->row({sid, jm::format_double(r.landmark), jm::format_double(r.horizon), jm::format_double(r.pi_mean),
                     jm::format_double(r.pi_lo), jm::format_double(r.pi_hi)});
        }
        ++n_ok;
      } catch (const std::exception& e) {
        w.row({sid, jm::format_double(t_L), "", "", "", "", e.what()});
        ++n_err;
      }
    }
  }
  jm::write_manifest(dir + "/manifest.txt", cfg,
                     {{"command", "predict"}, {"fit_dir", fit_dir}, {"ok", std::to_string(n_ok)},
                      {"errors", std::to_string(n_err)}});
  std::cout << "predictions: " << n_ok << " ok, " << n_err << " error rows -> " << dir << "\n";
  return kExitOk;
}

int cmd_evaluate(const jm::RunConfig& cfg) {
  const std::string dir = out_dir(cfg);
  jm::Cohort cohort = load_configured_cohort(cfg);
  bool any_missing = false;
  for (const auto& s : cohort.subjects)
    for (const auto& r : s.records)
      if (!r.bmiz) any_missing = true;
  if (any_missing) {
    const std::string bmi_path = cfg.at("data.bmi").get<std::string>();
    const std::string lms_path = cfg.at("data.lms").get<std::string>();
    if (bmi_path.empty() || lms_path.empty())
      throw jm::DataError("cohort has missing BMIZ values; run the impute command or set data.bmi and data.lms");
    cohort = jm::impute_cohort_bmiz(cohort, jm::load_bmi_records(bmi_path), jm::load_lms_reference(lms_path));
  }

  // Kaplan-Meier plot data (left truncation respected)
  {
    std::vector<double> times, entries;
    std::vector<int> events;
    for (const auto& s : cohort.subjects) {
      times.push_back(s.event.time);
      events.push_back(s.event.event);
      entries.push_back(s.event.entry_time);
    }
    const jm::KmCurve km = jm::kaplan_meier(times, events, &entries);
    jm::CsvWriter w(dir + "/km.csv");
    w.row({"time", "survival", "n_risk", "n_event"});
    for (std::size_t k = 0; k < km.times.size(); ++k)
      w.row({jm::format_double(km.times[k]), jm::format_double(km.survival[k]), std::to_string(km.n_risk[k]),
             std::to_string(km.n_event[k])});
  }

  std::vector<double> landmarks, horizons;
  for (const auto& v : cfg.at("evaluate.landmarks")) landmarks.push_back(v.get<double>());
  for (const auto& v : cfg.at("evaluate.horizons")) horizons.push_back(v.get<double>());
  const jm::MetricReport report = jm::cross_validate(cohort, cfg.model_spec(), landmarks, horizons, cfg.cv_config());

  {
    jm::CsvWriter w(dir + "/metrics_folds.csv");
    w.row({"t_L", "dt", "fold", "auc", "bs"});
    for (const auto& cell : report.cells)
      for (std::size_t f = 0; f < cell.auc_folds.size(); ++f)
        w.row({jm::format_double(cell.t_L), jm::format_double(cell.dt), std::to_string(f),
               std::isfinite(cell.auc_folds[f]) ? jm::format_double(cell.auc_folds[f]) : "NA",
               std::isfinite(cell.bs_folds[f]) ? jm::format_double(cell.bs_folds[f]) : "NA"});
  }
  {
    // Table-3 shaped report: rows t_L, columns (AUC, BS) x horizons, cells "mean (sd)"
    jm::CsvWriter w(dir + "/metrics.csv");
    std::vector<std::string> header = {"t_L"};
    for (double dt : horizons) header.push_back("AUC_dt" + jm::format_double(dt));
    for (double dt : horizons) header.push_back("BS_dt" + jm::format_double(dt));
    w.row(header);
    auto cell_text = [](std::optional<double> mean, std::optional<double> sd) -> std::string {
      if (!mean) return "NA";
      char buf[64];
      if (sd)
        std::snprintf(buf, sizeof(buf), "%.3f (%.3f)", *mean, *sd);
      else
        std::snprintf(buf, sizeof(buf), "%.3f", *mean);
      return buf;
    };
    for (double t_L : landmarks) {
      std::vector<std::string> row = {jm::format_double(t_L)};
      for (double dt : horizons)
        for (const auto& cell : report.cells)
          if (cell.t_L == t_L && cell.dt == dt) row.push_back(cell_text(cell.auc_mean, cell.auc_sd));
      for (double dt : horizons)
        for (const auto& cell : report.cells)
          if (cell.t_L == t_L && cell.dt == dt) row.push_back(cell_text(cell.bs_mean, cell.bs_sd));
      w.row(row);
    }
  }
  for (const auto& note : report.notes) std::cerr << "note: " << note << "\n";
  jm::write_manifest(dir + "/manifest.txt", cfg,
                     {{"command", "evaluate"}, {"folds", std::to_string(cfg.at("evaluate.folds").get<int>())}});
  std::cout << "evaluation -> " << dir << "/metrics.csv\n";
  return kExitOk;
}

int cmd_compare(const jm::RunConfig& cfg, const std::vector<std::string>& fit_dirs) {
  const std::string dir = out_dir(cfg);
  if (fit_dirs.size() < 2) throw jm::ConfigError("compare needs at least 2 fit directories");
  struct Entry {
    std::string dir, model;
    double waic, lpml;
  };
  std::vector<Entry> entries;
  for (const auto& d : fit_dirs) {
    std::ifstream in(d + "/fit.json");
    if (!in) throw jm::DataError("compare: missing fit artifact " + d + "/fit.json");
    json fit;
    in >> fit;
    entries.push_back({d, fit.at("model").get<std::string>(), fit.at("waic").get<double>(),
                       fit.at("lpml").get<double>()});
  }
  std::size_t best_waic = 0, best_lpml = 0;
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].waic < entries[best_waic].waic) best_waic = i;
    if (entries[i].lpml > entries[best_lpml].lpml) best_lpml = i;
  }
  jm::CsvWriter w(dir + "/comparison.csv");
  w.row({"fit_dir", "model", "waic", "lpml", "best_waic", "best_lpml"});
  for (std::size_t i = 0; i < entries.size(); ++i)
    w.row({entries[i].dir, entries[i].model, jm::format_double(entries[i].waic), jm::format_double(entries[i].lpml),
           i == best_waic ? "1" : "0", i == best_lpml ? "1" : "0"});
  jm::write_manifest(dir + "/manifest.txt", cfg, {{"command", "compare"}});
  std::cout << "comparison of " << entries.size() << " fits -> " << dir << "/comparison.csv (best WAIC: "
            << entries[best_waic].model << ", best LPML: " << entries[best_lpml].model << ")\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian joint modelling of longitudinal biomarkers and time-to-event outcomes"};
  app.require_subcommand(1);

  CommonArgs sim_args, imp_args, fit_args, sum_args, pred_args, eval_args, cmp_args;
  std::string sum_fit_dir, pred_fit_dir;
  std::vector<std::string> cmp_dirs;

  auto* c_sim = app.add_subcommand("simulate", "generate a synthetic cohort from known parameters");
  add_common(c_sim, sim_args);
  auto* c_imp = app.add_subcommand("impute", "fill missing BMIZ via the growth model pipeline");
  add_common(c_imp, imp_args);
  auto* c_fit = app.add_subcommand("fit", "run the MCMC sampler and write posterior artifacts");
  add_common(c_fit, fit_args);
  auto* c_sum = app.add_subcommand("summary", "re-summarize a draws file");
  add_common(c_sum, sum_args);
  c_sum->add_option("--fit", sum_fit_dir, "fit directory (defaults to --out)");
  auto* c_pred = app.add_subcommand("predict", "dynamic event probabilities for subjects");
  add_common(c_pred, pred_args);
  c_pred->add_option("--fit", pred_fit_dir, "fit directory (defaults to --out)");
  auto* c_eval = app.add_subcommand("evaluate", "Kaplan-Meier data and cross-validated AUC/Brier");
  add_common(c_eval, eval_args);
  auto* c_cmp = app.add_subcommand("compare", "collate WAIC/LPML across fitted models");
  add_common(c_cmp, cmp_args);
  c_cmp->add_option("fits", cmp_dirs, "fit directories to compare");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (c_sim->parsed()) return cmd_simulate(resolve_config(sim_args));
    if (c_imp->parsed()) return cmd_impute(resolve_config(imp_args));
    if (c_fit->parsed()) return cmd_fit(resolve_config(fit_args));
    if (c_sum->parsed()) return cmd_summary(resolve_config(sum_args), sum_fit_dir);
    if (c_pred->parsed()) return cmd_predict(resolve_config(pred_args), pred_fit_dir);
    if (c_eval->parsed()) return cmd_evaluate(resolve_config(eval_args));
    if (c_cmp->parsed()) return cmd_compare(resolve_config(cmp_args), cmp_dirs);
  } catch (const jm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const jm::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const jm::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitConfig;
}
