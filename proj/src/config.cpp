#include "jm/config.hpp"

#include <fstream>
#include <sstream>

namespace jm {

using nlohmann::json;

json RunConfig::defaults() {
  json j;
  j["seed"] = 1;
  j["threads"] = 0;
  j["out"] = "runs/out";

  j["data"]["longitudinal"] = "";
  j["data"]["survival"] = "";
  j["data"]["bmi"] = "";
  j["data"]["lms"] = "";
  j["data"]["schema"]["origin_date"] = "2019-04-01";
  j["data"]["schema"]["time_is_date"] = false;
  j["data"]["schema"]["post_event_tolerance"] = 1e-6;
  j["data"]["schema"]["tie_perturbation"] = 1e-9;
  j["data"]["schema"]["col_subject_id"] = "subject_id";
  j["data"]["schema"]["col_time"] = "time";
  j["data"]["schema"]["col_value"] = "log_creatinine";
  j["data"]["schema"]["col_bmiz"] = "bmiz";
  j["data"]["schema"]["col_entry_time"] = "entry_time";
  j["data"]["schema"]["col_event_time"] = "event_time";
  j["data"]["schema"]["col_event"] = "event";
  j["data"]["schema"]["col_sex"] = "sex";
  j["data"]["schema"]["col_age"] = "age_entry";
  j["data"]["schema"]["age_mean"] = nullptr;   // set both to reuse a stored standardization
  j["data"]["schema"]["age_sd"] = nullptr;

  j["model"]["preset"] = "m5";
  j["model"]["interior_knots"] = 9;
  j["model"]["degree"] = 3;

  j["priors"]["beta_sd"] = 10.0;
  j["priors"]["omega_sd"] = 10.0;
  j["priors"]["alpha_sd"] = 10.0;
  j["priors"]["sigma2_a"] = 0.01;
  j["priors"]["sigma2_b"] = 0.01;
  j["priors"]["wishart_df"] = 3.0;
  j["priors"]["tau_a"] = 1.0;
  j["priors"]["tau_b"] = 0.005;

  j["mcmc"]["chains"] = 4;
  j["mcmc"]["iterations"] = 90000;
  j["mcmc"]["burnin_fraction"] = 0.5;
  j["mcmc"]["thin"] = 10;
  j["mcmc"]["quad_nodes"] = 15;
  j["mcmc"]["prior_only"] = false;
  j["mcmc"]["merge_survival_blocks"] = true;
  j["mcmc"]["warm_start"] = true;
  j["mcmc"]["adaptation_interval"] = 50;
  j["mcmc"]["init_jitter"] = 1.0;
  j["mcmc"]["rhat_threshold"] = 1.1;
  j["mcmc"]["save_random_effects"] = true;

  j["predict"]["subjects"] = json::array();
  j["predict"]["landmarks"] = json::array({1.0});
  j["predict"]["horizons"] = json::array({1.0});
  j["predict"]["curve_grid"] = json::array();
  j["predict"]["mh_steps"] = 25;
  j["predict"]["max_draws"] = 0;
  j["predict"]["per_draw_output"] = false;

  j["evaluate"]["folds"] = 4;
  j["evaluate"]["landmarks"] = json::array({0.5, 2.0});
  j["evaluate"]["horizons"] = json::array({1.0, 2.0, 3.0});
  j["evaluate"]["prediction_draws"] = 0;
  j["evaluate"]["mh_steps"] = 25;
  j["evaluate"]["mcmc"]["chains"] = 1;
  j["evaluate"]["mcmc"]["iterations"] = 4000;
  j["evaluate"]["mcmc"]["burnin_fraction"] = 0.5;
  j["evaluate"]["mcmc"]["thin"] = 4;

  j["simulate"]["n"] = 514;
  j["simulate"]["preset"] = "m5";
  j["simulate"]["beta"] = json::array({3.706, 0.063, -0.085, 0.219, 0.044});
  j["simulate"]["sigma"] = 0.222;
  j["simulate"]["D"] = json::array({0.09, -0.003, 0.0025});  // D11, D12, D22
  j["simulate"]["omega"] = json::array({0.087, 0.726, 1.043, -1.584, -1.119, 0.350, 1.992, 0.163});
  j["simulate"]["alpha_value"] = 0.0;
  j["simulate"]["alpha_slope"] = 0.0;
  j["simulate"]["alpha_area"] = 2.983;
  j["simulate"]["baseline"] = "centered";  // centered | constant | weibull
  j["simulate"]["baseline_level"] = nullptr;
  j["simulate"]["weibull_shape"] = 1.5;
  j["simulate"]["target_event_fraction"] = 0.11;
  j["simulate"]["mean_visits"] = 17.0;
  j["simulate"]["entry_max"] = 5.0;
  j["simulate"]["study_end"] = 6.75;
  j["simulate"]["bmiz_missing_rate"] = 0.0;
  j["simulate"]["bmi_visit_fraction"] = 0.6;
  return j;
}

namespace {

void check_unknown_keys(const json& defaults, const json& supplied, const std::string& path) {
  if (!supplied.is_object()) return;
  for (auto it = supplied.begin(); it != supplied.end(); ++it) {
    const std::string child = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.is_object() || !defaults.contains(it.key()))
      throw ConfigError("unknown config key: " + child);
    check_unknown_keys(defaults.at(it.key()), it.value(), child);
  }
}

void deep_merge(json& base, const json& overlay) {
  if (!overlay.is_object()) {
    base = overlay;
    return;
  }
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
      deep_merge(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

json* descend(json& j, const std::string& dotted, bool create) {
  json* cur = &j;
  for (const auto& part : split(dotted, '.')) {
    if (!cur->is_object()) return nullptr;
    if (!cur->contains(part)) {
      if (!create) return nullptr;
      (*cur)[part] = json::object();
    }
    cur = &(*cur)[part];
  }
  return cur;
}

}  // namespace

RunConfig RunConfig::load(const std::string& path_or_empty, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  cfg.tree = defaults();
  if (!path_or_empty.empty()) {
    std::ifstream in(path_or_empty);
    if (!in) throw ConfigError("cannot open config file: " + path_or_empty);
    json supplied;
    try {
      in >> supplied;
    } catch (const std::exception& e) {
      throw ConfigError("config parse error in " + path_or_empty + ": " + e.what());
    }
    check_unknown_keys(cfg.tree, supplied, "");
    deep_merge(cfg.tree, supplied);
  }
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + ov + "'");
    const std::string key = ov.substr(0, eq);
    const std::string value = ov.substr(eq + 1);
    json* defaults_node = descend(cfg.tree, key, false);
    if (!defaults_node) throw ConfigError("unknown config key: " + key);
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const std::exception&) {
      parsed = value;  // bare strings allowed
    }
    *defaults_node = parsed;
  }
  return cfg;
}

const json& RunConfig::at(const std::string& dotted_path) const {
  const json* cur = &tree;
  for (const auto& part : split(dotted_path, '.')) {
    if (!cur->is_object() || !cur->contains(part)) throw ConfigError("missing config key: " + dotted_path);
    cur = &cur->at(part);
  }
  return *cur;
}

ModelSpec RunConfig::model_spec() const {
  ModelSpec spec = model_preset(at("model.preset").get<std::string>());
  spec.spline_interior_knots = at("model.interior_knots").get<int>();
  spec.spline_degree = at("model.degree").get<int>();
  return spec;
}

PriorSpec RunConfig::prior_spec() const {
  PriorSpec p;
  p.beta_sd = at("priors.beta_sd").get<double>();
  p.omega_sd = at("priors.omega_sd").get<double>();
  p.alpha_sd = at("priors.alpha_sd").get<double>();
  p.sigma2_a = at("priors.sigma2_a").get<double>();
  p.sigma2_b = at("priors.sigma2_b").get<double>();
  p.wishart_df = at("priors.wishart_df").get<double>();
  p.tau_a = at("priors.tau_a").get<double>();
  p.tau_b = at("priors.tau_b").get<double>();
  if (!(p.beta_sd > 0 && p.omega_sd > 0 && p.alpha_sd > 0 && p.sigma2_a > 0 && p.sigma2_b > 0 && p.tau_a > 0 &&
        p.tau_b > 0))
    throw ConfigError("priors: scale parameters must be positive");
  if (!(p.wishart_df > 1.0)) throw ConfigError("priors: wishart_df must exceed dim(D) - 1 = 1");
  return p;
}

McmcConfig RunConfig::mcmc_config() const {
  McmcConfig m;
  m.n_chains = at("mcmc.chains").get<int>();
  m.n_iterations = at("mcmc.iterations").get<int>();
  m.burnin_fraction = at("mcmc.burnin_fraction").get<double>();
  m.thin = at("mcmc.thin").get<int>();
  m.seed = seed();
  m.quad_nodes = at("mcmc.quad_nodes").get<int>();
  m.prior_only = at("mcmc.prior_only").get<bool>();
  m.merge_survival_blocks = at("mcmc.merge_survival_blocks").get<bool>();
  m.warm_start = at("mcmc.warm_start").get<bool>();
  m.adaptation_interval = at("mcmc.adaptation_interval").get<int>();
  m.init_jitter = at("mcmc.init_jitter").get<double>();
  m.threads = threads();
  if (m.burnin_fraction <= 0.0 || m.burnin_fraction >= 1.0)
    throw ConfigError("mcmc.burnin_fraction must lie in (0,1)");
  return m;
}

SchemaConfig RunConfig::schema_config() const {
  SchemaConfig s;
  s.origin_date = at("data.schema.origin_date").get<std::string>();
  s.time_is_date = at("data.schema.time_is_date").get<bool>();
  s.post_event_tolerance = at("data.schema.post_event_tolerance").get<double>();
  s.tie_perturbation = at("data.schema.tie_perturbation").get<double>();
  s.col_subject_id = at("data.schema.col_subject_id").get<std::string>();
  s.col_time = at("data.schema.col_time").get<std::string>();
  s.col_value = at("data.schema.col_value").get<std::string>();
  s.col_bmiz = at("data.schema.col_bmiz").get<std::string>();
  s.col_entry_time = at("data.schema.col_entry_time").get<std::string>();
  s.col_event_time = at("data.schema.col_event_time").get<std::string>();
  s.col_event = at("data.schema.col_event").get<std::string>();
  s.col_sex = at("data.schema.col_sex").get<std::string>();
  s.col_age = at("data.schema.col_age").get<std::string>();
  const auto& am = at("data.schema.age_mean");
  const auto& as = at("data.schema.age_sd");
  if (!am.is_null() && !as.is_null())
    s.fixed_age_standardization = Standardization{am.get<double>(), as.get<double>()};
  return s;
}

SimTruth RunConfig::sim_truth() const {
  SimTruth t;
  t.spec = model_preset(at("simulate.preset").get<std::string>());
  const auto beta = at("simulate.beta");
  if (beta.size() != 5) throw ConfigError("simulate.beta must have 5 entries");
  for (int k = 0; k < 5; ++k) t.beta[k] = beta[k].get<double>();
  t.sigma = at("simulate.sigma").get<double>();
  const auto d = at("simulate.D");
  if (d.size() != 3) throw ConfigError("simulate.D must be [D11, D12, D22]");
  t.D << d[0].get<double>(), d[1].get<double>(), d[1].get<double>(), d[2].get<double>();
  const auto omega = at("simulate.omega");
  if (omega.size() != 8) throw ConfigError("simulate.omega must have 8 entries");
  for (int k = 0; k < 8; ++k) t.omega[k] = omega[k].get<double>();
  t.alpha_value = at("simulate.alpha_value").get<double>();
  t.alpha_slope = at("simulate.alpha_slope").get<double>();
  t.alpha_area = at("simulate.alpha_area").get<double>();
  const std::string baseline = at("simulate.baseline").get<std::string>();
  if (baseline == "centered")
    t.baseline = SimTruth::Baseline::CenteredConstant;
  else if (baseline == "constant")
    t.baseline = SimTruth::Baseline::Constant;
  else if (baseline == "weibull")
    t.baseline = SimTruth::Baseline::Weibull;
  else
    throw ConfigError("simulate.baseline must be centered|constant|weibull");
  const auto& lvl = at("simulate.baseline_level");
  if (!lvl.is_null()) t.baseline_level = lvl.get<double>();
  t.weibull_shape = at("simulate.weibull_shape").get<double>();
  t.target_event_fraction = at("simulate.target_event_fraction").get<double>();
  t.mean_visits = at("simulate.mean_visits").get<double>();
  t.entry_max = at("simulate.entry_max").get<double>();
  t.study_end = at("simulate.study_end").get<double>();
  t.bmiz_missing_rate = at("simulate.bmiz_missing_rate").get<double>();
  t.bmi_visit_fraction = at("simulate.bmi_visit_fraction").get<double>();
  return t;
}

CvConfig RunConfig::cv_config() const {
  CvConfig cv;
  cv.folds = at("evaluate.folds").get<int>();
  cv.seed = seed();
  cv.prior = prior_spec();
  cv.mcmc = mcmc_config();
  cv.mcmc.n_chains = at("evaluate.mcmc.chains").get<int>();
  cv.mcmc.n_iterations = at("evaluate.mcmc.iterations").get<int>();
  cv.mcmc.burnin_fraction = at("evaluate.mcmc.burnin_fraction").get<double>();
  cv.mcmc.thin = at("evaluate.mcmc.thin").get<int>();
  cv.prediction_draws = at("evaluate.prediction_draws").get<int>();
  cv.mh_steps = at("evaluate.mh_steps").get<int>();
  return cv;
}

std::uint64_t RunConfig::seed() const { return at("seed").get<std::uint64_t>(); }
int RunConfig::threads() const { return at("threads").get<int>(); }

namespace {
void flatten_into(const json& j, const std::string& prefix, std::vector<std::string>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      flatten_into(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
  } else {
    out.push_back(prefix + " = " + j.dump());
  }
}
}  // namespace

std::vector<std::string> flatten_config(const json& j) {
  std::vector<std::string> out;
  flatten_into(j, "", out);
  std::sort(out.begin(), out.end());
  return out;
}

void write_manifest(const std::string& path, const RunConfig& config,
                    const std::vector<std::pair<std::string, std::string>>& extra) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest: " + path);
  out << "# run manifest: resolved configuration and input provenance\n";
  for (const auto& [k, v] : extra) out << k << " = " << v << "\n";
  for (const auto& line : flatten_config(config.tree)) out << line << "\n";
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot hash missing file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a64(ss.str());
}

}  // namespace jm
