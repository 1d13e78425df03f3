#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "jm/cohort.hpp"
#include "jm/evaluation.hpp"
#include "jm/mcmc.hpp"
#include "jm/model_spec.hpp"
#include "jm/simulate.hpp"

namespace jm {

// Resolved run configuration: file values deep-merged over defaults, then
// --set overrides. Unknown keys are rejected against the default tree.
struct RunConfig {
  nlohmann::json tree;

  static nlohmann::json defaults();
  static RunConfig load(const std::string& path_or_empty, const std::vector<std::string>& overrides);

  const nlohmann::json& at(const std::string& dotted_path) const;

  ModelSpec model_spec() const;
  PriorSpec prior_spec() const;
  McmcConfig mcmc_config() const;
  SchemaConfig schema_config() const;
  SimTruth sim_truth() const;
  CvConfig cv_config() const;

  std::uint64_t seed() const;
  int threads() const;
};

// Flattened "key = value" lines of the resolved configuration.
std::vector<std::string> flatten_config(const nlohmann::json& j);

void write_manifest(const std::string& path, const RunConfig& config,
                    const std::vector<std::pair<std::string, std::string>>& extra);

std::uint64_t hash_file(const std::string& path);

}  // namespace jm
