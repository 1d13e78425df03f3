#pragma once

#include <string>
#include <vector>

#include "jm/util.hpp"

namespace jm {

// One candidate model: fixed-effect lists for both sub-models plus the
// association mask. The preset grid m1..m7 varies only the mask.
struct ModelSpec {
  std::string name = "m5";
  // Longitudinal design order: intercept first, then these covariates.
  std::vector<std::string> longitudinal_covariates = {"time", "sex", "sage", "bmiz"};
  std::vector<std::string> survival_covariates = {"comorb", "kidneyhist", "cortico", "immuno",
                                                  "immmod", "bcell",      "ccb",     "acei"};
  bool assoc_value = false;
  bool assoc_slope = false;
  bool assoc_area = true;

  int spline_degree = 3;
  int spline_interior_knots = 9;

  int n_beta() const { return 1 + static_cast<int>(longitudinal_covariates.size()); }
  int n_omega() const { return static_cast<int>(survival_covariates.size()); }
  int n_alpha() const { return (assoc_value ? 1 : 0) + (assoc_slope ? 1 : 0) + (assoc_area ? 1 : 0); }

  std::vector<std::string> alpha_names() const {
    std::vector<std::string> out;
    if (assoc_value) out.push_back("value");
    if (assoc_slope) out.push_back("slope");
    if (assoc_area) out.push_back("area");
    return out;
  }
};

inline ModelSpec model_preset(const std::string& name) {
  ModelSpec spec;
  spec.name = name;
  if (name == "m1") {
    spec.assoc_value = true;
    spec.assoc_slope = true;
    spec.assoc_area = true;
  } else if (name == "m2") {
    spec.assoc_value = true;
    spec.assoc_slope = true;
    spec.assoc_area = false;
  } else if (name == "m3") {
    spec.assoc_value = true;
    spec.assoc_slope = false;
    spec.assoc_area = false;
  } else if (name == "m4") {
    spec.assoc_value = false;
    spec.assoc_slope = true;
    spec.assoc_area = false;
  } else if (name == "m5") {
    spec.assoc_value = false;
    spec.assoc_slope = false;
    spec.assoc_area = true;
  } else if (name == "m6") {
    spec.assoc_value = true;
    spec.assoc_slope = false;
    spec.assoc_area = true;
  } else if (name == "m7") {
    spec.assoc_value = false;
    spec.assoc_slope = true;
    spec.assoc_area = true;
  } else {
    throw ConfigError("unknown model preset '" + name + "' (expected m1..m7)");
  }
  return spec;
}

}  // namespace jm
