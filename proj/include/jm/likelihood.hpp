#pragma once

#include <Eigen/Dense>
#include <vector>

#include "jm/cohort.hpp"
#include "jm/hazard.hpp"
#include "jm/longitudinal.hpp"
#include "jm/model_spec.hpp"

namespace jm {

// Quadrature design for a hazard integral over one interval: fixed nodes,
// weights, and the design rows of every term that is linear in the
// parameters. Evaluating Lambda for new parameter values is then a few
// matrix-vector products and one exp pass.
struct IntervalDesign {
  Eigen::VectorXd qw;   // quadrature weights (empty when the interval is degenerate)
  Eigen::MatrixXd B;    // K x Q      spline basis at nodes
  Eigen::MatrixXd Xv;   // K x p      longitudinal design at nodes (value association)
  Eigen::MatrixXd Xa;   // K x p      integrated design from 0 (area association)
  Eigen::MatrixXd Zv;   // K x 2      [1, u]
  Eigen::MatrixXd Za;   // K x 2      [u, u^2/2]

  int n_nodes() const { return static_cast<int>(qw.size()); }
};

// Design row bundle at a single time point.
struct PointDesign {
  Eigen::RowVectorXd B, Xv, Xa;
  Eigen::RowVector2d Zv, Za;
};

struct SubjectDesign {
  // longitudinal block
  Eigen::MatrixXd Xl;  // n_i x p design at measurement times
  Eigen::MatrixXd Zl;  // n_i x 2
  Eigen::VectorXd y;

  // survival block
  Eigen::VectorXd xs;  // baseline covariates in ModelSpec order
  double entry = 0.0;
  double time = 0.0;
  int event = 0;
  IntervalDesign risk;    // quadrature over [entry, time]
  PointDesign at_event;   // design at T_i
  int time_coef = -1;     // index of the time coefficient in beta (slope association)
};

struct JointData {
  ModelSpec spec;
  SplineBasis basis;
  std::vector<SubjectDesign> subjects;
  std::vector<std::string> subject_ids;
  Eigen::MatrixXd penalty;  // spline penalty matrix K
  int n_obs_total = 0;

  int n_subjects() const { return static_cast<int>(subjects.size()); }
};

IntervalDesign build_interval_design(const Subject& subject, const ModelSpec& spec, const SplineBasis& basis,
                                     double t0, double t1, const StepFunction& bmiz, int nodes_per_segment = 15);

PointDesign build_point_design(const Subject& subject, const ModelSpec& spec, const SplineBasis& basis, double t,
                               const StepFunction& bmiz);

SubjectDesign build_subject_design(const Subject& subject, const ModelSpec& spec, const SplineBasis& basis,
                                   int nodes_per_segment = 15);

JointData build_joint_data(const Cohort& cohort, const ModelSpec& spec, const SplineBasis& basis,
                           int nodes_per_segment = 15);

// Parameter vectors in the flat layout used by the sampler.
struct JointParams {
  Eigen::VectorXd beta;
  double sigma2 = 1.0;
  Eigen::Matrix2d D = Eigen::Matrix2d::Identity();
  Eigen::VectorXd omega;
  double alpha_value = 0.0, alpha_slope = 0.0, alpha_area = 0.0;
  Eigen::VectorXd gamma;
  double tau = 1.0;
};

double subject_longitudinal_loglik(const SubjectDesign& sd, const Eigen::VectorXd& beta, double sigma2,
                                   const Eigen::Vector2d& b);

// log hazard at the interval design nodes; alpha terms follow the spec mask.
Eigen::VectorXd interval_log_hazard(const IntervalDesign& d, const ModelSpec& spec, const SubjectDesign& sd,
                                    const JointParams& p, const Eigen::Vector2d& b);

double interval_cumulative_hazard(const IntervalDesign& d, const ModelSpec& spec, const SubjectDesign& sd,
                                  const JointParams& p, const Eigen::Vector2d& b);

double point_log_hazard(const PointDesign& d, const ModelSpec& spec, const SubjectDesign& sd, const JointParams& p,
                        const Eigen::Vector2d& b);

double subject_survival_loglik(const SubjectDesign& sd, const ModelSpec& spec, const JointParams& p,
                               const Eigen::Vector2d& b);

double subject_conditional_loglik(const SubjectDesign& sd, const ModelSpec& spec, const JointParams& p,
                                  const Eigen::Vector2d& b);

}  // namespace jm
