#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rrc/choice_model.hpp"
#include "rrc/em.hpp"
#include "rrc/likelihood.hpp"
#include "rrc/observations.hpp"
#include "rrc/optimize.hpp"

namespace rrc {

/// dc: full likelihood with unconnected pairs through the composed system.
/// em: expectation-maximization over sampled (or enumerated) gap paths.
/// nfxp-i: likelihood of the connected pairs only, gaps ignored.
/// nfxp-c: likelihood of complete trips; rejects incomplete data.
enum class Algorithm { DC, EM, NFXP_I, NFXP_C };

std::string to_string(Algorithm algo);
Algorithm parse_algorithm(const std::string& text);

struct EstimateOptions {
  Algorithm algorithm = Algorithm::DC;
  LbfgsOptions lbfgs;
  EmOptions em;
  SolverOptions solver;
  int threads = 1;
  bool standard_errors = false;
};

struct EstimationResult {
  std::string algorithm;
  std::string model;
  std::vector<std::string> param_names;
  Eigen::VectorXd theta;
  /// The maximized objective: log-likelihood for dc / nfxp, R for em.
  double ll_at_solution = 0.0;
  /// Outer iterations: L-BFGS iterations, or EM iterations.
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string status;
  double total_seconds = 0.0;
  double per_iteration_seconds = 0.0;
  /// Empty unless requested and the Hessian is negative definite.
  Eigen::VectorXd std_errors;
  std::vector<EmIteration> em_trace;
  nlohmann::json options;
};

nlohmann::json to_json(const EstimationResult& r);
EstimationResult estimation_result_from_json(const nlohmann::json& j);

/// Objective for the likelihood-based algorithms (dc, nfxp-i, nfxp-c) over
/// the flat parameter vector; infeasible points evaluate to -infinity.
Objective likelihood_objective(const ObservationSet& obs, const UtilityModel& model, Algorithm algorithm,
                               const SolverOptions& solver, int threads = 1);

/// Estimates from theta = 0.
EstimationResult estimate(const ObservationSet& obs, const UtilityModel& model, const EstimateOptions& opts);

/// Log-likelihood of (complete) trips at theta; -infinity when infeasible.
double evaluate_complete_ll(const ObservationSet& obs, const UtilityModel& model, const Eigen::VectorXd& theta,
                            const SolverOptions& solver = {}, int threads = 1);

/// sqrt(diag((-H)^{-1})) from a numeric Hessian; empty when -H is not
/// positive definite.
Eigen::VectorXd standard_errors(const Objective& f, const Eigen::VectorXd& theta);

/// Writes to a temporary file in the same directory and renames it.
void write_json_atomic(const nlohmann::json& j, const std::string& path);

}  // namespace rrc
