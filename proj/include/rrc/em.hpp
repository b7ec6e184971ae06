#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rrc/choice_model.hpp"
#include "rrc/likelihood.hpp"
#include "rrc/observations.hpp"
#include "rrc/optimize.hpp"

namespace rrc {

/// A path u -> ... -> v drawn or enumerated for one unconnected pair. Padding
/// samples (walks that never arrived) carry weight 0 and no links.
struct PathSample {
  std::vector<LinkId> links;
  /// Successor positions of the path's transitions.
  std::vector<std::size_t> positions;
  double prob = 0.0;
  double weight = 0.0;
  bool padding = false;
};

struct SamplingOptions {
  std::size_t samples = 5;
  /// Walks are abandoned after step_cap_factor * (max hops to the
  /// destination) steps.
  std::size_t step_cap_factor = 4;
  /// Attempts per pair: retry_factor * samples.
  std::size_t retry_factor = 50;
};

struct SamplingStats {
  std::size_t attempts = 0;
  std::size_t accepted = 0;
  /// Pairs where no walk arrived and the paths were enumerated instead.
  std::size_t unsampleable = 0;
};

/// Walks from u following the link-choice probabilities, keeping a walk when
/// it first arrives at v and discarding it at the dummy or the step cap.
/// Weights are P(path) normalized over the accepted samples; missing samples
/// are padded.
std::vector<PathSample> sample_connecting_paths(const ExtendedNetwork& ext, const LinkProbabilities& probs,
                                                LinkId u, LinkId v, const SamplingOptions& opts,
                                                std::mt19937_64& rng, SamplingStats* stats = nullptr);

/// Every path from u to v (first arrival) with weight P(path) / sum P. Throws
/// NumericalError past max_paths paths and InputError on cycles.
std::vector<PathSample> enumerate_connecting_paths(const ExtendedNetwork& ext, const LinkProbabilities& probs,
                                                   LinkId u, LinkId v, std::size_t max_paths = 10000);

/// E-step output: the weighted paths of every unconnected pair, grouped like
/// the ObservationSet.
struct ExpectedData {
  /// [group][unconnected pair index] -> samples.
  std::vector<std::vector<std::vector<PathSample>>> samples;
  SamplingStats stats;
};

/// R(theta) = sum over connected pairs of ln P(v|u) + sum over unconnected
/// pairs of sum_s w_s sum over the transitions of path s of ln P. Evaluated
/// term by term.
LogLikelihood expected_log_likelihood(const ObservationSet& obs, const ExpectedData& data,
                                      const UtilityModel& model, const ParamVector& params,
                                      const SolverOptions& opts, bool with_gradient, int threads = 1);

struct EmOptions {
  SamplingOptions sampling;
  /// Enumerate all paths instead of sampling.
  bool exact_e = false;
  std::size_t max_paths = 10000;
  /// Stop when max |theta^{t+1} - theta^t| < tol.
  double tol = 1e-4;
  int max_iter = 100;
  std::uint64_t seed = 1;
  /// Evaluate the incomplete-data log-likelihood (through DC) at every iterate.
  bool track_incomplete_ll = false;
  LbfgsOptions mstep;
  int threads = 1;
};

struct EmIteration {
  int iteration = 0;
  Eigen::VectorXd theta;
  double expected_ll = 0.0;
  double incomplete_ll = std::numeric_limits<double>::quiet_NaN();
  double step = 0.0;
  std::size_t sample_attempts = 0;
  std::size_t samples_accepted = 0;
  std::size_t unsampleable_pairs = 0;
  int mstep_iterations = 0;
  double e_seconds = 0.0;
  double m_seconds = 0.0;
};

struct EmResult {
  Eigen::VectorXd theta;
  /// R at the final iterate.
  double expected_ll = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string status;
  /// Incomplete-data log-likelihood at theta0 when tracked.
  double initial_incomplete_ll = std::numeric_limits<double>::quiet_NaN();
  std::vector<EmIteration> trace;
};

/// Expectation-maximization from theta0. Each unconnected pair draws from its
/// own RNG stream, seeded from (seed, group, pair) and identical in every
/// iteration. Pairs where no walk arrives fall back to enumeration. On
/// complete data a single M-step is performed.
EmResult em_estimate(const ObservationSet& obs, const UtilityModel& model, const Eigen::VectorXd& theta0,
                     const EmOptions& opts, const SolverOptions& solver = {});

}  // namespace rrc
