#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "rrc/choice_model.hpp"
#include "rrc/observations.hpp"

namespace rrc {

struct LogLikelihood {
  double value = 0.0;
  /// Empty when not requested.
  Eigen::VectorXd grad;
};

/// Work counters of one DC evaluation.
struct DcDiagnostics {
  /// Composed solves: one for Pi plus one per parameter for its Jacobian, for
  /// every destination that has unconnected pairs.
  std::size_t composed_solves = 0;
  std::size_t destinations = 0;
  std::size_t destinations_with_unconnected = 0;
  std::size_t distinct_unconnected_pairs = 0;
};

/// Solves every destination group of `obs` (in parallel over groups).
std::vector<DestinationSolution> solve_destinations(const ObservationSet& obs, const UtilityModel& model,
                                                    const ParamVector& params, const SolverOptions& opts,
                                                    bool with_gradient, int threads = 1);

/// Sum of ln P(v|u) over the connected pairs only. On complete data this is
/// the full log-likelihood; on incomplete data it ignores the gaps.
LogLikelihood connected_log_likelihood(const ObservationSet& obs, const std::vector<DestinationSolution>& sols,
                                       bool with_gradient);

LogLikelihood connected_log_likelihood(const ObservationSet& obs, const UtilityModel& model,
                                       const ParamVector& params, const SolverOptions& opts, bool with_gradient,
                                       int threads = 1);

/// Connected pairs plus ln P(v|u) of every unconnected pair through the
/// composed system of its destination. Identical (u, v) pairs are solved once
/// and weighted by their multiplicity.
LogLikelihood dc_log_likelihood(const ObservationSet& obs, const UtilityModel& model, const ParamVector& params,
                                const SolverOptions& opts, bool with_gradient, int threads = 1,
                                DcDiagnostics* diagnostics = nullptr);

}  // namespace rrc
