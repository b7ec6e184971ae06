#include "rrc/likelihood.hpp"

#include <cmath>

#include "rrc/dc_solver.hpp"

namespace rrc {

std::vector<DestinationSolution> solve_destinations(const ObservationSet& obs, const UtilityModel& model,
                                                    const ParamVector& params, const SolverOptions& opts,
                                                    bool with_gradient, int threads) {
  const auto& groups = obs.groups();
  std::vector<DestinationSolution> sols(groups.size());
  parallel_for(groups.size(), threads, [&](std::size_t g) {
    sols[g] = solve_destination(*groups[g].ext, model, params, opts, with_gradient);
  });
  return sols;
}

LogLikelihood connected_log_likelihood(const ObservationSet& obs, const std::vector<DestinationSolution>& sols,
                                       bool with_gradient) {
  LogLikelihood out;
  const auto& groups = obs.groups();
  if (sols.size() != groups.size()) throw InputError("one solution per destination group expected");
  if (with_gradient && !groups.empty()) out.grad = Eigen::VectorXd::Zero(sols.front().probs.grad.cols());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const ExtendedNetwork& ext = *groups[g].ext;
    const LinkProbabilities& probs = sols[g].probs;
    for (const LinkPair& pair : groups[g].connected) {
      const std::size_t p = ext.position(pair.u, pair.v);
      const double prob = probs.prob[p];
      if (!(prob > 0.0)) throw InfeasibleParameters("observed transition has zero probability");
      out.value += std::log(prob);
      if (with_gradient) out.grad += probs.grad.row(static_cast<Eigen::Index>(p)).transpose() / prob;
    }
  }
  return out;
}

LogLikelihood connected_log_likelihood(const ObservationSet& obs, const UtilityModel& model,
                                       const ParamVector& params, const SolverOptions& opts, bool with_gradient,
                                       int threads) {
  const auto sols = solve_destinations(obs, model, params, opts, with_gradient, threads);
  auto out = connected_log_likelihood(obs, sols, with_gradient);
  if (with_gradient && out.grad.size() == 0) out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.num_params()));
  return out;
}

LogLikelihood dc_log_likelihood(const ObservationSet& obs, const UtilityModel& model, const ParamVector& params,
                                const SolverOptions& opts, bool with_gradient, int threads,
                                DcDiagnostics* diagnostics) {
  const auto& groups = obs.groups();
  const auto sols = solve_destinations(obs, model, params, opts, with_gradient, threads);
  LogLikelihood out = connected_log_likelihood(obs, sols, with_gradient);
  const auto np = static_cast<Eigen::Index>(model.num_params());
  if (with_gradient && out.grad.size() == 0) out.grad = Eigen::VectorXd::Zero(np);

  struct GroupResult {
    double value = 0.0;
    Eigen::VectorXd grad;
    std::size_t solves = 0;
    std::size_t distinct = 0;
  };
  std::vector<GroupResult> results(groups.size());
  parallel_for(groups.size(), threads, [&](std::size_t g) {
    const DestinationGroup& group = groups[g];
    GroupResult& r = results[g];
    if (group.unconnected.empty()) return;
    std::vector<PairQuery> queries;
    std::vector<double> weight;
    queries.reserve(group.distinct_unconnected.size());
    for (const PairCount& pc : group.distinct_unconnected) {
      queries.push_back({pc.u, pc.v});
      weight.push_back(static_cast<double>(pc.count));
    }
    r.distinct = queries.size();

    const ExtendedNetwork& ext = *group.ext;
    const ComposedSystem sys = build_composed_system(ext, sols[g].probs, queries);
    ComposedSolver solver(sys);
    const Eigen::MatrixXd Pi = solve_reach_matrix(sys, solver);
    std::vector<Eigen::MatrixXd> dPi;
    if (with_gradient) dPi = reach_jacobian(ext, sols[g].probs, Pi, solver);
    if (with_gradient) r.grad = Eigen::VectorXd::Zero(np);
    for (std::size_t q = 0; q < queries.size(); ++q) {
      const auto row = static_cast<Eigen::Index>(queries[q].v);
      const auto col = static_cast<Eigen::Index>(sys.query_column[q]);
      const double pi = Pi(row, col);
      if (!(pi > 1e-300)) throw InfeasibleParameters("reach probability underflow");
      r.value += weight[q] * std::log(pi);
      if (with_gradient)
        for (Eigen::Index i = 0; i < np; ++i) r.grad(i) += weight[q] * dPi[static_cast<std::size_t>(i)](row, col) / pi;
    }
    r.solves = solver.solves();
  });

  DcDiagnostics diag;
  diag.destinations = groups.size();
  for (const auto& r : results) {
    out.value += r.value;
    if (with_gradient && r.grad.size() > 0) out.grad += r.grad;
    diag.composed_solves += r.solves;
    diag.distinct_unconnected_pairs += r.distinct;
    if (r.distinct > 0) ++diag.destinations_with_unconnected;
  }
  if (diagnostics) *diagnostics = diag;
  return out;
}

}  // namespace rrc
