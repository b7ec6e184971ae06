#include "rrc/em.hpp"

#include <chrono>
#include <cmath>

namespace rrc {

namespace {

void normalize(std::vector<PathSample>& samples) {
  double total = 0.0;
  for (const auto& s : samples)
    if (!s.padding) total += s.prob;
  for (auto& s : samples) s.weight = (!s.padding && total > 0.0) ? s.prob / total : 0.0;
}

PathSample trivial_path(LinkId u) {
  PathSample s;
  s.links = {u};
  s.prob = 1.0;
  return s;
}

struct PathCollector {
  const ExtendedNetwork& ext;
  const LinkProbabilities& probs;
  LinkId target;
  std::size_t max_paths;
  std::vector<PathSample> out;
  PathSample current;

  void visit(LinkId k, double prob) {
    if (current.links.size() > ext.size()) throw InputError("enumerate_connecting_paths: the network contains a cycle");
    const std::size_t p0 = ext.successor_begin(k);
    const auto succ = ext.successors(k);
    for (std::size_t j = 0; j < succ.size(); ++j) {
      const double q = prob * probs.prob[p0 + j];
      current.links.push_back(succ[j]);
      current.positions.push_back(p0 + j);
      if (succ[j] == target) {
        if (out.size() >= max_paths) throw NumericalError("enumerate_connecting_paths: too many paths");
        PathSample s = current;
        s.prob = q;
        out.push_back(std::move(s));
      } else if (succ[j] != ext.dummy()) {
        visit(succ[j], q);
      }
      current.links.pop_back();
      current.positions.pop_back();
    }
  }
};

}  // namespace

std::vector<PathSample> sample_connecting_paths(const ExtendedNetwork& ext, const LinkProbabilities& probs,
                                                LinkId u, LinkId v, const SamplingOptions& opts,
                                                std::mt19937_64& rng, SamplingStats* stats) {
  if (u == v) return {trivial_path(u)};
  const std::size_t cap = opts.step_cap_factor * std::max<std::size_t>(1, ext.max_hops_to_dest());
  const std::size_t max_attempts = opts.retry_factor * opts.samples;
  std::vector<PathSample> out;
  out.reserve(opts.samples);
  std::size_t attempts = 0;
  while (out.size() < opts.samples && attempts < max_attempts) {
    ++attempts;
    PathSample s;
    s.links.push_back(u);
    s.prob = 1.0;
    LinkId k = u;
    bool arrived = false;
    for (std::size_t step = 0; step < cap; ++step) {
      const std::size_t p0 = ext.successor_begin(k);
      const auto succ = ext.successors(k);
      if (succ.empty()) break;
      double r = uniform01(rng);
      std::size_t j = 0;
      for (; j + 1 < succ.size(); ++j) {
        r -= probs.prob[p0 + j];
        if (r < 0.0) break;
      }
      s.links.push_back(succ[j]);
      s.positions.push_back(p0 + j);
      s.prob *= probs.prob[p0 + j];
      k = succ[j];
      if (k == v) {
        arrived = true;
        break;
      }
      if (k == ext.dummy()) break;
    }
    if (arrived) out.push_back(std::move(s));
  }
  if (stats) {
    stats->attempts += attempts;
    stats->accepted += out.size();
  }
  while (out.size() < opts.samples) {
    PathSample pad;
    pad.padding = true;
    out.push_back(std::move(pad));
  }
  normalize(out);
  return out;
}

std::vector<PathSample> enumerate_connecting_paths(const ExtendedNetwork& ext, const LinkProbabilities& probs,
                                                   LinkId u, LinkId v, std::size_t max_paths) {
  if (u == v) return {trivial_path(u)};
  PathCollector c{ext, probs, v, max_paths, {}, {}};
  c.current.links.push_back(u);
  c.visit(u, 1.0);
  normalize(c.out);
  return c.out;
}

LogLikelihood expected_log_likelihood(const ObservationSet& obs, const ExpectedData& data,
                                      const UtilityModel& model, const ParamVector& params,
                                      const SolverOptions& opts, bool with_gradient, int threads) {
  const auto& groups = obs.groups();
  if (data.samples.size() != groups.size()) throw InputError("expected data does not match the observations");
  const auto sols = solve_destinations(obs, model, params, opts, with_gradient, threads);
  LogLikelihood out = connected_log_likelihood(obs, sols, with_gradient);
  const auto np = static_cast<Eigen::Index>(model.num_params());
  if (with_gradient && out.grad.size() == 0) out.grad = Eigen::VectorXd::Zero(np);

  std::vector<LogLikelihood> parts(groups.size());
  parallel_for(groups.size(), threads, [&](std::size_t g) {
    const LinkProbabilities& probs = sols[g].probs;
    LogLikelihood& part = parts[g];
    if (with_gradient) part.grad = Eigen::VectorXd::Zero(np);
    for (const auto& pair_samples : data.samples[g]) {
      for (const PathSample& s : pair_samples) {
        if (s.weight == 0.0) continue;
        for (std::size_t p : s.positions) {
          const double prob = probs.prob[p];
          if (!(prob > 0.0)) throw InfeasibleParameters("sampled transition has zero probability");
          part.value += s.weight * std::log(prob);
          if (with_gradient) part.grad += (s.weight / prob) * probs.grad.row(static_cast<Eigen::Index>(p)).transpose();
        }
      }
    }
  });
  for (const auto& part : parts) {
    out.value += part.value;
    if (with_gradient) out.grad += part.grad;
  }
  return out;
}

EmResult em_estimate(const ObservationSet& obs, const UtilityModel& model, const Eigen::VectorXd& theta0,
                     const EmOptions& opts, const SolverOptions& solver) {
  using clock = std::chrono::steady_clock;
  const auto& groups = obs.groups();
  EmResult res;
  res.theta = theta0;
  if (opts.track_incomplete_ll)
    res.initial_incomplete_ll =
        dc_log_likelihood(obs, model, ParamVector::from_flat(model, theta0), solver, false, opts.threads).value;

  for (int t = 1; t <= opts.max_iter; ++t) {
    EmIteration it;
    it.iteration = t;
    const auto e0 = clock::now();
    ExpectedData data;
    data.samples.resize(groups.size());
    {
      const auto sols =
          solve_destinations(obs, model, ParamVector::from_flat(model, res.theta), solver, false, opts.threads);
      std::vector<SamplingStats> stats(groups.size());
      parallel_for(groups.size(), opts.threads, [&](std::size_t g) {
        const auto& pairs = groups[g].unconnected;
        data.samples[g].resize(pairs.size());
        for (std::size_t j = 0; j < pairs.size(); ++j) {
          if (opts.exact_e) {
            data.samples[g][j] =
                enumerate_connecting_paths(*groups[g].ext, sols[g].probs, pairs[j].u, pairs[j].v, opts.max_paths);
          } else {
            std::mt19937_64 rng(stream_seed(opts.seed, g, j));
            SamplingStats pair_stats;
            data.samples[g][j] = sample_connecting_paths(*groups[g].ext, sols[g].probs, pairs[j].u, pairs[j].v,
                                                         opts.sampling, rng, &pair_stats);
            stats[g].attempts += pair_stats.attempts;
            stats[g].accepted += pair_stats.accepted;
            // No walk arrived: enumerate instead (throws when there are too many paths).
            if (pair_stats.accepted == 0) {
              ++stats[g].unsampleable;
              data.samples[g][j] =
                  enumerate_connecting_paths(*groups[g].ext, sols[g].probs, pairs[j].u, pairs[j].v, opts.max_paths);
            }
          }
        }
      });
      for (const auto& s : stats) {
        data.stats.attempts += s.attempts;
        data.stats.accepted += s.accepted;
        data.stats.unsampleable += s.unsampleable;
      }
    }
    it.sample_attempts = data.stats.attempts;
    it.samples_accepted = data.stats.accepted;
    it.unsampleable_pairs = data.stats.unsampleable;
    const auto m0 = clock::now();

    const Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
      try {
        auto ll = expected_log_likelihood(obs, data, model, ParamVector::from_flat(model, x), solver, grad != nullptr,
                                          opts.threads);
        if (grad) *grad = ll.grad;
        return ll.value;
      } catch (const InfeasibleParameters&) {
        return -std::numeric_limits<double>::infinity();
      }
    };
    const OptimizeResult m = lbfgs_maximize(objective, res.theta, opts.mstep);
    const auto m1 = clock::now();
    if (m.status == "infeasible_start") {
      res.status = "infeasible_start";
      return res;
    }
    it.step = (m.x - res.theta).lpNorm<Eigen::Infinity>();
    it.theta = m.x;
    it.expected_ll = m.f;
    it.mstep_iterations = m.iterations;
    it.e_seconds = std::chrono::duration<double>(m0 - e0).count();
    it.m_seconds = std::chrono::duration<double>(m1 - m0).count();
    res.theta = m.x;
    res.expected_ll = m.f;
    res.iterations = t;
    if (opts.track_incomplete_ll)
      it.incomplete_ll = dc_log_likelihood(obs, model, ParamVector::from_flat(model, res.theta), solver, false,
                                           opts.threads)
                             .value;
    res.trace.push_back(std::move(it));

    if (obs.is_complete()) {
      res.converged = m.converged;
      res.status = m.converged ? "complete_data" : "mstep_" + m.status;
      return res;
    }
    if (res.trace.back().step < opts.tol) {
      res.converged = true;
      res.status = "converged";
      return res;
    }
  }
  res.status = "max_iter";
  return res;
}

}  // namespace rrc
