#include "rrc/dc_solver.hpp"

#include <map>

namespace rrc {

namespace {

struct PathEnumerator {
  const ExtendedNetwork& ext;
  const LinkProbabilities& probs;
  LinkId target;
  std::size_t max_paths;
  std::size_t paths = 0;
  double total = 0.0;

  void visit(LinkId k, double prob, std::size_t depth) {
    if (depth > ext.size()) throw InputError("brute_force_reach: the network contains a cycle");
    const std::size_t p0 = ext.successor_begin(k);
    const auto succ = ext.successors(k);
    for (std::size_t j = 0; j < succ.size(); ++j) {
      const double q = prob * probs.prob[p0 + j];
      if (succ[j] == target) {
        if (++paths > max_paths) throw NumericalError("brute_force_reach: too many paths");
        total += q;
      } else {
        visit(succ[j], q, depth + 1);
      }
    }
  }
};

}  // namespace

double brute_force_reach(const ExtendedNetwork& ext, const LinkProbabilities& probs, LinkId u, LinkId v,
                         std::size_t max_paths) {
  if (u >= ext.size() || v >= ext.size()) throw InputError("brute_force_reach: link out of range");
  if (u == v) return 1.0;
  PathEnumerator e{ext, probs, v, max_paths};
  e.visit(u, 1.0, 0);
  return e.total;
}

ReachTarget solve_reach_single(const ExtendedNetwork& ext, const LinkProbabilities& probs, LinkId target,
                               bool with_gradient) {
  const auto n = static_cast<Eigen::Index>(ext.size());
  if (target >= ext.size()) throw InputError("solve_reach_single: target out of range");
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(probs.prob.size() + static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) t.emplace_back(i, i, 1.0);
  for (std::size_t p = 0; p < probs.prob.size(); ++p) {
    const LinkId k = ext.position_source(p);
    if (k == target) continue;
    t.emplace_back(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(ext.position_target(p)), -probs.prob[p]);
  }
  SparseColMatrix A(n, n);
  A.setFromTriplets(t.begin(), t.end());
  SparseLu lu;
  lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() != Eigen::Success) throw InfeasibleParameters("reach system is singular");

  ReachTarget out;
  out.target = target;
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  e(static_cast<Eigen::Index>(target)) = 1.0;
  out.pi = lu.solve(e);
  if (with_gradient) {
    if (!probs.has_gradient()) throw InputError("solve_reach_single: probabilities carry no gradient");
    const Eigen::Index np = probs.grad.cols();
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, np);
    for (std::size_t p = 0; p < probs.prob.size(); ++p) {
      const LinkId k = ext.position_source(p);
      if (k == target) continue;
      rhs.row(static_cast<Eigen::Index>(k)) +=
          probs.grad.row(static_cast<Eigen::Index>(p)) * out.pi(static_cast<Eigen::Index>(ext.position_target(p)));
    }
    out.dpi = lu.solve(rhs);
  }
  return out;
}

ComposedSystem build_composed_system(const ExtendedNetwork& ext, const LinkProbabilities& probs,
                                     const std::vector<PairQuery>& queries) {
  ComposedSystem sys;
  const std::size_t n = ext.size();
  sys.states = n + 1;
  const auto N = static_cast<Eigen::Index>(sys.states);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(probs.prob.size() + sys.states);
  for (Eigen::Index i = 0; i < N; ++i) t.emplace_back(i, i, 1.0);
  for (std::size_t p = 0; p < probs.prob.size(); ++p)
    t.emplace_back(static_cast<Eigen::Index>(ext.position_target(p)), static_cast<Eigen::Index>(ext.position_source(p)),
                   -probs.prob[p]);
  sys.A.resize(N, N);
  sys.A.setFromTriplets(t.begin(), t.end());

  // Columns depend on the origin link only, so queries sharing u share one.
  std::map<LinkId, std::size_t> column_of;
  sys.queries = queries;
  sys.query_column.reserve(queries.size());
  for (const auto& q : queries) {
    if (q.u >= n || q.v >= n) throw InputError("composed system: link out of range");
    auto [it, inserted] = column_of.emplace(q.u, sys.column_origin.size());
    if (inserted) sys.column_origin.push_back(q.u);
    sys.query_column.push_back(it->second);
  }
  sys.H = Eigen::MatrixXd::Zero(N, static_cast<Eigen::Index>(sys.column_origin.size()));
  for (std::size_t j = 0; j < sys.column_origin.size(); ++j) {
    sys.H(static_cast<Eigen::Index>(sys.column_origin[j]), static_cast<Eigen::Index>(j)) = 1.0;
    sys.H(N - 1, static_cast<Eigen::Index>(j)) = 1.0;
  }
  return sys;
}

ComposedSolver::ComposedSolver(const ComposedSystem& system) {
  lu_.analyzePattern(system.A);
  lu_.factorize(system.A);
  if (lu_.info() != Eigen::Success) throw InfeasibleParameters("composed system is singular");
}

Eigen::MatrixXd ComposedSolver::solve(const Eigen::MatrixXd& rhs) {
  ++solves_;
  Eigen::MatrixXd x = lu_.solve(rhs);
  if (lu_.info() != Eigen::Success || !x.allFinite()) throw InfeasibleParameters("composed solve failed");
  return x;
}

Eigen::MatrixXd solve_reach_matrix(const ComposedSystem& system, ComposedSolver& solver) {
  return solver.solve(system.H);
}

std::vector<Eigen::MatrixXd> reach_jacobian(const ExtendedNetwork& ext,
                                            const LinkProbabilities& probs, const Eigen::MatrixXd& Pi,
                                            ComposedSolver& solver) {
  if (!probs.has_gradient()) throw InputError("reach_jacobian: probabilities carry no gradient");
  const Eigen::Index np = probs.grad.cols();
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(np));
  Eigen::MatrixXd rhs(Pi.rows(), Pi.cols());
  for (Eigen::Index i = 0; i < np; ++i) {
    // dQ0(a, k) = dP(a | k)
    rhs.setZero();
    for (std::size_t p = 0; p < probs.prob.size(); ++p) {
      const double g = probs.grad(static_cast<Eigen::Index>(p), i);
      if (g == 0.0) continue;
      rhs.row(static_cast<Eigen::Index>(ext.position_target(p))) += g * Pi.row(static_cast<Eigen::Index>(ext.position_source(p)));
    }
    out.push_back(solver.solve(rhs));
  }
  return out;
}

std::vector<double> reach_probabilities_composed(const ExtendedNetwork& ext, const LinkProbabilities& probs,
                                                 const std::vector<PairQuery>& queries) {
  const ComposedSystem sys = build_composed_system(ext, probs, queries);
  ComposedSolver solver(sys);
  const Eigen::MatrixXd Pi = solve_reach_matrix(sys, solver);
  std::vector<double> out(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q)
    out[q] = Pi(static_cast<Eigen::Index>(queries[q].v), static_cast<Eigen::Index>(sys.query_column[q]));
  return out;
}

std::vector<double> reach_probabilities_per_pair(const ExtendedNetwork& ext, const LinkProbabilities& probs,
                                                 const std::vector<PairQuery>& queries) {
  std::map<LinkId, Eigen::VectorXd> by_target;
  std::vector<double> out(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    auto it = by_target.find(queries[q].v);
    if (it == by_target.end())
      it = by_target.emplace(queries[q].v, solve_reach_single(ext, probs, queries[q].v, false).pi).first;
    out[q] = it->second(static_cast<Eigen::Index>(queries[q].u));
  }
  return out;
}

}  // namespace rrc
