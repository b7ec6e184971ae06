#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "rrc/choice_model.hpp"
#include "rrc/network.hpp"

namespace rrc {

struct PairQuery {
  LinkId u = 0;
  LinkId v = 0;
};

/// Sum over every path from u to v of the product of link-choice
/// probabilities, by explicit enumeration. Meant as a reference on small
/// acyclic networks: throws InputError when a path longer than |Ã| is found
/// (the network has a cycle) and NumericalError past `max_paths` paths.
/// Returns 1 for u == v.
double brute_force_reach(const ExtendedNetwork& ext, const LinkProbabilities& probs, LinkId u, LinkId v,
                         std::size_t max_paths = 1000000);

/// Reach probabilities towards one target a: Q^a is P with row a zeroed,
/// (I - Q^a) pi = e_a, and pi_k is the probability of reaching a from k.
/// With gradients, dpi_i = (I - Q^a)^{-1} (dQ^a/dparam_i) pi.
struct ReachTarget {
  LinkId target = 0;
  Eigen::VectorXd pi;
  /// |Ã| x num_params, empty without gradients.
  Eigen::MatrixXd dpi;
};

ReachTarget solve_reach_single(const ExtendedNetwork& ext, const LinkProbabilities& probs, LinkId target,
                               bool with_gradient);

/// The composed system of one destination. States are the |Ã| links plus an
/// artificial state r (index |Ã|). Q0 holds P transposed in its leading block,
/// Q0(s, s') = P(s | s'), and has an empty last row and column. Column j of H
/// has ones at the j-th distinct origin link and at r. Solving
/// (I - Q0) Pi = H gives, on acyclic networks, Pi(v, j) = P(v | u_j).
struct ComposedSystem {
  std::size_t states = 0;
  SparseColMatrix A;  // I - Q0
  Eigen::MatrixXd H;
  /// Distinct origin link of every column.
  std::vector<LinkId> column_origin;
  /// For every query, its column.
  std::vector<std::size_t> query_column;
  std::vector<PairQuery> queries;
};

ComposedSystem build_composed_system(const ExtendedNetwork& ext, const LinkProbabilities& probs,
                                     const std::vector<PairQuery>& queries);

/// A factorized composed system. Every call to solve() is one composed solve
/// (all columns at once) and is counted.
class ComposedSolver {
 public:
  explicit ComposedSolver(const ComposedSystem& system);
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs);
  std::size_t solves() const { return solves_; }

 private:
  SparseLu lu_;
  std::size_t solves_ = 0;
};

/// Pi for all columns of the system.
Eigen::MatrixXd solve_reach_matrix(const ComposedSystem& system, ComposedSolver& solver);

/// dPi/dparam_i = (I - Q0)^{-1} (dQ0/dparam_i) Pi, one composed solve per
/// parameter. Requires link-probability gradients.
std::vector<Eigen::MatrixXd> reach_jacobian(const ExtendedNetwork& ext,
                                            const LinkProbabilities& probs, const Eigen::MatrixXd& Pi,
                                            ComposedSolver& solver);

/// P(v | u) for each query through the composed system.
std::vector<double> reach_probabilities_composed(const ExtendedNetwork& ext, const LinkProbabilities& probs,
                                                 const std::vector<PairQuery>& queries);

/// P(v | u) for each query through one single-target system per distinct v.
std::vector<double> reach_probabilities_per_pair(const ExtendedNetwork& ext, const LinkProbabilities& probs,
                                                 const std::vector<PairQuery>& queries);

}  // namespace rrc
