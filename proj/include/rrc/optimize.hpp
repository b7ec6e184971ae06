#pragma once

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace rrc {

/// f(x), filling *grad when non-null. Returning -infinity marks x as
/// infeasible; the line search then backs off.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct LbfgsOptions {
  int memory = 10;
  int max_iter = 500;
  /// Stop when the largest gradient component is at most this.
  double grad_tol = 1e-6;
  double armijo_c1 = 1e-4;
  int max_backtracks = 60;
  /// Progress below this fraction of |f| counts as numerical noise: such steps
  /// are accepted when they do not decrease f, and a stalled search stops as
  /// converged.
  double noise_rel = 1e-12;
};

struct OptimizeResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  /// "gradient", "stagnation", "max_iter", "line_search" or "infeasible_start".
  std::string status;
};

/// Maximizes f with limited-memory BFGS and a backtracking Armijo line
/// search. f never decreases between accepted iterates.
OptimizeResult lbfgs_maximize(const Objective& f, const Eigen::VectorXd& x0, const LbfgsOptions& opts = {});

/// Hessian by central differences of the analytic gradient, symmetrized.
Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x, double h = 1e-5);

}  // namespace rrc
