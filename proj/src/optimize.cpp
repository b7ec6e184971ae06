#include "rrc/optimize.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace rrc {

OptimizeResult lbfgs_maximize(const Objective& f, const Eigen::VectorXd& x0, const LbfgsOptions& opts) {
  // Internally minimizes F = -f with gradient G = -grad f.
  OptimizeResult res;
  res.x = x0;
  Eigen::VectorXd g(x0.size());
  double fx = f(res.x, &g);
  ++res.evaluations;
  res.f = fx;
  res.grad = g;
  if (!std::isfinite(fx) || !g.allFinite()) {
    res.status = "infeasible_start";
    return res;
  }
  Eigen::VectorXd G = -g;
  std::deque<Eigen::VectorXd> S, Y;
  std::deque<double> rho;

  Eigen::VectorXd x_new(x0.size()), g_new(x0.size());
  while (true) {
    if (G.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
      res.converged = true;
      res.status = "gradient";
      break;
    }
    if (res.iterations >= opts.max_iter) {
      res.status = "max_iter";
      break;
    }

    // Two-loop recursion for d = -H G.
    Eigen::VectorXd q = G;
    std::vector<double> alpha(S.size());
    for (std::size_t i = S.size(); i-- > 0;) {
      alpha[i] = rho[i] * S[i].dot(q);
      q -= alpha[i] * Y[i];
    }
    if (!S.empty()) q *= S.back().dot(Y.back()) / Y.back().squaredNorm();
    for (std::size_t i = 0; i < S.size(); ++i) {
      const double beta = rho[i] * Y[i].dot(q);
      q += (alpha[i] - beta) * S[i];
    }
    Eigen::VectorXd d = -q;
    double slope = G.dot(d);
    double step = 1.0;
    if (S.empty() || !(slope < 0.0)) {
      S.clear();
      Y.clear();
      rho.clear();
      d = -G;
      slope = G.dot(d);
      step = 1.0 / G.lpNorm<Eigen::Infinity>();
    }

    const double F = -fx;
    const double noise = opts.noise_rel * std::max(1.0, std::abs(F));
    bool accepted = false;
    bool stalled = false;
    double F_new = F;
    for (int b = 0; b <= opts.max_backtracks; ++b, step *= 0.5) {
      x_new = res.x + step * d;
      const double f_try = f(x_new, &g_new);
      ++res.evaluations;
      if (!std::isfinite(f_try) || !g_new.allFinite()) continue;
      F_new = -f_try;
      if (F_new <= F + opts.armijo_c1 * step * slope || (F_new <= F && -step * slope <= noise)) {
        accepted = true;
        break;
      }
      if (-step * slope <= noise) {
        stalled = true;
        break;
      }
    }
    if (!accepted) {
      // Only a finite trial whose predicted gain is below the noise level
      // counts as convergence; running out of feasible steps does not.
      if (stalled) {
        res.converged = true;
        res.status = "stagnation";
      } else {
        res.status = "line_search";
      }
      break;
    }

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd G_new = -g_new;
    const Eigen::VectorXd y = G_new - G;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (static_cast<int>(S.size()) == opts.memory) {
        S.pop_front();
        Y.pop_front();
        rho.pop_front();
      }
      S.push_back(s);
      Y.push_back(y);
      rho.push_back(1.0 / sy);
    }
    const double improvement = F - F_new;
    res.x = x_new;
    fx = -F_new;
    G = G_new;
    ++res.iterations;
    res.f = fx;
    res.grad = g_new;
    if (improvement <= noise && s.lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(1.0, res.x.lpNorm<Eigen::Infinity>())) {
      res.converged = true;
      res.status = "stagnation";
      break;
    }
  }
  res.f = fx;
  res.grad = -G;
  return res;
}

Eigen::MatrixXd numeric_hessian(const Objective& f, const Eigen::VectorXd& x, double h) {
  const auto n = x.size();
  Eigen::MatrixXd H(n, n);
  Eigen::VectorXd gp(n), gm(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    const double fp = f(xp, &gp);
    const double fm = f(xm, &gm);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      return Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN());
    H.col(j) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

}  // namespace rrc
