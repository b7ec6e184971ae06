#include "rrc/choice_model.hpp"

#include <cmath>
#include <limits>

namespace rrc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

SparseColMatrix identity_minus(const SparseRowMatrix& M) {
  const auto n = M.rows();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(M.nonZeros() + n));
  for (Eigen::Index i = 0; i < n; ++i) t.emplace_back(i, i, 1.0);
  for (Eigen::Index k = 0; k < M.outerSize(); ++k)
    for (SparseRowMatrix::InnerIterator it(M, k); it; ++it) t.emplace_back(it.row(), it.col(), -it.value());
  SparseColMatrix A(n, n);
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

std::shared_ptr<SparseLu> factorize(const SparseColMatrix& A, const char* what) {
  auto lu = std::make_shared<SparseLu>();
  lu->analyzePattern(A);
  lu->factorize(A);
  if (lu->info() != Eigen::Success) throw InfeasibleParameters(std::string(what) + ": singular system");
  return lu;
}

}  // namespace

std::string to_string(ModelKind kind) { return kind == ModelKind::RL ? "rl" : "nrl"; }

ModelKind parse_model_kind(const std::string& text) {
  if (text == "rl" || text == "RL") return ModelKind::RL;
  if (text == "nrl" || text == "NRL") return ModelKind::NRL;
  throw InputError("unknown model '" + text + "' (expected rl or nrl)");
}

UtilityModel::UtilityModel(std::shared_ptr<const Network> net, ModelSpec spec)
    : net_(std::move(net)), spec_(std::move(spec)) {
  if (!net_) throw InputError("null network");
  if (!(spec_.mu > 0.0)) throw InputError("scale mu must be positive");
  const Network& g = *net_;

  struct Source {
    bool pair;
    std::size_t index;
  };
  auto resolve = [&](const std::string& name) -> Source {
    const auto& la = g.link_attribute_names();
    if (auto it = std::find(la.begin(), la.end(), name); it != la.end())
      return {false, static_cast<std::size_t>(it - la.begin())};
    const auto& pa = g.pair_attribute_names();
    if (auto it = std::find(pa.begin(), pa.end(), name); it != pa.end())
      return {true, static_cast<std::size_t>(it - pa.begin())};
    throw InputError("unknown utility feature '" + name + "'");
  };

  theta_names_ = spec_.utility_features;
  if (theta_names_.empty()) {
    theta_names_ = g.link_attribute_names();
    theta_names_.insert(theta_names_.end(), g.pair_attribute_names().begin(), g.pair_attribute_names().end());
  }
  std::vector<Source> sources;
  for (const auto& name : theta_names_) sources.push_back(resolve(name));

  edge_features_.resize(static_cast<Eigen::Index>(g.num_edges()), static_cast<Eigen::Index>(theta_names_.size()));
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    const LinkId a = g.edge_target(e);
    for (std::size_t i = 0; i < sources.size(); ++i) {
      const double x = sources[i].pair ? g.pair_attribute(e, sources[i].index) : g.link_attribute(a, sources[i].index);
      edge_features_(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(i)) = x;
    }
  }

  if (spec_.kind == ModelKind::NRL) {
    omega_names_ = spec_.scale_features;
    scale_attrs_.resize(static_cast<Eigen::Index>(g.num_links()), static_cast<Eigen::Index>(omega_names_.size()));
    const auto& la = g.link_attribute_names();
    for (std::size_t j = 0; j < omega_names_.size(); ++j) {
      const auto& name = omega_names_[j];
      const auto it = std::find(la.begin(), la.end(), name);
      for (LinkId k = 0; k < g.num_links(); ++k) {
        double s = 0.0;
        if (it != la.end())
          s = g.link_attribute(k, static_cast<std::size_t>(it - la.begin()));
        else if (name == kOutgoingLinksAttribute)
          s = static_cast<double>(g.outgoing(k).size());
        else
          throw InputError("unknown scale attribute '" + name + "'");
        scale_attrs_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) = s;
      }
    }
  } else {
    scale_attrs_.resize(static_cast<Eigen::Index>(g.num_links()), 0);
  }
}

std::vector<std::string> UtilityModel::param_names() const {
  std::vector<std::string> names = theta_names_;
  for (const auto& n : omega_names_) names.push_back("scale:" + n);
  return names;
}

ParamVector ParamVector::zeros(const UtilityModel& model) {
  ParamVector p;
  p.theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.num_theta()));
  p.omega = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.num_omega()));
  p.mu = model.spec().mu;
  return p;
}

Eigen::VectorXd ParamVector::flat() const {
  Eigen::VectorXd x(theta.size() + omega.size());
  x << theta, omega;
  return x;
}

ParamVector ParamVector::from_flat(const UtilityModel& model, const Eigen::VectorXd& x) {
  const auto T = static_cast<Eigen::Index>(model.num_theta());
  const auto W = static_cast<Eigen::Index>(model.num_omega());
  if (x.size() != T + W)
    throw DimensionError("parameter vector has " + std::to_string(x.size()) + " entries, expected " +
                         std::to_string(T + W));
  ParamVector p;
  p.theta = x.head(T);
  p.omega = x.tail(W);
  p.mu = model.spec().mu;
  return p;
}

UtilityTable compute_utilities(const ExtendedNetwork& ext, const UtilityModel& model, const ParamVector& params) {
  const auto T = static_cast<Eigen::Index>(model.num_theta());
  if (params.theta.size() != T) throw DimensionError("theta has the wrong dimension");
  UtilityTable table;
  const std::size_t np = ext.num_positions();
  table.v.assign(np, 0.0);
  table.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(np), T);
  const Eigen::MatrixXd& X = model.edge_features();
  for (std::size_t p = 0; p < np; ++p) {
    const std::size_t e = ext.position_edge(p);
    if (e == kNone) continue;
    const auto row = static_cast<Eigen::Index>(p);
    table.features.row(row) = X.row(static_cast<Eigen::Index>(e));
    table.v[p] = table.features.row(row).dot(params.theta);
    table.max_utility = std::max(table.max_utility, table.v[p]);
  }
  return table;
}

void require_nonpositive_utilities(const UtilityTable& utilities) {
  if (utilities.max_utility > 0.0)
    throw InfeasibleParameters("positive link utility " + std::to_string(utilities.max_utility));
  for (double v : utilities.v)
    if (!std::isfinite(v)) throw InfeasibleParameters("non-finite link utility");
}

ScaleField compute_scales(const ExtendedNetwork& ext, const UtilityModel& model, const ParamVector& params) {
  const std::size_t n = ext.size();
  const auto np = static_cast<Eigen::Index>(model.num_params());
  ScaleField s;
  s.dmu = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), np);
  if (model.kind() == ModelKind::RL) {
    if (!(params.mu > 0.0)) throw InputError("scale mu must be positive");
    s.mu_link = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), params.mu);
    s.phi.assign(ext.num_positions(), 1.0);
    return s;
  }
  if (params.omega.size() != static_cast<Eigen::Index>(model.num_omega()))
    throw DimensionError("omega has the wrong dimension");
  const auto T = static_cast<Eigen::Index>(model.num_theta());
  const Eigen::MatrixXd& S = model.scale_attributes();
  s.mu_link.resize(static_cast<Eigen::Index>(n));
  for (LinkId k = 0; k + 1 < n; ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    const double mu = std::exp(S.row(r).dot(params.omega));
    if (!(mu > 0.0) || !std::isfinite(mu)) throw InfeasibleParameters("link scale out of range");
    s.mu_link(r) = mu;
    s.dmu.row(r).tail(np - T) = mu * S.row(r);
  }
  s.mu_link(static_cast<Eigen::Index>(ext.dummy())) = 1.0;
  s.phi.resize(ext.num_positions());
  for (std::size_t p = 0; p < ext.num_positions(); ++p)
    s.phi[p] = s.mu_link(static_cast<Eigen::Index>(ext.position_target(p))) /
               s.mu_link(static_cast<Eigen::Index>(ext.position_source(p)));
  return s;
}

SparseRowMatrix build_transition_weights(const ExtendedNetwork& ext, const UtilityTable& utilities,
                                         const ScaleField& scales) {
  const auto n = static_cast<Eigen::Index>(ext.size());
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(ext.num_positions());
  for (std::size_t p = 0; p < ext.num_positions(); ++p) {
    const LinkId k = ext.position_source(p);
    const double w = std::exp(utilities.v[p] / scales.mu_link(static_cast<Eigen::Index>(k)));
    if (!std::isfinite(w)) throw InfeasibleParameters("transition weight overflow");
    t.emplace_back(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(ext.position_target(p)), w);
  }
  SparseRowMatrix M(n, n);
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

Eigen::VectorXd solve_value_rl(const ExtendedNetwork& ext, const SparseRowMatrix& M, double tol,
                               std::shared_ptr<const SparseLu>* lu_out, double* residual_out) {
  const auto n = static_cast<Eigen::Index>(ext.size());
  if (M.rows() != n || M.cols() != n) throw DimensionError("transition matrix has the wrong size");
  const SparseColMatrix A = identity_minus(M);
  auto lu = factorize(A, "RL value function");
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b(static_cast<Eigen::Index>(ext.dummy())) = 1.0;
  Eigen::VectorXd Z = lu->solve(b);
  if (lu->info() != Eigen::Success) throw InfeasibleParameters("RL value function: solve failed");
  for (LinkId k = 0; k < ext.size(); ++k) {
    const double z = Z(static_cast<Eigen::Index>(k));
    if (!std::isfinite(z))
      throw InfeasibleParameters("RL value function: non-finite solution (path utilities too large)");
    if (ext.retained(k) && !(z > 0.0))
      throw InfeasibleParameters("RL value function: non-positive Z (spectral radius of M >= 1)");
  }
  const double scale = std::max(1.0, Z.lpNorm<Eigen::Infinity>());
  const double residual = (A * Z - b).lpNorm<Eigen::Infinity>() / scale;
  if (!(residual <= tol)) throw InfeasibleParameters("RL value function: residual " + std::to_string(residual));
  if (lu_out) *lu_out = std::move(lu);
  if (residual_out) *residual_out = residual;
  return Z;
}

Eigen::VectorXd solve_value_nrl(const ExtendedNetwork& ext, const SparseRowMatrix& M, const ScaleField& scales,
                                const SolverOptions& opts, NrlIterationTrace* trace) {
  const auto n = static_cast<Eigen::Index>(ext.size());
  const double alpha = opts.nrl_damping;
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InputError("NRL damping must lie in (0, 1]");
  const auto d = static_cast<Eigen::Index>(ext.dummy());
  Eigen::VectorXd Z = Eigen::VectorXd::Zero(n);
  Z(d) = 1.0;
  Eigen::VectorXd F(n);
  if (trace) *trace = NrlIterationTrace{};

  std::vector<double> w(ext.num_positions());
  for (std::size_t p = 0; p < w.size(); ++p)
    w[p] = M.coeff(static_cast<Eigen::Index>(ext.position_source(p)), static_cast<Eigen::Index>(ext.position_target(p)));

  for (int it = 0; it <= opts.nrl_max_iter; ++it) {
    F.setZero();
    F(d) = 1.0;
    for (std::size_t p = 0; p < w.size(); ++p) {
      const auto k = static_cast<Eigen::Index>(ext.position_source(p));
      F(k) += w[p] * std::pow(Z(static_cast<Eigen::Index>(ext.position_target(p))), scales.phi[p]);
    }
    double residual = 0.0;
    for (LinkId k = 0; k < ext.size(); ++k) {
      if (!ext.retained(k)) continue;
      const auto r = static_cast<Eigen::Index>(k);
      residual = std::max(residual, std::abs(F(r) - Z(r)) / std::max(std::abs(Z(r)), 1e-300));
    }
    if (!std::isfinite(residual) && it > 0) throw InfeasibleParameters("NRL value iteration diverged");
    if (residual <= opts.nrl_tol) {
      if (trace) {
        trace->iterations = it;
        trace->residual = residual;
      }
      for (LinkId k = 0; k < ext.size(); ++k)
        if (ext.retained(k) && !(F(static_cast<Eigen::Index>(k)) > 0.0))
          throw InfeasibleParameters("NRL value function: non-positive Z");
      return F;
    }
    Eigen::VectorXd next = (1.0 - alpha) * Z + alpha * F;
    if (trace) {
      double min_inc = std::numeric_limits<double>::infinity();
      for (LinkId k = 0; k < ext.size(); ++k)
        if (ext.retained(k)) min_inc = std::min(min_inc, next(static_cast<Eigen::Index>(k)) - Z(static_cast<Eigen::Index>(k)));
      trace->min_increment.push_back(min_inc);
    }
    Z = std::move(next);
  }
  throw InfeasibleParameters("NRL value iteration did not converge within " + std::to_string(opts.nrl_max_iter) +
                             " iterations");
}

ValueField solve_value(const ExtendedNetwork& ext, const UtilityModel& model, const ParamVector& params,
                       const SolverOptions& opts) {
  ValueField vf;
  vf.dest = ext.dest();
  vf.kind = model.kind();
  vf.utilities = compute_utilities(ext, model, params);
  require_nonpositive_utilities(vf.utilities);
  vf.scales = compute_scales(ext, model, params);
  vf.M = build_transition_weights(ext, vf.utilities, vf.scales);
  if (model.kind() == ModelKind::RL) {
    vf.Z = solve_value_rl(ext, vf.M, opts.rl_tol, &vf.factorization, &vf.residual);
    vf.linear_solves = 1;
  } else {
    NrlIterationTrace trace;
    vf.Z = solve_value_nrl(ext, vf.M, vf.scales, opts, &trace);
    vf.iterations = trace.iterations;
    vf.residual = trace.residual;
  }
  const auto n = static_cast<Eigen::Index>(ext.size());
  vf.V.resize(n);
  for (Eigen::Index k = 0; k < n; ++k)
    vf.V(k) = ext.retained(static_cast<LinkId>(k)) ? vf.scales.mu_link(k) * std::log(vf.Z(k)) : kNegInf;
  vf.V(static_cast<Eigen::Index>(ext.dummy())) = 0.0;
  return vf;
}

namespace {

// P(a|k) for successor position p.
double position_prob(const ExtendedNetwork& ext, const ValueField& vf, std::size_t p) {
  const auto k = static_cast<Eigen::Index>(ext.position_source(p));
  const auto a = static_cast<Eigen::Index>(ext.position_target(p));
  return std::exp((vf.utilities.v[p] + vf.V(a) - vf.V(k)) / vf.scales.mu_link(k));
}

void position_prob_gradient(const ExtendedNetwork& ext, const ValueField& vf, std::size_t p, double prob,
                            Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) {
  const auto k = static_cast<Eigen::Index>(ext.position_source(p));
  const auto a = static_cast<Eigen::Index>(ext.position_target(p));
  const double mu = vf.scales.mu_link(k);
  const Eigen::Index T = vf.utilities.features.cols();
  out = (vf.dV.row(a) - vf.dV.row(k)) / mu;
  out.head(T) += vf.utilities.features.row(static_cast<Eigen::Index>(p)) / mu;
  if (vf.kind == ModelKind::NRL) {
    const double w = vf.utilities.v[p] + vf.V(a) - vf.V(k);
    out -= vf.scales.dmu.row(k) * (w / (mu * mu));
  }
  out *= prob;
}

}  // namespace

void value_jacobian(ValueField& vf, const ExtendedNetwork& ext, const UtilityModel& model) {
  const auto n = static_cast<Eigen::Index>(ext.size());
  const auto T = static_cast<Eigen::Index>(model.num_theta());
  const auto np = static_cast<Eigen::Index>(model.num_params());
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, np);

  if (vf.kind == ModelKind::RL) {
    if (!vf.factorization) throw InputError("value_jacobian: RL value field without factorization");
    // dM_ka/dtheta_i = M_ka x_i(a|k) / mu
    for (std::size_t p = 0; p < ext.num_positions(); ++p) {
      const auto k = static_cast<Eigen::Index>(ext.position_source(p));
      const auto a = static_cast<Eigen::Index>(ext.position_target(p));
      const double m = std::exp(vf.utilities.v[p] / vf.scales.mu_link(k));
      rhs.row(k).head(T) += (m * vf.Z(a) / vf.scales.mu_link(k)) * vf.utilities.features.row(static_cast<Eigen::Index>(p));
    }
    vf.dZ = vf.factorization->solve(rhs);
    vf.linear_solves += static_cast<std::size_t>(np);
    vf.dV = Eigen::MatrixXd::Zero(n, np);
    for (Eigen::Index k = 0; k < n; ++k)
      if (ext.retained(static_cast<LinkId>(k))) vf.dV.row(k) = vf.scales.mu_link(k) * vf.dZ.row(k) / vf.Z(k);
    vf.dV.row(static_cast<Eigen::Index>(ext.dummy())).setZero();
    return;
  }

  // NRL: implicit differentiation of V_k = mu_k log sum_a exp((v(a|k) + V_a) / mu_k).
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(ext.num_positions() + static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) t.emplace_back(i, i, 1.0);
  Eigen::VectorXd expected_w = Eigen::VectorXd::Zero(n);
  for (std::size_t p = 0; p < ext.num_positions(); ++p) {
    const auto k = static_cast<Eigen::Index>(ext.position_source(p));
    const auto a = static_cast<Eigen::Index>(ext.position_target(p));
    const double prob = position_prob(ext, vf, p);
    t.emplace_back(k, a, -prob);
    rhs.row(k).head(T) += prob * vf.utilities.features.row(static_cast<Eigen::Index>(p));
    expected_w(k) += prob * (vf.utilities.v[p] + vf.V(a));
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!ext.retained(static_cast<LinkId>(k)) || k == static_cast<Eigen::Index>(ext.dummy())) continue;
    rhs.row(k) += vf.scales.dmu.row(k) * ((vf.V(k) - expected_w(k)) / vf.scales.mu_link(k));
  }
  SparseColMatrix A(n, n);
  A.setFromTriplets(t.begin(), t.end());
  auto lu = factorize(A, "NRL value Jacobian");
  vf.dV = lu->solve(rhs);
  vf.linear_solves += static_cast<std::size_t>(np);
  vf.dZ = Eigen::MatrixXd::Zero(n, np);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (!ext.retained(static_cast<LinkId>(k))) {
      vf.dV.row(k).setZero();
      continue;
    }
    const double mu = vf.scales.mu_link(k);
    vf.dZ.row(k) = vf.Z(k) * (vf.dV.row(k) / mu - vf.scales.dmu.row(k) * (vf.V(k) / (mu * mu)));
  }
}

double link_choice_prob(const ExtendedNetwork& ext, const ValueField& vf, LinkId k, LinkId a) {
  if (k >= ext.size() || !ext.retained(k) || k == ext.dummy())
    throw InputError("link_choice_prob: link " + std::to_string(k) + " is pruned or absorbing");
  const std::size_t p = ext.position(k, a);
  if (p == kNone) throw InputError("link_choice_prob: link " + std::to_string(a) + " is not a successor");
  return position_prob(ext, vf, p);
}

Eigen::VectorXd link_prob_gradient(const ExtendedNetwork& ext, const ValueField& vf, const UtilityModel& model,
                                   LinkId k, LinkId a) {
  if (!vf.has_jacobian()) throw InputError("link_prob_gradient: value Jacobian not computed");
  const double prob = link_choice_prob(ext, vf, k, a);
  Eigen::RowVectorXd g(static_cast<Eigen::Index>(model.num_params()));
  position_prob_gradient(ext, vf, ext.position(k, a), prob, g);
  return g.transpose();
}

SparseRowMatrix LinkProbabilities::matrix(const ExtendedNetwork& ext) const {
  const auto n = static_cast<Eigen::Index>(ext.size());
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(prob.size());
  for (std::size_t p = 0; p < prob.size(); ++p)
    t.emplace_back(static_cast<Eigen::Index>(ext.position_source(p)), static_cast<Eigen::Index>(ext.position_target(p)),
                   prob[p]);
  SparseRowMatrix P(n, n);
  P.setFromTriplets(t.begin(), t.end());
  return P;
}

SparseRowMatrix LinkProbabilities::gradient_matrix(const ExtendedNetwork& ext, std::size_t i) const {
  const auto n = static_cast<Eigen::Index>(ext.size());
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(prob.size());
  for (std::size_t p = 0; p < prob.size(); ++p)
    t.emplace_back(static_cast<Eigen::Index>(ext.position_source(p)), static_cast<Eigen::Index>(ext.position_target(p)),
                   grad(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(i)));
  SparseRowMatrix D(n, n);
  D.setFromTriplets(t.begin(), t.end());
  return D;
}

LinkProbabilities link_probabilities(const ExtendedNetwork& ext, const ValueField& vf, const UtilityModel& model,
                                     bool with_gradient) {
  LinkProbabilities out;
  const std::size_t np = ext.num_positions();
  out.prob.resize(np);
  for (std::size_t p = 0; p < np; ++p) out.prob[p] = position_prob(ext, vf, p);
  if (with_gradient) {
    if (!vf.has_jacobian()) throw InputError("link_probabilities: value Jacobian not computed");
    out.grad.resize(static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(model.num_params()));
    for (std::size_t p = 0; p < np; ++p)
      position_prob_gradient(ext, vf, p, out.prob[p], out.grad.row(static_cast<Eigen::Index>(p)));
  }
  return out;
}

DestinationSolution solve_destination(const ExtendedNetwork& ext, const UtilityModel& model,
                                      const ParamVector& params, const SolverOptions& opts, bool with_gradient) {
  DestinationSolution s;
  s.ext = &ext;
  s.vf = solve_value(ext, model, params, opts);
  if (with_gradient) value_jacobian(s.vf, ext, model);
  s.probs = link_probabilities(ext, s.vf, model, with_gradient);
  return s;
}

}  // namespace rrc
