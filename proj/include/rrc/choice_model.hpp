#pragma once

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "rrc/common.hpp"
#include "rrc/network.hpp"

namespace rrc {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using SparseColMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor>;
using SparseLu = Eigen::SparseLU<SparseColMatrix, Eigen::COLAMDOrdering<int>>;

enum class ModelKind { RL, NRL };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

/// Name of the derived link attribute counting outgoing links; usable as a
/// scale attribute without being a column of the network file.
inline constexpr const char* kOutgoingLinksAttribute = "outgoing_links";

struct ModelSpec {
  ModelKind kind = ModelKind::RL;
  /// Utility features by name, drawn from link attributes (of the chosen link
  /// a) and pair attributes (of the turn k -> a). Empty selects all of them.
  std::vector<std::string> utility_features;
  /// NRL scale attributes s_k by link attribute name.
  std::vector<std::string> scale_features;
  /// Fixed RL scale.
  double mu = 1.0;
};

struct SolverOptions {
  /// NRL value iteration: relative residual tolerance, cap and damping.
  double nrl_tol = 1e-13;
  int nrl_max_iter = 5000;
  double nrl_damping = 1.0;
  /// Accepted relative residual of the RL linear solve.
  double rl_tol = 1e-10;
};

/// The feature layout of a model on a given network: x(a|k) for every edge and
/// the scale attributes s_k for every link, resolved once.
class UtilityModel {
 public:
  UtilityModel(std::shared_ptr<const Network> net, ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  ModelKind kind() const { return spec_.kind; }
  const Network& network() const { return *net_; }
  const std::shared_ptr<const Network>& network_ptr() const { return net_; }

  std::size_t num_theta() const { return theta_names_.size(); }
  std::size_t num_omega() const { return omega_names_.size(); }
  std::size_t num_params() const { return num_theta() + num_omega(); }
  const std::vector<std::string>& theta_names() const { return theta_names_; }
  const std::vector<std::string>& omega_names() const { return omega_names_; }
  std::vector<std::string> param_names() const;

  /// num_edges x num_theta.
  const Eigen::MatrixXd& edge_features() const { return edge_features_; }
  /// num_links x num_omega.
  const Eigen::MatrixXd& scale_attributes() const { return scale_attrs_; }

 private:
  std::shared_ptr<const Network> net_;
  ModelSpec spec_;
  std::vector<std::string> theta_names_;
  std::vector<std::string> omega_names_;
  Eigen::MatrixXd edge_features_;
  Eigen::MatrixXd scale_attrs_;
};

/// Utility coefficients theta, NRL scale coefficients omega (empty for RL) and
/// the fixed RL scale mu.
struct ParamVector {
  Eigen::VectorXd theta;
  Eigen::VectorXd omega;
  double mu = 1.0;

  static ParamVector zeros(const UtilityModel& model);
  /// [theta; omega], the vector the optimizers work on.
  Eigen::VectorXd flat() const;
  static ParamVector from_flat(const UtilityModel& model, const Eigen::VectorXd& x);
};

/// Deterministic utilities v(a|k) = theta' x(a|k) per successor position of an
/// ExtendedNetwork; v(d|k) = 0. Their derivative with respect to theta is the
/// feature row, with respect to omega zero.
struct UtilityTable {
  std::vector<double> v;
  Eigen::MatrixXd features;  // positions x num_theta
  double max_utility = -std::numeric_limits<double>::infinity();
};

UtilityTable compute_utilities(const ExtendedNetwork& ext, const UtilityModel& model,
                               const ParamVector& params);

/// Per-link scales. RL: mu_k = mu everywhere. NRL: mu_k = exp(omega' s_k) and
/// mu_d = 1. phi_ka = mu_a / mu_k per successor position.
struct ScaleField {
  Eigen::VectorXd mu_link;
  std::vector<double> phi;
  /// d mu_k / d param (|Ã| x num_params); zero for RL.
  Eigen::MatrixXd dmu;
};

ScaleField compute_scales(const ExtendedNetwork& ext, const UtilityModel& model,
                          const ParamVector& params);

/// M_ka = exp(v(a|k) / mu_k) on successor positions. Rows of pruned links and
/// of the dummy are empty.
SparseRowMatrix build_transition_weights(const ExtendedNetwork& ext, const UtilityTable& utilities,
                                         const ScaleField& scales);

/// Throws InfeasibleParameters when any non-dummy utility is positive.
void require_nonpositive_utilities(const UtilityTable& utilities);

struct ValueField {
  NodeId dest = 0;
  ModelKind kind = ModelKind::RL;
  Eigen::VectorXd Z;
  Eigen::VectorXd V;
  SparseRowMatrix M;
  UtilityTable utilities;
  ScaleField scales;
  /// |Ã| x num_params; empty until value_jacobian() ran.
  Eigen::MatrixXd dZ;
  Eigen::MatrixXd dV;
  /// Factorization of (I - M) for RL, kept for the Jacobian right-hand sides.
  std::shared_ptr<const SparseLu> factorization;
  int iterations = 0;
  double residual = 0.0;
  /// Linear solves performed (value + Jacobian columns).
  std::size_t linear_solves = 0;

  bool has_jacobian() const { return dZ.size() > 0 || dV.size() > 0; }
};

/// Solves (I - M) Z = b with b = e_d by sparse LU. Fails with
/// InfeasibleParameters if the system is singular or the solution is not
/// strictly positive on retained links (spectral radius of M >= 1), or if the
/// residual exceeds `tol`. The factorization is returned through `lu`.
Eigen::VectorXd solve_value_rl(const ExtendedNetwork& ext, const SparseRowMatrix& M, double tol,
                               std::shared_ptr<const SparseLu>* lu = nullptr,
                               double* residual = nullptr);

struct NrlIterationTrace {
  int iterations = 0;
  double residual = 0.0;
  /// max_k (Z_k^{t+1} - Z_k^t) per iteration; >= 0 everywhere means monotone.
  std::vector<double> min_increment;
};

/// Damped value iteration Z <- (1-alpha) Z + alpha F(Z) with
/// F_k(Z) = sum_a M_ka Z_a^{phi_ka} + b_k, starting at Z = b.
Eigen::VectorXd solve_value_nrl(const ExtendedNetwork& ext, const SparseRowMatrix& M,
                                const ScaleField& scales, const SolverOptions& opts,
                                NrlIterationTrace* trace = nullptr);

/// Builds utilities, scales and M and solves the model's value function.
/// Throws InfeasibleParameters for positive utilities or failed solves.
ValueField solve_value(const ExtendedNetwork& ext, const UtilityModel& model,
                       const ParamVector& params, const SolverOptions& opts);

/// Fills vf.dZ and vf.dV. RL reuses the factorization of (I - M) for each
/// parameter: (I - M) dZ_i = (dM/dtheta_i) Z. NRL differentiates the fixed
/// point in value space: (I - P) dV_i = sum_a P_ka dv(a|k)/di
///   + (dmu_k/di) (V_k - sum_a P_ka (v(a|k) + V_a)) / mu_k.
void value_jacobian(ValueField& vf, const ExtendedNetwork& ext, const UtilityModel& model);

/// P(a|k) = exp((v(a|k) + V(a) - V(k)) / mu_k). Throws InputError when k is
/// pruned or a is not a successor of k.
double link_choice_prob(const ExtendedNetwork& ext, const ValueField& vf, LinkId k, LinkId a);

/// dP(a|k)/dparam for every parameter; requires the value Jacobian.
Eigen::VectorXd link_prob_gradient(const ExtendedNetwork& ext, const ValueField& vf,
                                   const UtilityModel& model, LinkId k, LinkId a);

/// All link-choice probabilities of one destination, aligned with the
/// ExtendedNetwork's successor positions, with optional gradients.
struct LinkProbabilities {
  std::vector<double> prob;
  /// positions x num_params; empty when gradients were not requested.
  Eigen::MatrixXd grad;

  bool has_gradient() const { return grad.size() > 0 || prob.empty(); }
  /// Row-major |Ã| x |Ã| matrix P with P(k, a) = P(a|k).
  SparseRowMatrix matrix(const ExtendedNetwork& ext) const;
  /// Same pattern, holding dP/dparam_i.
  SparseRowMatrix gradient_matrix(const ExtendedNetwork& ext, std::size_t i) const;
};

LinkProbabilities link_probabilities(const ExtendedNetwork& ext, const ValueField& vf,
                                     const UtilityModel& model, bool with_gradient);

/// Everything the estimators need for one destination at one parameter point.
struct DestinationSolution {
  const ExtendedNetwork* ext = nullptr;
  ValueField vf;
  LinkProbabilities probs;
};

DestinationSolution solve_destination(const ExtendedNetwork& ext, const UtilityModel& model,
                                      const ParamVector& params, const SolverOptions& opts,
                                      bool with_gradient);

}  // namespace rrc
