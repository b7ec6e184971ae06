#include "rrc/mle.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

namespace rrc {

std::string to_string(Algorithm algo) {
  switch (algo) {
    case Algorithm::DC: return "dc";
    case Algorithm::EM: return "em";
    case Algorithm::NFXP_I: return "nfxp-i";
    case Algorithm::NFXP_C: return "nfxp-c";
  }
  return "?";
}

Algorithm parse_algorithm(const std::string& text) {
  if (text == "dc") return Algorithm::DC;
  if (text == "em") return Algorithm::EM;
  if (text == "nfxp-i") return Algorithm::NFXP_I;
  if (text == "nfxp-c") return Algorithm::NFXP_C;
  throw InputError("unknown algorithm '" + text + "' (expected dc, em, nfxp-i or nfxp-c)");
}

namespace {

nlohmann::json vec_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// JSON has no infinity; -inf log-likelihoods are written as null.
nlohmann::json num_json(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json to_json(const EstimationResult& r) {
  nlohmann::json j;
  j["algorithm"] = r.algorithm;
  j["model"] = r.model;
  j["param_names"] = r.param_names;
  j["theta"] = vec_json(r.theta);
  j["ll_at_solution"] = num_json(r.ll_at_solution);
  j["iterations"] = r.iterations;
  j["evaluations"] = r.evaluations;
  j["converged"] = r.converged;
  j["status"] = r.status;
  j["total_seconds"] = r.total_seconds;
  j["per_iteration_seconds"] = r.per_iteration_seconds;
  if (r.std_errors.size() > 0) j["std_errors"] = vec_json(r.std_errors);
  if (!r.em_trace.empty()) {
    auto& tr = j["em_trace"] = nlohmann::json::array();
    for (const auto& it : r.em_trace)
      tr.push_back({{"iteration", it.iteration},
                    {"theta", vec_json(it.theta)},
                    {"expected_ll", num_json(it.expected_ll)},
                    {"incomplete_ll", num_json(it.incomplete_ll)},
                    {"step", it.step},
                    {"sample_attempts", it.sample_attempts},
                    {"samples_accepted", it.samples_accepted},
                    {"unsampleable_pairs", it.unsampleable_pairs},
                    {"mstep_iterations", it.mstep_iterations},
                    {"e_seconds", it.e_seconds},
                    {"m_seconds", it.m_seconds}});
  }
  j["options"] = r.options;
  return j;
}

EstimationResult estimation_result_from_json(const nlohmann::json& j) {
  EstimationResult r;
  try {
    r.algorithm = j.value("algorithm", "");
    r.model = j.at("model").get<std::string>();
    r.param_names = j.at("param_names").get<std::vector<std::string>>();
    r.theta = json_vec(j.at("theta"));
    const auto& ll = j.value("ll_at_solution", nlohmann::json(nullptr));
    r.ll_at_solution = ll.is_null() ? -std::numeric_limits<double>::infinity() : ll.get<double>();
    r.iterations = j.value("iterations", 0);
    r.converged = j.value("converged", false);
    r.status = j.value("status", "");
    if (j.contains("options")) r.options = j["options"];
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed estimation result: ") + e.what());
  }
  if (r.theta.size() != static_cast<Eigen::Index>(r.param_names.size()))
    throw ParseError("malformed estimation result: theta and param_names differ in length");
  return r;
}

Objective likelihood_objective(const ObservationSet& obs, const UtilityModel& model, Algorithm algorithm,
                               const SolverOptions& solver, int threads) {
  if (algorithm == Algorithm::EM) throw InputError("em has no fixed likelihood objective");
  return [&obs, &model, algorithm, solver, threads](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    try {
      const ParamVector params = ParamVector::from_flat(model, x);
      LogLikelihood ll = algorithm == Algorithm::DC
                             ? dc_log_likelihood(obs, model, params, solver, grad != nullptr, threads)
                             : connected_log_likelihood(obs, model, params, solver, grad != nullptr, threads);
      if (grad) *grad = ll.grad;
      return ll.value;
    } catch (const InfeasibleParameters&) {
      return -std::numeric_limits<double>::infinity();
    }
  };
}

EstimationResult estimate(const ObservationSet& obs, const UtilityModel& model, const EstimateOptions& opts) {
  using clock = std::chrono::steady_clock;
  if (opts.algorithm == Algorithm::NFXP_C && !obs.is_complete())
    throw InputError("nfxp-c needs complete trips; " + std::to_string(obs.num_unconnected()) +
                     " observed pairs are not consecutive links");

  EstimationResult r;
  r.algorithm = to_string(opts.algorithm);
  r.model = to_string(model.kind());
  r.param_names = model.param_names();
  const Eigen::VectorXd theta0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.num_params()));
  r.options = {{"tol", opts.lbfgs.grad_tol},
               {"max_iter", opts.lbfgs.max_iter},
               {"lbfgs_memory", opts.lbfgs.memory},
               {"threads", opts.threads},
               {"nrl_tol", opts.solver.nrl_tol},
               {"nrl_max_iter", opts.solver.nrl_max_iter},
               {"nrl_damping", opts.solver.nrl_damping},
               {"theta0", "zeros"}};
  if (opts.algorithm == Algorithm::EM)
    r.options.update({{"samples", opts.em.sampling.samples},
                      {"exact_e", opts.em.exact_e},
                      {"em_tol", opts.em.tol},
                      {"em_max_iter", opts.em.max_iter},
                      {"seed", opts.em.seed},
                      {"step_cap_factor", opts.em.sampling.step_cap_factor},
                      {"retry_factor", opts.em.sampling.retry_factor}});

  const auto t0 = clock::now();
  if (opts.algorithm == Algorithm::EM) {
    EmOptions em = opts.em;
    em.mstep = opts.lbfgs;
    em.threads = opts.threads;
    const EmResult res = em_estimate(obs, model, theta0, em, opts.solver);
    r.theta = res.theta;
    r.ll_at_solution = res.expected_ll;
    r.iterations = res.iterations;
    r.converged = res.converged;
    r.status = res.status;
    r.em_trace = res.trace;
    for (const auto& it : res.trace) r.evaluations += it.mstep_iterations;
  } else {
    const Objective f = likelihood_objective(obs, model, opts.algorithm, opts.solver, opts.threads);
    const OptimizeResult res = lbfgs_maximize(f, theta0, opts.lbfgs);
    r.theta = res.x;
    r.ll_at_solution = res.f;
    r.iterations = res.iterations;
    r.evaluations = res.evaluations;
    r.converged = res.converged;
    r.status = res.status;
  }
  r.total_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  r.per_iteration_seconds = r.total_seconds / std::max(1, r.iterations);

  if (opts.standard_errors) {
    const Algorithm a = opts.algorithm == Algorithm::EM ? Algorithm::DC : opts.algorithm;
    r.std_errors = standard_errors(likelihood_objective(obs, model, a, opts.solver, opts.threads), r.theta);
  }
  return r;
}

double evaluate_complete_ll(const ObservationSet& obs, const UtilityModel& model, const Eigen::VectorXd& theta,
                            const SolverOptions& solver, int threads) {
  if (!obs.is_complete()) throw InputError("complete log-likelihood needs complete trips");
  return likelihood_objective(obs, model, Algorithm::NFXP_C, solver, threads)(theta, nullptr);
}

Eigen::VectorXd standard_errors(const Objective& f, const Eigen::VectorXd& theta) {
  const Eigen::MatrixXd H = numeric_hessian(f, theta);
  if (!H.allFinite()) return {};
  Eigen::LLT<Eigen::MatrixXd> llt(-H);
  if (llt.info() != Eigen::Success) return {};
  const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(H.rows(), H.cols()));
  return cov.diagonal().cwiseSqrt();
}

void write_json_atomic(const nlohmann::json& j, const std::string& path) {
  const std::filesystem::path target(path);
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out) throw InputError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, target);
}

}  // namespace rrc
