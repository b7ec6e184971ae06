#include "rrc/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <random>
#include <tuple>

#include "rrc/observations.hpp"

namespace rrc {

Network make_grid_network(const GridOptions& opts) {
  if (opts.rows < 2 || opts.cols < 2) throw InputError("grid needs at least 2 x 2 nodes");
  if (!(opts.jitter >= 0.0 && opts.jitter < 1.0)) throw InputError("grid jitter must lie in [0, 1)");
  NetworkBuilder b({"travel_time", "link_constant"});
  auto name = [](std::size_t r, std::size_t c) { return "n" + std::to_string(r) + "_" + std::to_string(c); };
  for (std::size_t r = 0; r < opts.rows; ++r)
    for (std::size_t c = 0; c < opts.cols; ++c)
      b.add_node(name(r, c), Point{static_cast<double>(c) * opts.spacing, static_cast<double>(r) * opts.spacing});

  std::mt19937_64 rng(stream_seed(opts.seed, 0x6772u));
  auto add = [&](const std::string& prefix, std::size_t r0, std::size_t c0, std::size_t r1, std::size_t c1) {
    const double len = opts.spacing * std::hypot(static_cast<double>(r1) - static_cast<double>(r0),
                                                 static_cast<double>(c1) - static_cast<double>(c0));
    const double tt = len * (1.0 + opts.jitter * (2.0 * uniform01(rng) - 1.0));
    b.add_link(prefix + std::to_string(r0) + "_" + std::to_string(c0), name(r0, c0), name(r1, c1), {tt, 1.0});
  };
  for (std::size_t r = 0; r < opts.rows; ++r)
    for (std::size_t c = 0; c < opts.cols; ++c) {
      if (c + 1 < opts.cols) add("e", r, c, r, c + 1);
      if (r + 1 < opts.rows) add("n", r, c, r + 1, c);
      if (opts.diagonals && r + 1 < opts.rows && c + 1 < opts.cols) add("ne", r, c, r + 1, c + 1);
      if (opts.bidirectional) {
        if (c > 0) add("w", r, c, r, c - 1);
        if (r > 0) add("s", r, c, r - 1, c);
        if (opts.diagonals && r > 0 && c > 0) add("sw", r, c, r - 1, c - 1);
      }
    }
  return std::move(b).build();
}

void ExperimentConfig::validate() const {
  if (p_grid.empty()) throw InputError("p_grid is empty");
  for (double p : p_grid)
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("p_grid values must lie in [0, 1]");
  if (seeds < 1) throw InputError("seeds must be at least 1");
  if (n_trips < 1) throw InputError("n_trips must be at least 1");
  if (algorithms.empty()) throw InputError("no algorithms selected");
  if (destinations.empty()) throw InputError("no destinations");
  if (samples < 1) throw InputError("samples must be at least 1");
  if (workers < 1 || threads < 1) throw InputError("workers and threads must be at least 1");
  if (out_dir.empty()) throw InputError("output directory is empty");
  if (!utility_features.empty() && theta_true.size() != utility_features.size() + scale_features.size())
    throw InputError("theta_true has " + std::to_string(theta_true.size()) + " values for " +
                     std::to_string(utility_features.size() + scale_features.size()) + " parameters");
}

nlohmann::json ExperimentConfig::to_json() const {
  std::vector<std::string> algos;
  for (auto a : algorithms) algos.push_back(rrc::to_string(a));
  return {{"network", network.empty() ? std::string("<generated grid>") : network},
          {"model", rrc::to_string(model)},
          {"utility_features", utility_features},
          {"scale_features", scale_features},
          {"algorithms", algos},
          {"p_grid", p_grid},
          {"seeds", seeds},
          {"n_trips", n_trips},
          {"min_links", min_links},
          {"theta_true", theta_true},
          {"destinations", destinations},
          {"simulation_seed", simulation_seed},
          {"base_seed", base_seed},
          {"tol", tol},
          {"samples", samples},
          {"em_tol", em_tol},
          {"em_max_iter", em_max_iter},
          {"out_dir", out_dir},
          {"workers", workers},
          {"threads", threads}};
}

namespace {

std::string p_tag(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", p);
  return buf;
}

double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

double stderr_of(const std::vector<double>& x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()));
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace

std::filesystem::path run_file(const std::filesystem::path& out_dir, ModelKind model, double p, std::size_t seed,
                               Algorithm algo) {
  return out_dir / "runs" /
         (to_string(model) + "_p" + p_tag(p) + "_s" + std::to_string(seed) + "_" + to_string(algo) + ".json");
}

SweepSummary run_sweep(const ExperimentConfig& config, std::ostream* log) {
  config.validate();
  namespace fs = std::filesystem;
  const fs::path out(config.out_dir);
  fs::create_directories(out / "runs");
  write_json_atomic(config.to_json(), (out / "config.json").string());
  std::mutex log_mutex;
  auto say = [&](const std::string& msg) {
    if (!log) return;
    std::lock_guard<std::mutex> lock(log_mutex);
    *log << msg << std::endl;
  };

  std::shared_ptr<const Network> net;
  if (config.network.empty()) {
    net = std::make_shared<const Network>(make_grid_network({}));
    if (!fs::exists(out / "network.csv")) write_network(*net, out / "network.csv", out / "network.nodes.csv");
  } else {
    net = std::make_shared<const Network>(load_network(fs::path(config.network)));
  }
  const UtilityModel model(net, ModelSpec{config.model, config.utility_features, config.scale_features, 1.0});
  if (config.theta_true.size() != model.num_params())
    throw InputError("theta_true has " + std::to_string(config.theta_true.size()) + " entries, the model has " +
                     std::to_string(model.num_params()) + " parameters");
  const Eigen::VectorXd theta_true =
      Eigen::Map<const Eigen::VectorXd>(config.theta_true.data(), static_cast<Eigen::Index>(config.theta_true.size()));

  const fs::path complete_path = out / "trips_complete.csv";
  std::vector<Trip> complete;
  if (fs::exists(complete_path)) {
    complete = load_trips(*net, complete_path);
  } else {
    SimulationOptions sim;
    sim.num_trips = config.n_trips;
    sim.seed = config.simulation_seed;
    sim.min_links = config.min_links;
    for (const auto& d : config.destinations) sim.destinations.push_back(net->node_index(d));
    complete = simulate_trips(model, ParamVector::from_flat(model, theta_true), sim, {}, config.threads);
    write_trips(*net, complete, complete_path);
  }
  const ObservationSet complete_obs(net, complete);

  EstimateOptions base;
  base.lbfgs.grad_tol = config.tol;
  base.em.sampling.samples = config.samples;
  base.em.tol = config.em_tol;
  base.em.max_iter = config.em_max_iter;
  base.threads = config.threads;

  SweepSummary summary;
  std::mutex summary_mutex;
  auto run_cell = [&](const ObservationSet& obs, double p, std::size_t seed, std::uint64_t corruption_seed,
                      Algorithm algo) {
    const fs::path file = run_file(out, config.model, p, seed, algo);
    if (fs::exists(file)) {
      std::lock_guard<std::mutex> lock(summary_mutex);
      ++summary.cells_skipped;
      return;
    }
    nlohmann::json j{{"model", to_string(config.model)},
                     {"p", p},
                     {"seed_index", seed},
                     {"corruption_seed", corruption_seed},
                     {"algorithm", to_string(algo)}};
    bool failed = false;
    try {
      EstimateOptions opts = base;
      opts.algorithm = algo;
      opts.em.seed = stream_seed(corruption_seed, 0x656du);
      const EstimationResult r = estimate(obs, model, opts);
      const double ll = evaluate_complete_ll(complete_obs, model, r.theta, opts.solver, config.threads);
      j["complete_ll"] = std::isfinite(ll) ? nlohmann::json(ll) : nlohmann::json(nullptr);
      j["theta_err"] = (r.theta - theta_true).norm();
      j["result"] = to_json(r);
      say("p=" + p_tag(p) + " seed=" + std::to_string(seed) + " " + to_string(algo) + ": ll=" + std::to_string(ll) +
          " iters=" + std::to_string(r.iterations) + " time=" + std::to_string(r.total_seconds) + "s");
    } catch (const std::exception& e) {
      failed = true;
      j["error"] = e.what();
      say("p=" + p_tag(p) + " seed=" + std::to_string(seed) + " " + to_string(algo) + " failed: " + e.what());
    }
    write_json_atomic(j, file.string());
    std::lock_guard<std::mutex> lock(summary_mutex);
    ++summary.cells_run;
    if (failed) ++summary.cells_failed;
  };

  run_cell(complete_obs, 0.0, 0, 0, Algorithm::NFXP_C);

  struct Dataset {
    double p;
    std::size_t seed;
    std::uint64_t corruption_seed;
  };
  std::vector<Dataset> datasets;
  for (std::size_t pi = 0; pi < config.p_grid.size(); ++pi) {
    if (config.p_grid[pi] == 0.0) continue;
    for (std::size_t s = 0; s < config.seeds; ++s)
      datasets.push_back({config.p_grid[pi], s, config.base_seed + pi * config.seeds + s});
  }
  parallel_for(datasets.size(), config.workers, [&](std::size_t i) {
    const Dataset& ds = datasets[i];
    bool pending = false;
    for (Algorithm a : config.algorithms) pending = pending || !fs::exists(run_file(out, config.model, ds.p, ds.seed, a));
    if (!pending) {
      std::lock_guard<std::mutex> lock(summary_mutex);
      summary.cells_skipped += config.algorithms.size();
      return;
    }
    const CorruptionResult corrupted = corrupt_trips(complete, ds.p, ds.corruption_seed);
    const ObservationSet obs(net, corrupted.trips);
    for (Algorithm a : config.algorithms) {
      if (a == Algorithm::NFXP_C && !obs.is_complete()) continue;
      run_cell(obs, ds.p, ds.seed, ds.corruption_seed, a);
    }
  });

  summary.rows = aggregate_runs(out, config.algorithms);
  write_results_csv(summary.rows, out / "results.csv");
  write_plot_csv(summary.rows, out / "plot.csv");
  return summary;
}

std::vector<ResultRow> aggregate_runs(const std::filesystem::path& out_dir, const std::vector<Algorithm>& algorithms) {
  namespace fs = std::filesystem;
  struct Acc {
    std::vector<double> ll, iter_time, total_time, theta_err;
  };
  std::map<std::tuple<std::string, double, std::string>, Acc> cells;
  std::map<std::string, Acc> reference;
  if (!fs::exists(out_dir / "runs")) return {};
  for (const auto& entry : fs::directory_iterator(out_dir / "runs")) {
    if (entry.path().extension() != ".json") continue;
    const nlohmann::json j = read_json(entry.path());
    if (j.contains("error") || !j.contains("result") || j["complete_ll"].is_null()) continue;
    const std::string model = j.at("model");
    const double p = j.at("p");
    const std::string algo = j.at("algorithm");
    Acc& acc = (p == 0.0 && algo == "nfxp-c") ? reference[model] : cells[{model, p, algo}];
    acc.ll.push_back(j.at("complete_ll").get<double>());
    acc.iter_time.push_back(j.at("result").at("per_iteration_seconds").get<double>());
    acc.total_time.push_back(j.at("result").at("total_seconds").get<double>());
    acc.theta_err.push_back(j.at("theta_err").get<double>());
  }

  auto make_row = [](const std::string& model, double p, const std::string& algo, const Acc& acc) {
    ResultRow r;
    r.model = model;
    r.p = p;
    r.algorithm = algo;
    r.runs = acc.ll.size();
    r.ll_mean = mean_of(acc.ll);
    r.ll_stderr = stderr_of(acc.ll);
    r.iter_time_mean = mean_of(acc.iter_time);
    r.iter_time_stderr = stderr_of(acc.iter_time);
    r.total_time_mean = mean_of(acc.total_time);
    r.total_time_stderr = stderr_of(acc.total_time);
    r.theta_err_mean = mean_of(acc.theta_err);
    return r;
  };

  std::vector<ResultRow> rows;
  for (const auto& [model, acc] : reference)
    for (Algorithm a : algorithms) rows.push_back(make_row(model, 0.0, to_string(a), acc));
  for (const auto& [key, acc] : cells) {
    const auto& [model, p, algo] = key;
    rows.push_back(make_row(model, p, algo, acc));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.model, a.p) < std::tie(b.model, b.p);
  });
  return rows;
}

void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out.precision(10);
  out << "model,p,algorithm,runs,ll_mean,ll_stderr,iter_time_mean,iter_time_stderr,total_time_mean,"
         "total_time_stderr,theta_err_mean\n";
  for (const auto& r : rows)
    out << r.model << ',' << p_tag(r.p) << ',' << r.algorithm << ',' << r.runs << ',' << r.ll_mean << ','
        << r.ll_stderr << ',' << r.iter_time_mean << ',' << r.iter_time_stderr << ',' << r.total_time_mean << ','
        << r.total_time_stderr << ',' << r.theta_err_mean << '\n';
}

void write_plot_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out.precision(10);
  out << "quantity,model,algorithm,p,mean,stderr\n";
  for (const auto& r : rows) {
    out << "ll," << r.model << ',' << r.algorithm << ',' << p_tag(r.p) << ',' << r.ll_mean << ',' << r.ll_stderr << '\n';
    out << "per_iteration_time," << r.model << ',' << r.algorithm << ',' << p_tag(r.p) << ',' << r.iter_time_mean << ','
        << r.iter_time_stderr << '\n';
    out << "total_time," << r.model << ',' << r.algorithm << ',' << p_tag(r.p) << ',' << r.total_time_mean << ','
        << r.total_time_stderr << '\n';
  }
}

}  // namespace rrc
