// rrc: command-line front end for simulation, corruption, estimation and
// experiment sweeps of recursive logit route-choice models.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rrc/choice_model.hpp"
#include "rrc/experiment.hpp"
#include "rrc/mle.hpp"
#include "rrc/network.hpp"
#include "rrc/observations.hpp"

namespace fs = std::filesystem;
using namespace rrc;

namespace {

constexpr int kExitComputation = 1;
constexpr int kExitUsage = 2;

// Turns a flat `key = value` file into `--key=value` arguments. They are
// placed before the real command-line flags, so flags given explicitly win.
std::vector<std::string> config_arguments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config file " + path);
  std::vector<std::string> args;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError(path + ":" + std::to_string(lineno) + ": expected key = value");
    auto strip = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r\"");
      const auto b = s.find_last_not_of(" \t\r\"");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    args.push_back("--" + strip(line.substr(0, eq)) + "=" + strip(line.substr(eq + 1)));
  }
  return args;
}

std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config = args[i].substr(9);
  }
  if (config.empty() || args.empty()) return args;
  auto extra = config_arguments(config);
  // args[0] is the subcommand.
  args.insert(args.begin() + 1, extra.begin(), extra.end());
  return args;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::string item;
  for (char c : text + ",") {
    if (c == ',' || c == ' ') {
      if (!item.empty()) {
        try {
          std::size_t used = 0;
          out.push_back(std::stod(item, &used));
          if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
          throw InputError("not a number: '" + item + "'");
        }
        item.clear();
      }
    } else {
      item += c;
    }
  }
  return out;
}

std::shared_ptr<const Network> open_network(const std::string& path) {
  return std::make_shared<const Network>(load_network(fs::path(path)));
}

ModelSpec make_spec(const std::string& model, const std::vector<std::string>& features,
                    const std::vector<std::string>& scale_features) {
  ModelSpec spec;
  spec.kind = parse_model_kind(model);
  spec.utility_features = features;
  spec.scale_features = scale_features;
  return spec;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Route-choice estimation with missing link observations"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_file;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_file, "Flat key = value file with defaults for this command's flags");
  };

  // generate-network
  auto* gen = app.add_subcommand("generate-network", "Write a synthetic grid network");
  GridOptions grid;
  std::string gen_out = "grid.csv";
  gen->add_option("--out", gen_out, "Link file; node coordinates go to <stem>.nodes.csv")->capture_default_str();
  gen->add_option("--rows", grid.rows, "Node rows")->capture_default_str();
  gen->add_option("--cols", grid.cols, "Node columns")->capture_default_str();
  gen->add_option("--spacing", grid.spacing, "Node spacing")->capture_default_str();
  gen->add_option("--jitter", grid.jitter, "Relative travel-time noise")->capture_default_str();
  gen->add_option("--seed", grid.seed, "Travel-time noise seed")->capture_default_str();
  gen->add_flag("--bidirectional", grid.bidirectional, "Add reverse links (the network becomes cyclic)");
  gen->add_flag("--diagonals", grid.diagonals, "Add north-east links (paths between two links then differ in length)");
  add_config(gen);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate complete trips from known parameters");
  std::string sim_network, sim_model = "rl", sim_theta, sim_out = "trips.csv";
  std::vector<std::string> sim_features, sim_scale_features, sim_dests;
  SimulationOptions sim_opts;
  int sim_threads = 1;
  sim->add_option("--network", sim_network, "Link file")->required();
  sim->add_option("--model", sim_model, "rl or nrl")->capture_default_str();
  sim->add_option("--theta", sim_theta, "Comma-separated parameters [theta; omega]")->required();
  sim->add_option("--features", sim_features, "Utility features (default: all attributes)")->delimiter(',');
  sim->add_option("--scale-features", sim_scale_features, "NRL scale attributes")->delimiter(',');
  sim->add_option("--destinations", sim_dests, "Destination node ids")->required()->delimiter(',');
  sim->add_option("--n", sim_opts.num_trips, "Number of trips")->capture_default_str();
  sim->add_option("--seed", sim_opts.seed, "Seed")->capture_default_str();
  sim->add_option("--min-links", sim_opts.min_links, "Minimum trip length in links")->capture_default_str();
  sim->add_option("--out", sim_out, "Trips CSV")->capture_default_str();
  sim->add_option("--threads", sim_threads, "Worker threads")->capture_default_str();
  add_config(sim);

  // corrupt
  auto* cor = app.add_subcommand("corrupt", "Remove interior links of trips at random");
  std::string cor_network, cor_trips, cor_out = "trips_corrupted.csv", cor_manifest;
  double cor_p = 0.5;
  std::uint64_t cor_seed = 1;
  cor->add_option("--network", cor_network, "Link file")->required();
  cor->add_option("--trips", cor_trips, "Complete trips CSV")->required();
  cor->add_option("--p", cor_p, "Removal probability per link after the first")->capture_default_str();
  cor->add_option("--seed", cor_seed, "Seed")->capture_default_str();
  cor->add_option("--out", cor_out, "Corrupted trips CSV")->capture_default_str();
  cor->add_option("--manifest", cor_manifest, "Removed-position manifest (default: <out>.manifest.json)");
  add_config(cor);

  // estimate
  auto* est = app.add_subcommand("estimate", "Estimate model parameters");
  std::string est_network, est_trips, est_out = "result.json", est_model = "rl", est_algo = "dc";
  std::vector<std::string> est_features, est_scale_features;
  EstimateOptions est_opts;
  bool est_se = false;
  est->add_option("--network", est_network, "Link file")->required();
  est->add_option("--trips", est_trips, "Trips CSV")->required();
  est->add_option("--out", est_out, "Result JSON")->capture_default_str();
  est->add_option("--model", est_model, "rl or nrl")->capture_default_str();
  est->add_option("--algo", est_algo, "dc, em, nfxp-i or nfxp-c")->capture_default_str();
  est->add_option("--features", est_features, "Utility features (default: all attributes)")->delimiter(',');
  est->add_option("--scale-features", est_scale_features, "NRL scale attributes")->delimiter(',');
  est->add_option("--tol", est_opts.lbfgs.grad_tol, "Gradient tolerance (max norm)")->capture_default_str();
  est->add_option("--max-iter", est_opts.lbfgs.max_iter, "Optimizer iteration cap")->capture_default_str();
  est->add_option("--samples", est_opts.em.sampling.samples, "EM paths per unconnected pair")->capture_default_str();
  est->add_option("--em-tol", est_opts.em.tol, "EM stopping threshold on the parameter step")->capture_default_str();
  est->add_option("--em-max-iter", est_opts.em.max_iter, "EM iteration cap")->capture_default_str();
  est->add_option("--seed", est_opts.em.seed, "EM sampling seed")->capture_default_str();
  est->add_flag("--exact-e", est_opts.em.exact_e, "EM: enumerate all gap paths instead of sampling");
  est->add_option("--nrl-damping", est_opts.solver.nrl_damping, "NRL value-iteration damping")->capture_default_str();
  est->add_option("--threads", est_opts.threads, "Worker threads")->capture_default_str();
  est->add_flag("--std-errors", est_se, "Report standard errors from a numeric Hessian");
  add_config(est);

  // evaluate
  auto* evl = app.add_subcommand("evaluate", "Log-likelihood of complete trips at estimated parameters");
  std::string evl_params, evl_trips, evl_network;
  int evl_threads = 1;
  evl->add_option("--params", evl_params, "Result JSON from estimate")->required();
  evl->add_option("--trips", evl_trips, "Complete trips CSV")->required();
  evl->add_option("--network", evl_network, "Link file (default: the one recorded in the result)");
  evl->add_option("--threads", evl_threads, "Worker threads")->capture_default_str();
  add_config(evl);

  // sweep
  auto* swp = app.add_subcommand("sweep", "Run the simulate / corrupt / estimate / evaluate protocol");
  ExperimentConfig cfg;
  std::string swp_model = "rl", swp_p_grid, swp_theta;
  std::vector<std::string> swp_algos;
  swp->add_option("--out-dir", cfg.out_dir, "Output directory")->capture_default_str();
  swp->add_option("--network", cfg.network, "Link file (default: generated grid)");
  swp->add_option("--model", swp_model, "rl or nrl")->capture_default_str();
  swp->add_option("--algos", swp_algos, "Algorithms (default: dc,em,nfxp-i)")->delimiter(',');
  swp->add_option("--p-grid", swp_p_grid, "Comma-separated removal probabilities (default: 0.1..0.9)");
  swp->add_option("--seeds", cfg.seeds, "Corrupted datasets per p")->capture_default_str();
  swp->add_option("--n-trips", cfg.n_trips, "Simulated trips")->capture_default_str();
  swp->add_option("--min-links", cfg.min_links, "Minimum simulated trip length")->capture_default_str();
  swp->add_option("--theta", swp_theta, "True parameters (default: -2,-0.8)");
  swp->add_option("--features", cfg.utility_features, "Utility features")->delimiter(',');
  swp->add_option("--scale-features", cfg.scale_features, "NRL scale attributes")->delimiter(',');
  swp->add_option("--destinations", cfg.destinations, "Destination node ids")->delimiter(',');
  swp->add_option("--sim-seed", cfg.simulation_seed, "Simulation seed")->capture_default_str();
  swp->add_option("--base-seed", cfg.base_seed, "First corruption seed")->capture_default_str();
  swp->add_option("--tol", cfg.tol, "Gradient tolerance")->capture_default_str();
  swp->add_option("--samples", cfg.samples, "EM paths per unconnected pair")->capture_default_str();
  swp->add_option("--em-tol", cfg.em_tol, "EM stopping threshold")->capture_default_str();
  swp->add_option("--em-max-iter", cfg.em_max_iter, "EM iteration cap")->capture_default_str();
  swp->add_option("--workers", cfg.workers, "Concurrent cells")->capture_default_str();
  swp->add_option("--threads", cfg.threads, "Threads per estimation")->capture_default_str();
  add_config(swp);

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) {
      const Network net = make_grid_network(grid);
      const fs::path links(gen_out);
      const fs::path nodes = links.parent_path() / (links.stem().string() + ".nodes.csv");
      write_network(net, links, nodes);
      std::cout << "wrote " << net.num_links() << " links, " << net.num_nodes() << " nodes to " << links.string()
                << '\n';
    } else if (sim->parsed()) {
      const auto net = open_network(sim_network);
      const UtilityModel model(net, make_spec(sim_model, sim_features, sim_scale_features));
      const auto theta = parse_list(sim_theta);
      const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
      for (const auto& d : sim_dests) sim_opts.destinations.push_back(net->node_index(d));
      const auto trips = simulate_trips(model, ParamVector::from_flat(model, x), sim_opts, {}, sim_threads);
      write_trips(*net, trips, sim_out);
      std::cout << "wrote " << trips.size() << " trips to " << sim_out << '\n';
    } else if (cor->parsed()) {
      const auto net = open_network(cor_network);
      const auto trips = load_trips(*net, cor_trips);
      const auto result = corrupt_trips(trips, cor_p, cor_seed);
      write_trips(*net, result.trips, cor_out);
      write_corruption_manifest(result, cor_manifest.empty() ? cor_out + ".manifest.json" : cor_manifest);
      std::size_t removed = 0;
      for (const auto& r : result.removed) removed += r.size();
      std::cout << "removed " << removed << " links from " << trips.size() << " trips\n";
    } else if (est->parsed()) {
      const auto net = open_network(est_network);
      const UtilityModel model(net, make_spec(est_model, est_features, est_scale_features));
      est_opts.algorithm = parse_algorithm(est_algo);
      est_opts.standard_errors = est_se;
      const ObservationSet obs(net, load_trips(*net, est_trips));
      EstimationResult r = estimate(obs, model, est_opts);
      r.options["network"] = fs::absolute(est_network).string();
      r.options["trips"] = fs::absolute(est_trips).string();
      r.options["features"] = model.theta_names();
      r.options["scale_features"] = model.omega_names();
      write_json_atomic(to_json(r), est_out);
      std::cout << r.algorithm << " " << r.model << ": ll=" << r.ll_at_solution << " iterations=" << r.iterations
                << " converged=" << (r.converged ? "yes" : "no") << " (" << r.status << ")\n";
      if (r.status == "infeasible_start") return kExitComputation;
    } else if (evl->parsed()) {
      const EstimationResult r = estimation_result_from_json(read_json_file(evl_params));
      std::string network = evl_network;
      if (network.empty()) network = r.options.value("network", "");
      if (network.empty()) throw InputError("no network recorded in " + evl_params + "; pass --network");
      const auto net = open_network(network);
      const auto features = r.options.value("features", std::vector<std::string>{});
      const auto scale = r.options.value("scale_features", std::vector<std::string>{});
      const UtilityModel model(net, make_spec(r.model, features, scale));
      const ObservationSet obs(net, load_trips(*net, evl_trips));
      const double ll = evaluate_complete_ll(obs, model, r.theta, {}, evl_threads);
      std::printf("%.10f\n", ll);
      if (!std::isfinite(ll)) return kExitComputation;
    } else if (swp->parsed()) {
      cfg.model = parse_model_kind(swp_model);
      if (!swp_algos.empty()) {
        cfg.algorithms.clear();
        for (const auto& a : swp_algos) cfg.algorithms.push_back(parse_algorithm(a));
      }
      if (!swp_p_grid.empty()) cfg.p_grid = parse_list(swp_p_grid);
      if (!swp_theta.empty()) cfg.theta_true = parse_list(swp_theta);
      const SweepSummary s = run_sweep(cfg, &std::cerr);
      std::cout << "cells run " << s.cells_run << ", skipped " << s.cells_skipped << ", failed " << s.cells_failed
                << "; results in " << (fs::path(cfg.out_dir) / "results.csv").string() << '\n';
      if (s.cells_failed > 0) return kExitComputation;
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const TopologyError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitComputation;
  }
  return 0;
}
