#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "rrc/mle.hpp"
#include "rrc/network.hpp"

namespace rrc {

/// Planar grid of rows x cols nodes named "n<row>_<col>" at (col, row) *
/// spacing, with links east, north and (optionally) north-east. Without
/// `bidirectional` the network is acyclic, and without diagonals every path
/// between two links has the same number of links. Link attributes:
/// travel_time (length times a U[1 - jitter, 1 + jitter] factor) and
/// link_constant (1). Turn attributes come from the coordinates.
struct GridOptions {
  std::size_t rows = 7;
  std::size_t cols = 8;
  double spacing = 1.0;
  bool diagonals = false;
  bool bidirectional = false;
  double jitter = 0.2;
  std::uint64_t seed = 1;
};

Network make_grid_network(const GridOptions& opts);

struct ExperimentConfig {
  /// Network file; empty generates the default grid.
  std::string network;
  ModelKind model = ModelKind::RL;
  std::vector<std::string> utility_features{"travel_time", "left_turn"};
  std::vector<std::string> scale_features;
  std::vector<Algorithm> algorithms{Algorithm::DC, Algorithm::EM, Algorithm::NFXP_I};
  std::vector<double> p_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t seeds = 10;
  std::size_t n_trips = 2000;
  std::size_t min_links = 5;
  /// True parameters [theta; omega] used for simulation.
  std::vector<double> theta_true{-2.0, -0.8};
  std::vector<std::string> destinations{"n6_7", "n6_6", "n5_7"};
  std::uint64_t simulation_seed = 2024;
  /// Dataset k (in p-major order) is corrupted with base_seed + k.
  std::uint64_t base_seed = 1000;
  double tol = 1e-6;
  std::size_t samples = 5;
  double em_tol = 1e-4;
  int em_max_iter = 100;
  std::string out_dir = "sweep_out";
  /// Cells run concurrently.
  int workers = 1;
  /// Threads inside each estimation.
  int threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
};

struct ResultRow {
  std::string model;
  double p = 0.0;
  std::string algorithm;
  std::size_t runs = 0;
  double ll_mean = 0.0;
  double ll_stderr = 0.0;
  double iter_time_mean = 0.0;
  double iter_time_stderr = 0.0;
  double total_time_mean = 0.0;
  double total_time_stderr = 0.0;
  double theta_err_mean = 0.0;
};

struct SweepSummary {
  std::size_t cells_run = 0;
  std::size_t cells_skipped = 0;
  std::size_t cells_failed = 0;
  std::vector<ResultRow> rows;
};

/// Path of the per-run JSON of one cell.
std::filesystem::path run_file(const std::filesystem::path& out_dir, ModelKind model, double p, std::size_t seed,
                               Algorithm algo);

/// Simulates complete trips, fits NFXP-C on them (the p = 0 reference), then
/// for every (p, seed) corrupts and fits each algorithm, evaluating the
/// complete-data log-likelihood at the estimate. Per-run JSON files are
/// written atomically and existing ones are not recomputed. Writes
/// results.csv and plot.csv from the run files.
SweepSummary run_sweep(const ExperimentConfig& config, std::ostream* log = nullptr);

/// Mean / standard error per (model, p, algorithm), recomputed from the run
/// files in `out_dir`. The p = 0 reference is reported once per algorithm.
std::vector<ResultRow> aggregate_runs(const std::filesystem::path& out_dir, const std::vector<Algorithm>& algorithms);

void write_results_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
/// Long format: quantity (ll, per_iteration_time, total_time), model,
/// algorithm, p, mean, stderr.
void write_plot_csv(const std::vector<ResultRow>& rows, const std::filesystem::path& path);

}  // namespace rrc
