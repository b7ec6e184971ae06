#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rrc/choice_model.hpp"
#include "rrc/network.hpp"

namespace rrc::test {

// Diamond: 0: s->o, 1: o->m1, 2: o->m2, 3: m1->t, 4: m2->t. Link 0 plays the
// origin; its successors 1 and 2 are the two branches.
inline std::shared_ptr<const Network> diamond(double tt1 = 1.0, double tt2 = 1.0, double tt3 = 1.0,
                                              double tt4 = 1.0) {
  NetworkBuilder b({"travel_time"});
  for (const char* n : {"s", "o", "m1", "m2", "t"}) b.add_node(n);
  b.add_link("0", "s", "o", {1.0});
  b.add_link("1", "o", "m1", {tt1});
  b.add_link("2", "o", "m2", {tt2});
  b.add_link("3", "m1", "t", {tt3});
  b.add_link("4", "m2", "t", {tt4});
  return std::make_shared<const Network>(std::move(b).build());
}

inline UtilityModel tt_model(std::shared_ptr<const Network> net, ModelKind kind = ModelKind::RL,
                             std::vector<std::string> scale = {}) {
  ModelSpec spec;
  spec.kind = kind;
  spec.utility_features = {"travel_time"};
  spec.scale_features = std::move(scale);
  return UtilityModel(std::move(net), spec);
}

inline ParamVector params_of(const UtilityModel& model, std::vector<double> flat) {
  return ParamVector::from_flat(model, Eigen::Map<const Eigen::VectorXd>(flat.data(), flat.size()));
}

struct RandomNet {
  std::shared_ptr<const Network> net;
  NodeId dest = 0;
};

// Random network on `nodes` nodes with two positive link attributes. Links
// only go from lower to higher node index, so the result is acyclic; a chain
// 0 -> 1 -> ... -> nodes-1 guarantees the last node is reachable. With
// `cyclic`, one backward link is added.
inline RandomNet random_network(std::mt19937_64& rng, std::size_t nodes, std::size_t max_links, bool cyclic = false) {
  std::uniform_real_distribution<double> attr(0.2, 2.0);
  NetworkBuilder b({"travel_time", "cost"});
  for (std::size_t i = 0; i < nodes; ++i) b.add_node("n" + std::to_string(i));
  std::vector<std::pair<std::size_t, std::size_t>> arcs;
  for (std::size_t i = 0; i + 1 < nodes; ++i) arcs.emplace_back(i, i + 1);
  std::vector<std::pair<std::size_t, std::size_t>> extra;
  for (std::size_t i = 0; i < nodes; ++i)
    for (std::size_t j = i + 2; j < nodes; ++j) extra.emplace_back(i, j);
  std::shuffle(extra.begin(), extra.end(), rng);
  const std::size_t budget = max_links - (cyclic ? 1 : 0);
  for (const auto& a : extra) {
    if (arcs.size() >= budget) break;
    arcs.push_back(a);
  }
  if (cyclic) arcs.emplace_back(nodes - 2, 1);
  for (std::size_t i = 0; i < arcs.size(); ++i)
    b.add_link("l" + std::to_string(i), "n" + std::to_string(arcs[i].first), "n" + std::to_string(arcs[i].second),
               {attr(rng), attr(rng)});
  RandomNet out;
  out.net = std::make_shared<const Network>(std::move(b).build());
  out.dest = nodes - 1;
  return out;
}

inline UtilityModel two_feature_model(std::shared_ptr<const Network> net) {
  ModelSpec spec;
  spec.utility_features = {"travel_time", "cost"};
  return UtilityModel(std::move(net), spec);
}

/// Central differences of a vector-valued function, one column per parameter.
template <typename F>
Eigen::MatrixXd fd_jacobian(F&& f, const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::MatrixXd J;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const Eigen::VectorXd d = (f(xp) - f(xm)) / (2 * h);
    if (J.size() == 0) J.resize(d.size(), x.size());
    J.col(i) = d;
  }
  return J;
}

template <typename F>
Eigen::VectorXd fd_gradient(F&& f, const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2 * h);
  }
  return g;
}

/// max |a - b| relative to the larger of the two magnitudes.
inline double rel_err(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric) {
  const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-8});
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rrc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace rrc::test
