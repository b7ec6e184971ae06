#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"

using namespace rrc;
using test::params_of;

namespace {

const double e = std::exp(1.0);

struct Solved {
  std::shared_ptr<const Network> net;
  std::shared_ptr<const ExtendedNetwork> ext;
  UtilityModel model;
  ValueField vf;
};

Solved solve_diamond(std::shared_ptr<const Network> net, double beta) {
  auto ext = std::make_shared<const ExtendedNetwork>(net, net->node_index("t"));
  UtilityModel model = test::tt_model(net);
  ValueField vf = solve_value(*ext, model, params_of(model, {beta}), {});
  return {net, ext, model, std::move(vf)};
}

// Two-feature NRL model whose scale depends on the link's cost attribute and
// its number of outgoing links.
UtilityModel nrl_model(std::shared_ptr<const Network> net) {
  ModelSpec spec;
  spec.kind = ModelKind::NRL;
  spec.utility_features = {"travel_time", "cost"};
  spec.scale_features = {"cost", kOutgoingLinksAttribute};
  return UtilityModel(std::move(net), spec);
}

}  // namespace

TEST_CASE("transition weights") {
  const auto net = test::diamond();
  const ExtendedNetwork ext(net, net->node_index("t"));
  SUBCASE("RL, all v = -1") {
    const UtilityModel model = test::tt_model(net);
    const ParamVector p = params_of(model, {-1.0});
    const auto u = compute_utilities(ext, model, p);
    const auto M = build_transition_weights(ext, u, compute_scales(ext, model, p));
    for (int k = 0; k < M.outerSize(); ++k)
      for (SparseRowMatrix::InnerIterator it(M, k); it; ++it) {
        if (static_cast<LinkId>(it.col()) == ext.dummy())
          CHECK(it.value() == doctest::Approx(1.0).epsilon(1e-15));
        else
          CHECK(it.value() == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
      }
    CHECK(M.nonZeros() == 6);
  }
  SUBCASE("NRL, mu = 2") {
    NetworkBuilder b({"travel_time", "s"});
    b.add_link("a", "o", "m", {1.0, std::log(2.0)});
    b.add_link("b", "m", "t", {1.0, std::log(2.0)});
    auto n2 = std::make_shared<const Network>(std::move(b).build());
    const ExtendedNetwork e2(n2, n2->node_index("t"));
    const UtilityModel model = test::tt_model(n2, ModelKind::NRL, {"s"});
    const ParamVector p = params_of(model, {-1.0, 1.0});
    const auto u = compute_utilities(e2, model, p);
    const auto s = compute_scales(e2, model, p);
    CHECK(s.mu_link[0] == doctest::Approx(2.0));
    CHECK(s.mu_link[e2.dummy()] == 1.0);
    const auto M = build_transition_weights(e2, u, s);
    CHECK(M.coeff(0, 1) == doctest::Approx(0.606531).epsilon(1e-6));
    CHECK(M.coeff(1, e2.dummy()) == 1.0);
  }
}

TEST_CASE("RL value function on the diamond") {
  const auto s = solve_diamond(test::diamond(), -1.0);
  const auto& Z = s.vf.Z;
  CHECK(Z[s.ext->dummy()] == 1.0);
  // v(d|k) = 0, so links entering the destination have Z = 1.
  CHECK(Z[3] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(Z[4] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(Z[1] == doctest::Approx(1 / e).epsilon(1e-14));
  CHECK(Z[2] == doctest::Approx(1 / e).epsilon(1e-14));
  CHECK(Z[0] == doctest::Approx(2 / (e * e)).epsilon(1e-14));
  CHECK(s.vf.V[s.ext->dummy()] == 0.0);
  CHECK(s.vf.V[0] == doctest::Approx(std::log(2.0) - 2.0).epsilon(1e-14));
}

TEST_CASE("RL value function with a terminal link after the merge") {
  // Same diamond, but both branches merge before a last link into t; every
  // real link has utility -1.
  NetworkBuilder b({"travel_time"});
  b.add_link("0", "s", "o", {1});
  b.add_link("1", "o", "m1", {1});
  b.add_link("2", "o", "m2", {1});
  b.add_link("3", "m1", "p", {1});
  b.add_link("4", "m2", "p", {1});
  b.add_link("5", "p", "t", {1});
  const auto s = solve_diamond(std::make_shared<const Network>(std::move(b).build()), -1.0);
  const auto& Z = s.vf.Z;
  CHECK(Z[5] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(Z[3] == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(Z[4] == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(Z[1] == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
  CHECK(Z[2] == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
  CHECK(Z[0] == doctest::Approx(0.099574).epsilon(1e-5));
  CHECK(Z[0] == doctest::Approx(2 * std::exp(-3.0)).epsilon(1e-14));
}

TEST_CASE("single link into the destination") {
  NetworkBuilder b({"travel_time"});
  b.add_link("k", "o", "t", {3.0});
  auto net = std::make_shared<const Network>(std::move(b).build());
  const auto s = solve_diamond(net, -1.0);
  CHECK(s.vf.Z[0] == 1.0);
  CHECK(s.vf.V[0] == 0.0);
}

TEST_CASE("zero-utility two-cycle is infeasible") {
  NetworkBuilder b({"travel_time"});
  b.add_link("xy", "x", "y", {0});
  b.add_link("yx", "y", "x", {0});
  b.add_link("yt", "y", "t", {0});
  auto net = std::make_shared<const Network>(std::move(b).build());
  const ExtendedNetwork ext(net, net->node_index("t"));
  const UtilityModel model = test::tt_model(net);
  CHECK_THROWS_AS(solve_value(ext, model, params_of(model, {-1.0}), {}), InfeasibleParameters);
  // The same cycle with negative utilities is fine.
  NetworkBuilder b2({"travel_time"});
  b2.add_link("xy", "x", "y", {1});
  b2.add_link("yx", "y", "x", {1});
  b2.add_link("yt", "y", "t", {1});
  auto net2 = std::make_shared<const Network>(std::move(b2).build());
  const ExtendedNetwork ext2(net2, net2->node_index("t"));
  const UtilityModel model2 = test::tt_model(net2);
  CHECK_NOTHROW(solve_value(ext2, model2, params_of(model2, {-1.0}), {}));
}

TEST_CASE("positive utilities are rejected") {
  const auto net = test::diamond();
  const ExtendedNetwork ext(net, net->node_index("t"));
  const UtilityModel model = test::tt_model(net);
  CHECK_THROWS_AS(solve_value(ext, model, params_of(model, {0.5}), {}), InfeasibleParameters);
}

TEST_CASE("NRL with unit scales equals RL") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> th(-1.5, -0.2);
  for (int rep = 0; rep < 5; ++rep) {
    const auto rn = test::random_network(rng, 6, 12, rep % 2 == 1);
    const ExtendedNetwork ext(rn.net, rn.dest);
    const UtilityModel rl = test::two_feature_model(rn.net);
    const UtilityModel nrl = nrl_model(rn.net);
    const double t1 = th(rng), t2 = th(rng);
    const ValueField a = solve_value(ext, rl, params_of(rl, {t1, t2}), {});
    const ValueField b = solve_value(ext, nrl, params_of(nrl, {t1, t2, 0.0, 0.0}), {});
    CHECK((a.Z - b.Z).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("NRL diamond with mu = 2 on link 1") {
  NetworkBuilder b({"travel_time", "s"});
  b.add_link("0", "s", "o", {1, 0});
  b.add_link("1", "o", "m1", {1, std::log(2.0)});
  b.add_link("2", "o", "m2", {1, 0});
  b.add_link("3", "m1", "t", {1, 0});
  b.add_link("4", "m2", "t", {1, 0});
  auto net = std::make_shared<const Network>(std::move(b).build());
  const ExtendedNetwork ext(net, net->node_index("t"));
  const UtilityModel model = test::tt_model(net, ModelKind::NRL, {"s"});
  const ParamVector p = params_of(model, {-1.0, 1.0});
  const ValueField vf = solve_value(ext, model, p, {});
  // Back-substitution with phi_ka = mu_a / mu_k:
  // Z3 = Z4 = 1, Z1 = e^{-1/2} Z3^{1/2}, Z2 = e^{-1}, Z0 = e^{-1} Z1^2 + e^{-1} Z2.
  CHECK(vf.Z[3] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(vf.Z[4] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(vf.Z[1] == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(vf.Z[2] == doctest::Approx(1 / e).epsilon(1e-12));
  CHECK(vf.Z[0] == doctest::Approx(2 / (e * e)).epsilon(1e-12));

  const auto u = compute_utilities(ext, model, p);
  const auto sc = compute_scales(ext, model, p);
  const auto M = build_transition_weights(ext, u, sc);
  NrlIterationTrace trace;
  solve_value_nrl(ext, M, sc, {}, &trace);
  REQUIRE_FALSE(trace.min_increment.empty());
  for (double inc : trace.min_increment) CHECK(inc >= -1e-15);
  CHECK(trace.residual <= 1e-10);
}

TEST_CASE("NRL value iteration rises monotonically on acyclic networks") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> th(-1.5, -0.3), om(-0.4, 0.4);
  for (int rep = 0; rep < 10; ++rep) {
    const auto rn = test::random_network(rng, 7, 12);
    const ExtendedNetwork ext(rn.net, rn.dest);
    const UtilityModel model = nrl_model(rn.net);
    const ParamVector p = params_of(model, {th(rng), th(rng), om(rng), om(rng)});
    const auto sc = compute_scales(ext, model, p);
    const auto M = build_transition_weights(ext, compute_utilities(ext, model, p), sc);
    NrlIterationTrace trace;
    solve_value_nrl(ext, M, sc, {}, &trace);
    for (double inc : trace.min_increment) CHECK(inc >= -1e-14);
  }
}

TEST_CASE("link choice probabilities") {
  SUBCASE("symmetric diamond") {
    const auto s = solve_diamond(test::diamond(), -1.0);
    CHECK(link_choice_prob(*s.ext, s.vf, 0, 1) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(link_choice_prob(*s.ext, s.vf, 0, 2) == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("asymmetric diamond") {
    const auto s = solve_diamond(test::diamond(1.0, 2.0), -1.0);
    CHECK(link_choice_prob(*s.ext, s.vf, 0, 1) == doctest::Approx(1 / (1 + std::exp(-1.0))).epsilon(1e-14));
    CHECK(link_choice_prob(*s.ext, s.vf, 0, 1) == doctest::Approx(0.731059).epsilon(1e-6));
  }
  SUBCASE("single successor") {
    Solved s = solve_diamond(test::diamond(1.0, 2.0), -1.3);
    value_jacobian(s.vf, *s.ext, s.model);
    CHECK(link_choice_prob(*s.ext, s.vf, 1, 3) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(link_choice_prob(*s.ext, s.vf, 3, s.ext->dummy()) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(link_prob_gradient(*s.ext, s.vf, s.model, 1, 3).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SUBCASE("invalid queries") {
    const auto s = solve_diamond(test::diamond(), -1.0);
    CHECK_THROWS_AS(link_choice_prob(*s.ext, s.vf, 0, 3), InputError);
  }
}

TEST_CASE("probabilities sum to one and path probabilities telescope") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> th(-1.5, -0.2);
  for (int rep = 0; rep < 10; ++rep) {
    const auto rn = test::random_network(rng, 7, 12, rep % 3 == 2);
    const ExtendedNetwork ext(rn.net, rn.dest);
    const UtilityModel model = test::two_feature_model(rn.net);
    const ParamVector p = params_of(model, {th(rng), th(rng)});
    const auto sol = solve_destination(ext, model, p, {}, true);
    for (LinkId k = 0; k < rn.net->num_links(); ++k) {
      if (!ext.retained(k)) continue;
      double sum = 0.0;
      Eigen::VectorXd gsum = Eigen::VectorXd::Zero(2);
      for (std::size_t q = ext.successor_begin(k); q < ext.successor_begin(k) + ext.successors(k).size(); ++q) {
        sum += sol.probs.prob[q];
        gsum += sol.probs.grad.row(static_cast<Eigen::Index>(q)).transpose();
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(gsum.cwiseAbs().maxCoeff() <= 1e-8);
    }
    if (rep % 3 == 2) continue;
    // Walking greedily to d: the product of P equals exp(sum v) / Z_start.
    LinkId k = 0;
    double prod = 1.0, vsum = 0.0;
    while (k != ext.dummy()) {
      const std::size_t q = ext.successor_begin(k);
      prod *= sol.probs.prob[q];
      vsum += sol.vf.utilities.v[q];
      k = ext.position_target(q);
    }
    CHECK(prod == doctest::Approx(std::exp(vsum) / sol.vf.Z[0]).epsilon(1e-12));
  }
}

TEST_CASE("value Jacobian") {
  SUBCASE("diamond dZ0/dbeta against finite differences") {
    const auto net = test::diamond(1.0, 2.0, 1.5, 0.5);
    const ExtendedNetwork ext(net, net->node_index("t"));
    const UtilityModel model = test::tt_model(net);
    ValueField vf = solve_value(ext, model, params_of(model, {-0.7}), {});
    value_jacobian(vf, ext, model);
    auto z0 = [&](const Eigen::VectorXd& x) {
      return solve_value(ext, model, ParamVector::from_flat(model, x), {}).Z[0];
    };
    const Eigen::VectorXd fd = test::fd_gradient(z0, Eigen::VectorXd::Constant(1, -0.7));
    CHECK(test::rel_err(vf.dZ.row(0), fd.transpose()) <= 1e-5);
    CHECK(vf.dZ.row(ext.dummy()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(vf.dV.row(ext.dummy()).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("features identically zero give a zero Jacobian") {
    NetworkBuilder b({"travel_time", "zero"});
    b.add_link("0", "s", "o", {1, 0});
    b.add_link("1", "o", "m1", {1, 0});
    b.add_link("2", "o", "m2", {2, 0});
    b.add_link("3", "m1", "t", {1, 0});
    b.add_link("4", "m2", "t", {1, 0});
    auto net = std::make_shared<const Network>(std::move(b).build());
    const ExtendedNetwork ext(net, net->node_index("t"));
    ModelSpec spec;
    spec.utility_features = {"travel_time", "zero"};
    const UtilityModel model(net, spec);
    ValueField vf = solve_value(ext, model, params_of(model, {-1.0, 0.3}), {});
    value_jacobian(vf, ext, model);
    CHECK(vf.dZ.col(1).cwiseAbs().maxCoeff() == 0.0);
    CHECK(vf.dZ.col(0).cwiseAbs().maxCoeff() > 0.0);
  }
  SUBCASE("random RL and NRL points") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> th(-1.5, -0.2), om(-0.4, 0.4);
    for (int rep = 0; rep < 6; ++rep) {
      const auto rn = test::random_network(rng, 7, 12);
      const ExtendedNetwork ext(rn.net, rn.dest);
      const bool nrl = rep % 2 == 1;
      const UtilityModel model = nrl ? nrl_model(rn.net) : test::two_feature_model(rn.net);
      std::vector<double> x{th(rng), th(rng)};
      if (nrl) x.insert(x.end(), {om(rng), om(rng)});
      const ParamVector p = params_of(model, x);
      ValueField vf = solve_value(ext, model, p, {});
      value_jacobian(vf, ext, model);
      auto V = [&](const Eigen::VectorXd& y) {
        Eigen::VectorXd v = solve_value(ext, model, ParamVector::from_flat(model, y), {}).V;
        return v.head(static_cast<Eigen::Index>(rn.net->num_links())).eval();
      };
      const Eigen::MatrixXd fd = test::fd_jacobian(V, p.flat());
      CHECK(test::rel_err(vf.dV.topRows(fd.rows()), fd) <= 1e-5);
    }
  }
}

TEST_CASE("link probability gradient against finite differences") {
  const auto net = test::diamond(1.0, 2.0);
  const ExtendedNetwork ext(net, net->node_index("t"));
  const UtilityModel model = test::tt_model(net);
  const auto sol = solve_destination(ext, model, params_of(model, {-1.2}), {}, true);
  auto p01 = [&](const Eigen::VectorXd& x) {
    const ValueField vf = solve_value(ext, model, ParamVector::from_flat(model, x), {});
    return link_choice_prob(ext, vf, 0, 1);
  };
  const Eigen::VectorXd fd = test::fd_gradient(p01, Eigen::VectorXd::Constant(1, -1.2));
  const Eigen::VectorXd g = link_prob_gradient(ext, sol.vf, model, 0, 1);
  CHECK(test::rel_err(g, fd) <= 1e-5);
  // Closed form: P = 1 / (1 + exp(beta)) when only tt differs by one.
  const double P = 1 / (1 + std::exp(-1.2));
  CHECK(g[0] == doctest::Approx(-P * (1 - P)).epsilon(1e-9));
}
