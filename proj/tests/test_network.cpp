#include <doctest.h>

#include <chrono>
#include <deque>
#include <fstream>

#include "fixtures.hpp"
#include "rrc/experiment.hpp"

using namespace rrc;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST_CASE("diamond file: adjacency follows shared nodes") {
  const auto dir = test::scratch_dir("net_diamond");
  write_text(dir / "d.csv",
             "link_id,from_node,to_node,travel_time\n"
             "om1,o,m1,1\nom2,o,m2,2\nm1t,m1,t,1\nm2t,m2,t,1\n");
  const Network net = load_network(dir / "d.csv");
  CHECK(net.num_links() == 4);
  CHECK(net.num_nodes() == 4);
  const LinkId om1 = net.link_index("om1");
  const auto out = net.outgoing(om1);
  REQUIRE(out.size() == 1);
  CHECK(net.link(out[0]).id == "m1t");
  CHECK(net.outgoing(net.link_index("m2t")).empty());
  CHECK(net.link_attribute(net.link_index("om2"), 0) == 2.0);
}

TEST_CASE("load errors") {
  const auto dir = test::scratch_dir("net_errors");
  SUBCASE("unknown node") {
    write_text(dir / "a.csv", "link_id,from_node,to_node,travel_time\nl1,o,x,1\n");
    write_text(dir / "a.nodes.csv", "node_id,x,y\no,0,0\nt,1,0\n");
    CHECK_THROWS_AS(load_network(dir / "a.csv"), TopologyError);
  }
  SUBCASE("bad header") {
    write_text(dir / "b.csv", "id,from,to,tt\nl1,o,t,1\n");
    CHECK_THROWS_AS(load_network(dir / "b.csv"), ParseError);
  }
  SUBCASE("non-numeric attribute") {
    write_text(dir / "c.csv", "link_id,from_node,to_node,travel_time\nl1,o,t,abc\n");
    CHECK_THROWS_AS(load_network(dir / "c.csv"), ParseError);
  }
  SUBCASE("ragged row") {
    write_text(dir / "e.csv", "link_id,from_node,to_node,travel_time,cost\nl1,o,t,1\n");
    CHECK_THROWS_AS(load_network(dir / "e.csv"), ParseError);
  }
  SUBCASE("ragged attribute vector") {
    NetworkBuilder b({"travel_time", "cost"});
    CHECK_THROWS_AS(b.add_link("l1", "o", "t", {1.0}), DimensionError);
  }
  SUBCASE("ragged pair attributes") {
    write_text(dir / "f.csv", "link_id,from_node,to_node,travel_time\nl1,o,m,1\nl2,m,t,1\n");
    write_text(dir / "f.pairs.csv", "from_link,to_link,left_turn\nl1,l2,1\n");
    CHECK_NOTHROW(load_network(dir / "f.csv"));
    NetworkBuilder b({"travel_time"});
    b.add_link("l1", "o", "m", {1.0});
    b.add_link("l2", "m", "t", {1.0});
    b.set_pair_attribute_names({"left_turn"});
    CHECK_THROWS_AS(b.add_pair_attributes("l1", "l2", {1.0, 0.0}), DimensionError);
  }
  SUBCASE("pair of non-adjacent links") {
    write_text(dir / "g.csv", "link_id,from_node,to_node,travel_time\nl1,o,m,1\nl2,m,t,1\n");
    write_text(dir / "g.pairs.csv", "from_link,to_link,left_turn\nl2,l1,1\n");
    CHECK_THROWS_AS(load_network(dir / "g.csv"), TopologyError);
  }
}

TEST_CASE("round trip through files keeps links, attributes and turns") {
  const auto dir = test::scratch_dir("net_roundtrip");
  GridOptions g;
  g.rows = 3;
  g.cols = 4;
  g.diagonals = true;
  const Network net = make_grid_network(g);
  write_network(net, dir / "grid.csv", dir / "grid.nodes.csv");
  const Network back = load_network(dir / "grid.csv");
  REQUIRE(back.num_links() == net.num_links());
  REQUIRE(back.num_edges() == net.num_edges());
  REQUIRE(back.pair_attribute_names() == net.pair_attribute_names());
  for (LinkId k = 0; k < net.num_links(); ++k) {
    const LinkId kb = back.link_index(net.link(k).id);
    for (std::size_t i = 0; i < net.link_attribute_dim(); ++i)
      CHECK(back.link_attribute(kb, i) == doctest::Approx(net.link_attribute(k, i)).epsilon(1e-15));
    for (LinkId a : net.outgoing(k)) {
      const std::size_t e = net.find_edge(k, a);
      const std::size_t eb = back.find_edge(kb, back.link_index(net.link(a).id));
      REQUIRE(eb != kNone);
      for (std::size_t i = 0; i < net.pair_attribute_dim(); ++i)
        CHECK(back.pair_attribute(eb, i) == net.pair_attribute(e, i));
    }
  }
}

TEST_CASE("turn angles and dummies from coordinates") {
  NetworkBuilder b({"travel_time"});
  b.add_node("c", {0, 0});
  b.add_node("w", {-1, 0});
  b.add_node("n", {0, 1});
  b.add_node("s", {0, -1});
  b.add_node("e", {1, 0});
  b.add_link("in", "w", "c", {1});
  b.add_link("left", "c", "n", {1});
  b.add_link("right", "c", "s", {1});
  b.add_link("straight", "c", "e", {1});
  b.add_link("back", "c", "w", {1});
  const Network net = std::move(b).build();
  const LinkId in = net.link_index("in");
  CHECK(net.turn_angle(in, net.link_index("left")) == doctest::Approx(90));
  CHECK(net.turn_angle(in, net.link_index("right")) == doctest::Approx(-90));
  CHECK(net.turn_angle(in, net.link_index("straight")) == doctest::Approx(0));
  CHECK(std::abs(net.turn_angle(in, net.link_index("back"))) == doctest::Approx(180));
  REQUIRE(net.pair_attribute_names() == std::vector<std::string>{"left_turn", "u_turn"});
  auto dummies = [&](const char* a) {
    const std::size_t e = net.find_edge(in, net.link_index(a));
    return std::pair{net.pair_attribute(e, 0), net.pair_attribute(e, 1)};
  };
  CHECK(dummies("left") == std::pair{1.0, 0.0});
  CHECK(dummies("right") == std::pair{0.0, 0.0});
  CHECK(dummies("straight") == std::pair{0.0, 0.0});
  CHECK(dummies("back") == std::pair{0.0, 1.0});
}

TEST_CASE("destination extension") {
  const auto net = test::diamond();
  const NodeId t = net->node_index("t");
  const ExtendedNetwork ext(net, t);
  CHECK(ext.dummy() == 5);
  CHECK(ext.size() == 6);
  for (LinkId k : {LinkId{3}, LinkId{4}}) {
    REQUIRE(ext.successors(k).size() == 1);
    CHECK(ext.successors(k)[0] == ext.dummy());
  }
  CHECK(ext.successors(ext.dummy()).empty());
  CHECK(ext.num_retained() == 6);
  CHECK(ext == extend_for_destination(net, t));

  SUBCASE("isolated destination") { CHECK_THROWS_AS(ExtendedNetwork(net, net->node_index("s")), TopologyError); }
}

TEST_CASE("pruning and backward reachability") {
  NetworkBuilder b({"travel_time"});
  b.add_link("a", "o", "m", {1});
  b.add_link("b", "m", "t1", {1});
  b.add_link("c", "m", "dead", {1});
  b.add_link("e", "dead", "sink", {1});
  b.add_link("f", "m", "t2", {1});
  auto net = std::make_shared<const Network>(std::move(b).build());
  const ExtendedNetwork e1(net, net->node_index("t1"));
  const ExtendedNetwork e2(net, net->node_index("t2"));
  CHECK_FALSE(e1.retained(net->link_index("c")));
  CHECK_FALSE(e1.retained(net->link_index("e")));
  CHECK_FALSE(e1.retained(net->link_index("f")));
  CHECK(e1.retained(net->link_index("b")));
  CHECK(e2.retained(net->link_index("f")));
  CHECK_FALSE(e2.retained(net->link_index("b")));
  CHECK(&e1.base() == &e2.base());
  // Pruned links never appear as successors.
  for (std::size_t p = 0; p < e1.num_positions(); ++p) CHECK(e1.retained(e1.position_target(p)));

  // Backward search from the dummy visits exactly the retained links.
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    const auto rn = test::random_network(rng, 7, 12);
    const NodeId dest = rn.dest - 1 - static_cast<NodeId>(rep % 3);
    const ExtendedNetwork ext(rn.net, dest);
    const Network& base = *rn.net;
    std::vector<char> seen(ext.size(), 0);
    std::deque<LinkId> queue{ext.dummy()};
    seen[ext.dummy()] = 1;
    while (!queue.empty()) {
      const LinkId a = queue.front();
      queue.pop_front();
      for (LinkId k = 0; k < base.num_links(); ++k)
        if (!seen[k] && (a == ext.dummy() ? base.link(k).to == dest : base.find_edge(k, a) != kNone)) {
          seen[k] = 1;
          queue.push_back(k);
        }
    }
    for (LinkId k = 0; k < base.num_links(); ++k) CHECK(static_cast<bool>(seen[k]) == ext.retained(k));
  }
}

TEST_CASE("network of 7459 links and 3077 nodes loads and validates") {
  const auto dir = test::scratch_dir("net_large");
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> node(0, 3076);
  {
    std::ofstream out(dir / "big.csv");
    out << "link_id,from_node,to_node,travel_time,length\n";
    std::size_t id = 0;
    for (std::size_t i = 0; i < 3077; ++i) out << "L" << id++ << ",N" << i << ",N" << (i + 1) % 3077 << ",1.5,2\n";
    while (id < 7459) {
      const std::size_t a = node(rng), b = node(rng);
      if (a == b) continue;
      out << "L" << id++ << ",N" << a << ",N" << b << ",0.7,1\n";
    }
  }
  const auto t0 = std::chrono::steady_clock::now();
  auto net = std::make_shared<const Network>(load_network(dir / "big.csv"));
  CHECK(net->num_links() == 7459);
  CHECK(net->num_nodes() == 3077);
  const ExtendedNetwork ext(net, net->node_index("N17"));
  CHECK(ext.num_retained() == 7460);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 10.0);
}
