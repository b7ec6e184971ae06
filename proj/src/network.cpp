#include "rrc/network.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "csv.hpp"

namespace rrc {

std::optional<LinkId> Network::find_link(std::string_view id) const {
  auto it = link_lookup_.find(std::string(id));
  if (it == link_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<NodeId> Network::find_node(std::string_view id) const {
  auto it = node_lookup_.find(std::string(id));
  if (it == node_lookup_.end()) return std::nullopt;
  return it->second;
}

LinkId Network::link_index(std::string_view id) const {
  if (auto k = find_link(id)) return *k;
  throw TopologyError("unknown link '" + std::string(id) + "'");
}

NodeId Network::node_index(std::string_view id) const {
  if (auto n = find_node(id)) return *n;
  throw TopologyError("unknown node '" + std::string(id) + "'");
}

std::size_t Network::find_edge(LinkId k, LinkId a) const {
  for (std::size_t e = edge_offset_[k]; e < edge_offset_[k + 1]; ++e)
    if (edge_to_[e] == a) return e;
  return kNone;
}

double Network::turn_angle(LinkId k, LinkId a) const {
  if (coords_.empty()) throw InputError("turn_angle requires node coordinates");
  const auto heading = [&](LinkId l) {
    const Point& p = coords_[links_[l].from];
    const Point& q = coords_[links_[l].to];
    return std::atan2(q.y - p.y, q.x - p.x);
  };
  double delta = (heading(a) - heading(k)) * 180.0 / std::numbers::pi;
  while (delta <= -180.0) delta += 360.0;
  while (delta > 180.0) delta -= 360.0;
  return delta;
}

NetworkBuilder::NetworkBuilder(std::vector<std::string> link_attribute_names) {
  if (link_attribute_names.empty())
    throw DimensionError("a network needs at least one link attribute (travel_time)");
  net_.link_attr_names_ = std::move(link_attribute_names);
}

NodeId NetworkBuilder::ensure_node(std::string_view id) {
  if (auto n = net_.find_node(id)) return *n;
  const NodeId n = net_.node_ids_.size();
  net_.node_ids_.emplace_back(id);
  net_.node_lookup_.emplace(std::string(id), n);
  coords_.emplace_back(std::nullopt);
  return n;
}

NodeId NetworkBuilder::add_node(std::string id) {
  if (net_.find_node(id)) throw ParseError("duplicate node id '" + id + "'");
  declared_nodes_ = true;
  return ensure_node(id);
}

NodeId NetworkBuilder::add_node(std::string id, Point coordinate) {
  const NodeId n = add_node(std::move(id));
  coords_[n] = coordinate;
  return n;
}

LinkId NetworkBuilder::add_link(std::string id, std::string_view from, std::string_view to,
                                std::vector<double> attributes) {
  if (attributes.size() != net_.link_attr_names_.size())
    throw DimensionError("link '" + id + "' has " + std::to_string(attributes.size()) +
                         " attributes, expected " + std::to_string(net_.link_attr_names_.size()));
  for (double v : attributes)
    if (!std::isfinite(v)) throw ParseError("link '" + id + "' has a non-finite attribute");
  if (net_.find_link(id)) throw ParseError("duplicate link id '" + id + "'");
  // Once any node has been declared explicitly, links may only use declared nodes.
  if (declared_nodes_) {
    if (!net_.find_node(from)) throw TopologyError("link '" + id + "' references unknown node '" + std::string(from) + "'");
    if (!net_.find_node(to)) throw TopologyError("link '" + id + "' references unknown node '" + std::string(to) + "'");
  }
  const NodeId f = ensure_node(from);
  const NodeId t = ensure_node(to);
  const LinkId k = net_.links_.size();
  net_.links_.push_back(LinkRecord{id, f, t});
  net_.link_lookup_.emplace(std::move(id), k);
  net_.link_attrs_.insert(net_.link_attrs_.end(), attributes.begin(), attributes.end());
  return k;
}

void NetworkBuilder::set_pair_attribute_names(std::vector<std::string> names) {
  if (!pairs_.empty()) throw InputError("pair attribute names must be set before values");
  pair_names_ = std::move(names);
}

void NetworkBuilder::add_pair_attributes(std::string_view from_link, std::string_view to_link,
                                         std::vector<double> values) {
  if (values.size() != pair_names_.size())
    throw DimensionError("pair (" + std::string(from_link) + "," + std::string(to_link) + ") has " +
                         std::to_string(values.size()) + " attributes, expected " +
                         std::to_string(pair_names_.size()));
  pairs_.push_back(PendingPair{net_.link_index(from_link), net_.link_index(to_link), std::move(values)});
}

Network NetworkBuilder::build() && {
  Network& net = net_;
  const std::size_t nn = net.node_ids_.size();
  const std::size_t nl = net.links_.size();
  if (nl == 0) throw TopologyError("network has no links");

  net.in_links_.assign(nn, {});
  net.out_links_.assign(nn, {});
  for (LinkId k = 0; k < nl; ++k) {
    net.in_links_[net.links_[k].to].push_back(k);
    net.out_links_[net.links_[k].from].push_back(k);
  }

  net.edge_offset_.assign(nl + 1, 0);
  for (LinkId k = 0; k < nl; ++k) {
    const auto& outs = net.out_links_[net.links_[k].to];
    net.edge_offset_[k + 1] = net.edge_offset_[k] + outs.size();
    for (LinkId a : outs) {
      net.edge_from_.push_back(k);
      net.edge_to_.push_back(a);
    }
  }

  const bool all_coords =
      nn > 0 && std::all_of(coords_.begin(), coords_.end(), [](const auto& c) { return c.has_value(); });
  const bool some_coords = std::any_of(coords_.begin(), coords_.end(), [](const auto& c) { return c.has_value(); });
  if (some_coords && !all_coords) throw TopologyError("node coordinates are missing for some nodes");

  const std::size_t ne = net.edge_to_.size();
  if (all_coords) {
    net.coords_.reserve(nn);
    for (const auto& c : coords_) net.coords_.push_back(*c);
    net.pair_attr_names_ = {"left_turn", "u_turn"};
    net.pair_attrs_.assign(ne * 2, 0.0);
    for (std::size_t e = 0; e < ne; ++e) {
      const double angle = net.turn_angle(net.edge_from_[e], net.edge_to_[e]);
      const bool uturn = std::abs(angle) > kUTurnMinDeg;
      const bool left = !uturn && angle > kLeftTurnMinDeg && angle <= kUTurnMinDeg;
      net.pair_attrs_[2 * e] = left ? 1.0 : 0.0;
      net.pair_attrs_[2 * e + 1] = uturn ? 1.0 : 0.0;
    }
  } else {
    net.pair_attr_names_ = pair_names_;
    const std::size_t dim = pair_names_.size();
    net.pair_attrs_.assign(ne * dim, 0.0);
    for (const auto& p : pairs_) {
      const std::size_t e = net.find_edge(p.from, p.to);
      if (e == kNone)
        throw TopologyError("pair (" + net.links_[p.from].id + "," + net.links_[p.to].id +
                            ") is not a pair of consecutive links");
      std::copy(p.values.begin(), p.values.end(), net.pair_attrs_.begin() + static_cast<std::ptrdiff_t>(e * dim));
    }
  }
  return std::move(net_);
}

NetworkFiles NetworkFiles::discover(const std::filesystem::path& links) {
  NetworkFiles files{links, std::nullopt, std::nullopt};
  auto sibling = [&](const char* suffix) {
    auto p = links;
    p.replace_filename(links.stem().string() + suffix);
    return p;
  };
  if (auto p = sibling(".nodes.csv"); std::filesystem::exists(p)) files.nodes = p;
  if (auto p = sibling(".pairs.csv"); std::filesystem::exists(p)) files.pairs = p;
  return files;
}

Network load_network(const NetworkFiles& files) {
  const auto table = detail::read_csv(files.links);
  const auto& h = table.header;
  if (h.size() < 4 || h[0] != "link_id" || h[1] != "from_node" || h[2] != "to_node" || h[3] != "travel_time")
    throw ParseError(files.links.string() + ": header must start with link_id,from_node,to_node,travel_time");
  NetworkBuilder builder(std::vector<std::string>(h.begin() + 3, h.end()));

  if (files.nodes) {
    const auto nodes = detail::read_csv(*files.nodes);
    if (nodes.header.size() != 3 || nodes.header[0] != "node_id" || nodes.header[1] != "x" || nodes.header[2] != "y")
      throw ParseError(files.nodes->string() + ": header must be node_id,x,y");
    for (std::size_t r = 0; r < nodes.rows.size(); ++r) {
      const auto where = files.nodes->string() + ":" + std::to_string(nodes.line_numbers[r]);
      const auto& row = nodes.rows[r];
      builder.add_node(row[0], Point{detail::parse_double(row[1], where), detail::parse_double(row[2], where)});
    }
  }

  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto where = files.links.string() + ":" + std::to_string(table.line_numbers[r]);
    if (row[0].empty() || row[1].empty() || row[2].empty()) throw ParseError(where + ": empty id field");
    std::vector<double> attrs;
    attrs.reserve(row.size() - 3);
    for (std::size_t c = 3; c < row.size(); ++c) attrs.push_back(detail::parse_double(row[c], where));
    builder.add_link(row[0], row[1], row[2], std::move(attrs));
  }

  if (files.pairs && !files.nodes) {
    const auto pairs = detail::read_csv(*files.pairs);
    if (pairs.header.size() < 2 || pairs.header[0] != "from_link" || pairs.header[1] != "to_link")
      throw ParseError(files.pairs->string() + ": header must start with from_link,to_link");
    builder.set_pair_attribute_names(std::vector<std::string>(pairs.header.begin() + 2, pairs.header.end()));
    for (std::size_t r = 0; r < pairs.rows.size(); ++r) {
      const auto& row = pairs.rows[r];
      const auto where = files.pairs->string() + ":" + std::to_string(pairs.line_numbers[r]);
      std::vector<double> values;
      for (std::size_t c = 2; c < row.size(); ++c) values.push_back(detail::parse_double(row[c], where));
      builder.add_pair_attributes(row[0], row[1], std::move(values));
    }
  }
  return std::move(builder).build();
}

Network load_network(const std::filesystem::path& links) {
  return load_network(NetworkFiles::discover(links));
}

void write_network(const Network& net, const std::filesystem::path& links,
                   const std::optional<std::filesystem::path>& nodes,
                   const std::optional<std::filesystem::path>& pairs) {
  {
    std::ofstream out(links);
    if (!out) throw InputError("cannot write " + links.string());
    out << std::setprecision(17);
    out << "link_id,from_node,to_node";
    for (const auto& name : net.link_attribute_names()) out << ',' << name;
    out << '\n';
    for (LinkId k = 0; k < net.num_links(); ++k) {
      const auto& l = net.link(k);
      out << l.id << ',' << net.node_name(l.from) << ',' << net.node_name(l.to);
      for (std::size_t i = 0; i < net.link_attribute_dim(); ++i) out << ',' << net.link_attribute(k, i);
      out << '\n';
    }
  }
  if (nodes && net.has_coordinates()) {
    std::ofstream out(*nodes);
    if (!out) throw InputError("cannot write " + nodes->string());
    out << std::setprecision(17) << "node_id,x,y\n";
    for (NodeId n = 0; n < net.num_nodes(); ++n)
      out << net.node_name(n) << ',' << net.coordinate(n).x << ',' << net.coordinate(n).y << '\n';
  }
  if (pairs && !net.has_coordinates() && net.pair_attribute_dim() > 0) {
    std::ofstream out(*pairs);
    if (!out) throw InputError("cannot write " + pairs->string());
    out << std::setprecision(17) << "from_link,to_link";
    for (const auto& name : net.pair_attribute_names()) out << ',' << name;
    out << '\n';
    for (std::size_t e = 0; e < net.num_edges(); ++e) {
      out << net.link(net.edge_source(e)).id << ',' << net.link(net.edge_target(e)).id;
      for (std::size_t i = 0; i < net.pair_attribute_dim(); ++i) out << ',' << net.pair_attribute(e, i);
      out << '\n';
    }
  }
}

void write_id_mapping(const Network& net, const std::filesystem::path& path) {
  nlohmann::json j;
  j["links"] = nlohmann::json::object();
  j["nodes"] = nlohmann::json::object();
  for (LinkId k = 0; k < net.num_links(); ++k) j["links"][net.link(k).id] = k;
  for (NodeId n = 0; n < net.num_nodes(); ++n) j["nodes"][net.node_name(n)] = n;
  j["dummy_link_index"] = net.num_links();
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ExtendedNetwork::ExtendedNetwork(std::shared_ptr<const Network> base, NodeId dest)
    : base_(std::move(base)), dest_(dest) {
  if (!base_) throw InputError("null network");
  const Network& net = *base_;
  if (dest >= net.num_nodes()) throw TopologyError("destination node index out of range");
  const auto entering = net.links_into(dest);
  if (entering.empty())
    throw TopologyError("destination '" + net.node_name(dest) + "' has no incoming links");

  const std::size_t n = size();
  const LinkId d = dummy();
  retained_.assign(n, 0);
  hops_.assign(n, kNone);
  retained_[d] = 1;
  hops_[d] = 0;

  // Backward BFS from d: predecessors of a link a are the links entering from_node(a).
  std::deque<LinkId> queue;
  for (LinkId k : entering) {
    if (!retained_[k]) {
      retained_[k] = 1;
      hops_[k] = 1;
      queue.push_back(k);
    }
  }
  while (!queue.empty()) {
    const LinkId a = queue.front();
    queue.pop_front();
    for (LinkId k : net.links_into(net.link(a).from)) {
      if (!retained_[k]) {
        retained_[k] = 1;
        hops_[k] = hops_[a] + 1;
        queue.push_back(k);
      }
    }
  }
  for (LinkId k = 0; k < n; ++k)
    if (retained_[k] && hops_[k] != kNone) max_hops_ = std::max(max_hops_, hops_[k]);

  succ_offset_.assign(n + 1, 0);
  for (LinkId k = 0; k < net.num_links(); ++k) {
    if (retained_[k]) {
      const std::size_t e0 = net.edge_begin(k);
      const auto outs = net.outgoing(k);
      for (std::size_t i = 0; i < outs.size(); ++i) {
        if (!retained_[outs[i]]) continue;
        succ_.push_back(outs[i]);
        succ_from_.push_back(k);
        succ_edge_.push_back(e0 + i);
      }
      if (net.link(k).to == dest) {
        succ_.push_back(d);
        succ_from_.push_back(k);
        succ_edge_.push_back(kNone);
      }
    }
    succ_offset_[k + 1] = succ_.size();
  }
  succ_offset_[n] = succ_.size();
}

std::vector<LinkId> ExtendedNetwork::pruned_links() const {
  std::vector<LinkId> out;
  for (LinkId k = 0; k < base_->num_links(); ++k)
    if (!retained_[k]) out.push_back(k);
  return out;
}

std::size_t ExtendedNetwork::num_retained() const {
  return static_cast<std::size_t>(std::count(retained_.begin(), retained_.end(), char{1}));
}

std::size_t ExtendedNetwork::position(LinkId k, LinkId a) const {
  for (std::size_t p = succ_offset_[k]; p < succ_offset_[k + 1]; ++p)
    if (succ_[p] == a) return p;
  return kNone;
}

bool ExtendedNetwork::operator==(const ExtendedNetwork& other) const {
  return base_ == other.base_ && dest_ == other.dest_ && retained_ == other.retained_ &&
         succ_offset_ == other.succ_offset_ && succ_ == other.succ_ && succ_edge_ == other.succ_edge_;
}

ExtendedNetwork extend_for_destination(std::shared_ptr<const Network> net, NodeId dest) {
  return ExtendedNetwork(std::move(net), dest);
}

}  // namespace rrc
