#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rrc/common.hpp"

namespace rrc {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct LinkRecord {
  std::string id;
  NodeId from = 0;
  NodeId to = 0;
};

/// Turn classification thresholds in degrees. A turn is "left" when the signed
/// (counter-clockwise positive) heading change lies in (40, 177]; anything whose
/// absolute change exceeds 177 is a U-turn.
inline constexpr double kLeftTurnMinDeg = 40.0;
inline constexpr double kUTurnMinDeg = 177.0;

/// Directed link graph. Links and nodes are addressed by dense indices assigned
/// in insertion order; the original string ids are kept for I/O.
///
/// A link a is an outgoing link of k iff to_node(k) == from_node(a). Each such
/// (k, a) is an "edge" with a stable index, and edges of k are contiguous:
/// [edge_begin(k), edge_begin(k + 1)).
class Network {
 public:
  std::size_t num_links() const { return links_.size(); }
  std::size_t num_nodes() const { return node_ids_.size(); }
  std::size_t num_edges() const { return edge_to_.size(); }

  const LinkRecord& link(LinkId k) const { return links_.at(k); }
  const std::string& node_name(NodeId n) const { return node_ids_.at(n); }

  std::optional<LinkId> find_link(std::string_view id) const;
  std::optional<NodeId> find_node(std::string_view id) const;
  /// Throws TopologyError for unknown ids.
  LinkId link_index(std::string_view id) const;
  NodeId node_index(std::string_view id) const;

  std::span<const LinkId> outgoing(LinkId k) const {
    return {edge_to_.data() + edge_offset_[k], edge_offset_[k + 1] - edge_offset_[k]};
  }
  std::size_t edge_begin(LinkId k) const { return edge_offset_[k]; }
  LinkId edge_source(std::size_t e) const { return edge_from_[e]; }
  LinkId edge_target(std::size_t e) const { return edge_to_[e]; }
  /// Edge index of (k, a), or kNone when a is not an outgoing link of k.
  std::size_t find_edge(LinkId k, LinkId a) const;

  /// Links whose head is node n.
  std::span<const LinkId> links_into(NodeId n) const { return in_links_[n]; }
  std::span<const LinkId> links_out_of(NodeId n) const { return out_links_[n]; }

  const std::vector<std::string>& link_attribute_names() const { return link_attr_names_; }
  const std::vector<std::string>& pair_attribute_names() const { return pair_attr_names_; }
  std::size_t link_attribute_dim() const { return link_attr_names_.size(); }
  std::size_t pair_attribute_dim() const { return pair_attr_names_.size(); }
  double link_attribute(LinkId k, std::size_t i) const {
    return link_attrs_[k * link_attr_names_.size() + i];
  }
  double pair_attribute(std::size_t edge, std::size_t i) const {
    return pair_attrs_[edge * pair_attr_names_.size() + i];
  }

  bool has_coordinates() const { return !coords_.empty(); }
  const Point& coordinate(NodeId n) const { return coords_.at(n); }

  /// Signed heading change in degrees from link k onto link a, in (-180, 180].
  /// Requires node coordinates.
  double turn_angle(LinkId k, LinkId a) const;

 private:
  friend class NetworkBuilder;
  Network() = default;

  std::vector<LinkRecord> links_;
  std::vector<std::string> node_ids_;
  std::unordered_map<std::string, LinkId> link_lookup_;
  std::unordered_map<std::string, NodeId> node_lookup_;
  std::vector<Point> coords_;
  std::vector<std::vector<LinkId>> in_links_;
  std::vector<std::vector<LinkId>> out_links_;

  std::vector<std::size_t> edge_offset_;
  std::vector<LinkId> edge_from_;
  std::vector<LinkId> edge_to_;

  std::vector<std::string> link_attr_names_;
  std::vector<double> link_attrs_;
  std::vector<std::string> pair_attr_names_;
  std::vector<double> pair_attrs_;
};

/// Incrementally assembles a Network and validates it on build().
class NetworkBuilder {
 public:
  /// Attribute names for every link; the first is conventionally travel_time.
  explicit NetworkBuilder(std::vector<std::string> link_attribute_names);

  NodeId add_node(std::string id);
  NodeId add_node(std::string id, Point coordinate);
  LinkId add_link(std::string id, std::string_view from, std::string_view to,
                  std::vector<double> attributes);

  /// Explicit pair attributes. Ignored when every node has coordinates, in
  /// which case left_turn / u_turn dummies are derived from geometry.
  void set_pair_attribute_names(std::vector<std::string> names);
  void add_pair_attributes(std::string_view from_link, std::string_view to_link,
                           std::vector<double> values);

  Network build() &&;

 private:
  NodeId ensure_node(std::string_view id);

  Network net_;
  std::vector<std::optional<Point>> coords_;
  struct PendingPair {
    LinkId from;
    LinkId to;
    std::vector<double> values;
  };
  std::vector<std::string> pair_names_;
  std::vector<PendingPair> pairs_;
  bool declared_nodes_ = false;
};

struct NetworkFiles {
  std::filesystem::path links;
  std::optional<std::filesystem::path> nodes;
  std::optional<std::filesystem::path> pairs;

  /// links plus `<stem>.nodes.csv` / `<stem>.pairs.csv` siblings when they exist.
  static NetworkFiles discover(const std::filesystem::path& links);
};

Network load_network(const NetworkFiles& files);
Network load_network(const std::filesystem::path& links);

/// Writes the link file, the node file when coordinates are present and a
/// path is given, and the pair file when pair attributes are not derived from
/// coordinates and a path is given.
void write_network(const Network& net, const std::filesystem::path& links,
                   const std::optional<std::filesystem::path>& nodes = std::nullopt,
                   const std::optional<std::filesystem::path>& pairs = std::nullopt);

/// Sidecar JSON mapping string ids to dense indices.
void write_id_mapping(const Network& net, const std::filesystem::path& path);

/// A network specialised to one destination: an absorbing dummy link d is
/// appended with index num_links(), every link entering the destination gets d
/// as an extra successor, and links from which d cannot be reached are pruned.
///
/// Successor lists are stored CSR-style; position(k, a) is the index of (k, a)
/// in that layout and is the key used for utilities and probabilities.
class ExtendedNetwork {
 public:
  ExtendedNetwork(std::shared_ptr<const Network> base, NodeId dest);

  const Network& base() const { return *base_; }
  const std::shared_ptr<const Network>& base_ptr() const { return base_; }
  NodeId dest() const { return dest_; }
  LinkId dummy() const { return base_->num_links(); }
  /// |Ã| = number of base links + 1.
  std::size_t size() const { return base_->num_links() + 1; }

  bool retained(LinkId k) const { return retained_[k] != 0; }
  std::vector<LinkId> pruned_links() const;
  std::size_t num_retained() const;

  std::span<const LinkId> successors(LinkId k) const {
    return {succ_.data() + succ_offset_[k], succ_offset_[k + 1] - succ_offset_[k]};
  }
  std::size_t successor_begin(LinkId k) const { return succ_offset_[k]; }
  std::size_t num_positions() const { return succ_.size(); }
  LinkId position_source(std::size_t p) const { return succ_from_[p]; }
  LinkId position_target(std::size_t p) const { return succ_[p]; }
  /// Base edge behind a position, kNone for the dummy transition.
  std::size_t position_edge(std::size_t p) const { return succ_edge_[p]; }
  /// Position of (k, a), or kNone when a is not a successor of k.
  std::size_t position(LinkId k, LinkId a) const;

  /// Largest hop count from a retained link to d.
  std::size_t max_hops_to_dest() const { return max_hops_; }
  std::size_t hops_to_dest(LinkId k) const { return hops_[k]; }

  bool operator==(const ExtendedNetwork& other) const;

 private:
  std::shared_ptr<const Network> base_;
  NodeId dest_;
  std::vector<char> retained_;
  std::vector<std::size_t> hops_;
  std::size_t max_hops_ = 0;
  std::vector<std::size_t> succ_offset_;
  std::vector<LinkId> succ_;
  std::vector<LinkId> succ_from_;
  std::vector<std::size_t> succ_edge_;
};

ExtendedNetwork extend_for_destination(std::shared_ptr<const Network> net, NodeId dest);

}  // namespace rrc
