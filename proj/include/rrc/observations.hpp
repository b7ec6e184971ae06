#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "rrc/choice_model.hpp"
#include "rrc/network.hpp"

namespace rrc {

/// One observed trip: real links only. The absorbing dummy link of the
/// destination is implied after the last link.
struct Trip {
  std::string id;
  NodeId dest = 0;
  std::vector<LinkId> links;
};

/// Consecutive observed links (u, v). v may be the dummy link.
struct LinkPair {
  LinkId u = 0;
  LinkId v = 0;
  std::size_t trip = 0;
};

/// All trips sharing a destination, split into pairs whose second link is a
/// direct successor of the first (connected) and pairs that are not.
struct PairCount {
  LinkId u = 0;
  LinkId v = 0;
  std::size_t count = 0;
};

struct DestinationGroup {
  NodeId dest = 0;
  std::shared_ptr<const ExtendedNetwork> ext;
  std::vector<std::size_t> trips;
  std::vector<LinkPair> connected;
  std::vector<LinkPair> unconnected;
  /// Distinct (u, v) among `unconnected`, sorted, with multiplicities.
  std::vector<PairCount> distinct_unconnected;
};

/// Observed link sequence with the dummy appended.
std::vector<LinkId> observed_sequence(const Trip& trip, LinkId dummy);

/// Validated trips grouped by destination. Throws InputError when a trip is
/// empty, uses a link from which its destination is unreachable, or contains
/// a pair (u, v) where v cannot be reached from u.
class ObservationSet {
 public:
  ObservationSet(std::shared_ptr<const Network> net, std::vector<Trip> trips);

  const Network& network() const { return *net_; }
  const std::shared_ptr<const Network>& network_ptr() const { return net_; }
  const std::vector<Trip>& trips() const { return trips_; }
  const std::vector<DestinationGroup>& groups() const { return groups_; }

  std::size_t num_connected() const;
  std::size_t num_unconnected() const;
  /// True when every pair is connected, i.e. no links are missing.
  bool is_complete() const { return num_unconnected() == 0; }

 private:
  std::shared_ptr<const Network> net_;
  std::vector<Trip> trips_;
  std::vector<DestinationGroup> groups_;
};

/// CSV with header `trip_id,dest_node,link_sequence`; the sequence holds link
/// ids separated by spaces.
std::vector<Trip> load_trips(const Network& net, const std::filesystem::path& path);
void write_trips(const Network& net, const std::vector<Trip>& trips, const std::filesystem::path& path);

struct SimulationOptions {
  std::size_t num_trips = 1000;
  std::uint64_t seed = 1;
  /// Destinations drawn uniformly per trip.
  std::vector<NodeId> destinations;
  /// Candidate origin links; empty means every link that reaches the
  /// destination in at least `min_links` hops.
  std::vector<LinkId> origins;
  std::size_t min_links = 1;
  /// Walks longer than this are discarded and redrawn.
  std::size_t max_steps = 100000;
};

/// Draws trips by walking the link-choice probabilities from the origin until
/// the dummy is chosen. Trip i uses its own RNG stream, so the output does not
/// depend on `threads`.
std::vector<Trip> simulate_trips(const UtilityModel& model, const ParamVector& params,
                                 const SimulationOptions& opts, const SolverOptions& solver = {},
                                 int threads = 1);

struct CorruptionResult {
  double p = 0.0;
  std::uint64_t seed = 0;
  std::vector<Trip> trips;
  /// Positions (indices into the original trip's links) that were removed.
  std::vector<std::vector<std::size_t>> removed;
};

/// Removes each link except the first independently with probability p. The
/// destination is always kept, so p = 1 leaves (origin, d).
CorruptionResult corrupt_trips(const std::vector<Trip>& trips, double p, std::uint64_t seed);

void write_corruption_manifest(const CorruptionResult& result, const std::filesystem::path& path);

}  // namespace rrc
