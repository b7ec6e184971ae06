#include "rrc/observations.hpp"

#include <fstream>
#include <map>
#include <random>
#include <unordered_map>

#include <json.hpp>

#include "csv.hpp"

namespace rrc {

std::vector<LinkId> observed_sequence(const Trip& trip, LinkId dummy) {
  std::vector<LinkId> seq = trip.links;
  seq.push_back(dummy);
  return seq;
}

namespace {

std::vector<char> forward_reach(const ExtendedNetwork& ext, LinkId from) {
  std::vector<char> seen(ext.size(), 0);
  std::vector<LinkId> stack{from};
  seen[from] = 1;
  while (!stack.empty()) {
    const LinkId k = stack.back();
    stack.pop_back();
    for (LinkId a : ext.successors(k))
      if (!seen[a]) {
        seen[a] = 1;
        stack.push_back(a);
      }
  }
  return seen;
}

}  // namespace

ObservationSet::ObservationSet(std::shared_ptr<const Network> net, std::vector<Trip> trips)
    : net_(std::move(net)), trips_(std::move(trips)) {
  if (!net_) throw InputError("null network");
  std::map<NodeId, std::size_t> index;
  for (std::size_t t = 0; t < trips_.size(); ++t) {
    const Trip& trip = trips_[t];
    if (trip.links.empty()) throw InputError("trip '" + trip.id + "' has no links");
    if (trip.dest >= net_->num_nodes()) throw InputError("trip '" + trip.id + "': unknown destination");
    for (LinkId k : trip.links)
      if (k >= net_->num_links()) throw InputError("trip '" + trip.id + "': link index out of range");
    auto [it, inserted] = index.emplace(trip.dest, groups_.size());
    if (inserted) {
      DestinationGroup g;
      g.dest = trip.dest;
      g.ext = std::make_shared<const ExtendedNetwork>(net_, trip.dest);
      groups_.push_back(std::move(g));
    }
    groups_[it->second].trips.push_back(t);
  }

  for (auto& g : groups_) {
    const ExtendedNetwork& ext = *g.ext;
    std::unordered_map<LinkId, std::vector<char>> reach;
    for (std::size_t t : g.trips) {
      const Trip& trip = trips_[t];
      const auto seq = observed_sequence(trip, ext.dummy());
      for (LinkId k : trip.links)
        if (!ext.retained(k))
          throw InputError("trip '" + trip.id + "': destination " + net_->node_name(trip.dest) +
                           " is unreachable from link " + net_->link(k).id);
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        const LinkPair pair{seq[i], seq[i + 1], t};
        if (ext.position(pair.u, pair.v) != kNone) {
          g.connected.push_back(pair);
          continue;
        }
        auto rit = reach.find(pair.u);
        if (rit == reach.end()) rit = reach.emplace(pair.u, forward_reach(ext, pair.u)).first;
        if (!rit->second[pair.v])
          throw InputError("trip '" + trip.id + "': link " +
                           (pair.v == ext.dummy() ? std::string("<destination>") : net_->link(pair.v).id) +
                           " cannot be reached from link " + net_->link(pair.u).id);
        g.unconnected.push_back(pair);
      }
    }
    std::map<std::pair<LinkId, LinkId>, std::size_t> counts;
    for (const LinkPair& pair : g.unconnected) ++counts[{pair.u, pair.v}];
    for (const auto& [uv, n] : counts) g.distinct_unconnected.push_back({uv.first, uv.second, n});
  }
}

std::size_t ObservationSet::num_connected() const {
  std::size_t n = 0;
  for (const auto& g : groups_) n += g.connected.size();
  return n;
}

std::size_t ObservationSet::num_unconnected() const {
  std::size_t n = 0;
  for (const auto& g : groups_) n += g.unconnected.size();
  return n;
}

std::vector<Trip> load_trips(const Network& net, const std::filesystem::path& path) {
  const auto table = detail::read_csv(path);
  if (table.header.size() != 3 || table.header[0] != "trip_id" || table.header[1] != "dest_node" ||
      table.header[2] != "link_sequence")
    throw ParseError(path.string() + ": expected header trip_id,dest_node,link_sequence");
  std::vector<Trip> trips;
  trips.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = path.string() + ":" + std::to_string(table.line_numbers[r]);
    Trip trip;
    trip.id = row[0];
    const auto dest = net.find_node(row[1]);
    if (!dest) throw ParseError(where + ": unknown destination node '" + row[1] + "'");
    trip.dest = *dest;
    for (const auto& id : detail::split_ws(row[2])) {
      const auto k = net.find_link(id);
      if (!k) throw ParseError(where + ": unknown link '" + id + "'");
      trip.links.push_back(*k);
    }
    if (trip.links.empty()) throw ParseError(where + ": empty link sequence");
    trips.push_back(std::move(trip));
  }
  return trips;
}

void write_trips(const Network& net, const std::vector<Trip>& trips, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "trip_id,dest_node,link_sequence\n";
  for (const auto& trip : trips) {
    out << trip.id << ',' << net.node_name(trip.dest) << ',';
    for (std::size_t i = 0; i < trip.links.size(); ++i) out << (i ? " " : "") << net.link(trip.links[i]).id;
    out << '\n';
  }
  if (!out) throw InputError("failed writing " + path.string());
}

std::vector<Trip> simulate_trips(const UtilityModel& model, const ParamVector& params,
                                 const SimulationOptions& opts, const SolverOptions& solver, int threads) {
  if (opts.destinations.empty()) throw InputError("simulation needs at least one destination");
  const auto& net = model.network_ptr();

  struct Dest {
    std::shared_ptr<const ExtendedNetwork> ext;
    DestinationSolution sol;
    std::vector<LinkId> origins;
  };
  std::vector<Dest> dests;
  for (NodeId d : opts.destinations) {
    Dest dd;
    dd.ext = std::make_shared<const ExtendedNetwork>(net, d);
    dd.sol = solve_destination(*dd.ext, model, params, solver, false);
    const ExtendedNetwork& ext = *dd.ext;
    if (opts.origins.empty()) {
      for (LinkId k = 0; k < ext.dummy(); ++k)
        if (ext.retained(k) && ext.hops_to_dest(k) >= opts.min_links) dd.origins.push_back(k);
    } else {
      for (LinkId k : opts.origins)
        if (k < ext.dummy() && ext.retained(k)) dd.origins.push_back(k);
    }
    if (dd.origins.empty())
      throw InputError("no eligible origin links for destination " + model.network().node_name(d));
    dests.push_back(std::move(dd));
  }

  std::vector<Trip> trips(opts.num_trips);
  parallel_for(opts.num_trips, threads, [&](std::size_t i) {
    std::mt19937_64 rng(stream_seed(opts.seed, i));
    const Dest& dd = dests[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(dests.size()))];
    const ExtendedNetwork& ext = *dd.ext;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1000) throw NumericalError("simulation: could not draw a trip within the step limit");
      Trip trip;
      trip.id = std::to_string(i);
      trip.dest = ext.dest();
      LinkId k = dd.origins[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(dd.origins.size()))];
      trip.links.push_back(k);
      bool ok = false;
      while (trip.links.size() <= opts.max_steps) {
        const std::size_t p0 = ext.successor_begin(k);
        const auto succ = ext.successors(k);
        double u = uniform01(rng);
        std::size_t j = 0;
        for (; j + 1 < succ.size(); ++j) {
          u -= dd.sol.probs.prob[p0 + j];
          if (u < 0.0) break;
        }
        const LinkId a = succ[j];
        if (a == ext.dummy()) {
          ok = true;
          break;
        }
        trip.links.push_back(a);
        k = a;
      }
      if (ok && trip.links.size() >= opts.min_links) {
        trips[i] = std::move(trip);
        return;
      }
    }
  });
  return trips;
}

CorruptionResult corrupt_trips(const std::vector<Trip>& trips, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw InputError("removal probability must lie in [0, 1]");
  CorruptionResult out;
  out.p = p;
  out.seed = seed;
  out.trips.reserve(trips.size());
  out.removed.resize(trips.size());
  for (std::size_t i = 0; i < trips.size(); ++i) {
    std::mt19937_64 rng(stream_seed(seed, i));
    Trip t;
    t.id = trips[i].id;
    t.dest = trips[i].dest;
    for (std::size_t j = 0; j < trips[i].links.size(); ++j) {
      if (j > 0 && uniform01(rng) < p) {
        out.removed[i].push_back(j);
        continue;
      }
      t.links.push_back(trips[i].links[j]);
    }
    out.trips.push_back(std::move(t));
  }
  return out;
}

void write_corruption_manifest(const CorruptionResult& result, const std::filesystem::path& path) {
  nlohmann::json j;
  j["p"] = result.p;
  j["seed"] = result.seed;
  j["trips"] = nlohmann::json::array();
  for (std::size_t i = 0; i < result.trips.size(); ++i)
    j["trips"].push_back({{"trip_id", result.trips[i].id}, {"removed", result.removed[i]}});
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(1) << '\n';
}

}  // namespace rrc
