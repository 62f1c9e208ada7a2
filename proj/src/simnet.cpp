#include "apc/simnet.hpp"

#include <cmath>

namespace apc::sim {

namespace {
constexpr double kEarthRadiusM = 6371000.0;
constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
}  // namespace

double distance_m(const GeoTag& a, const GeoTag& b) {
    double mean_lat = 0.5 * (a.lat_deg + b.lat_deg) * kDegToRad;
    double dx = (b.lon_deg - a.lon_deg) * kDegToRad * std::cos(mean_lat);
    double dy = (b.lat_deg - a.lat_deg) * kDegToRad;
    return kEarthRadiusM * std::sqrt(dx * dx + dy * dy);
}

GeoTag offset_m(const GeoTag& origin, double east_m, double north_m) {
    GeoTag out = origin;
    out.lat_deg += (north_m / kEarthRadiusM) / kDegToRad;
    out.lon_deg += (east_m / (kEarthRadiusM *
                              std::cos(origin.lat_deg * kDegToRad))) /
                   kDegToRad;
    return out;
}

GeoTag MobilityTrace::at(SimTime t_ms) const {
    if (waypoints.empty()) return GeoTag{};
    if (t_ms <= waypoints.front().first) return waypoints.front().second;
    if (t_ms >= waypoints.back().first) return waypoints.back().second;
    for (size_t i = 1; i < waypoints.size(); ++i) {
        if (t_ms > waypoints[i].first) continue;
        const auto& [t0, p0] = waypoints[i - 1];
        const auto& [t1, p1] = waypoints[i];
        double f = t1 == t0 ? 0.0
                            : static_cast<double>(t_ms - t0) /
                                  static_cast<double>(t1 - t0);
        return GeoTag{p0.lat_deg + f * (p1.lat_deg - p0.lat_deg),
                      p0.lon_deg + f * (p1.lon_deg - p0.lon_deg)};
    }
    return waypoints.back().second;
}

uint64_t Counters::total_sent() const {
    uint64_t s = 0;
    for (auto v : sent) s += v;
    return s;
}
uint64_t Counters::total_delivered() const {
    uint64_t s = 0;
    for (auto v : delivered) s += v;
    return s;
}
uint64_t Counters::total_dropped() const {
    uint64_t s = 0;
    for (size_t i = 0; i < proto::kVariantCount; ++i)
        s += dropped_range[i] + dropped_partition[i] + dropped_loss[i];
    return s;
}

NodeId Simulation::add_node(std::unique_ptr<Node> node, NodeKind kind,
                            GeoTag pos, MobilityTrace trace) {
    NodeId id = static_cast<NodeId>(nodes_.size());
    node->id_ = id;
    node->kind_ = kind;
    nodes_.push_back(NodeSlot{std::move(node), kind, pos, std::move(trace)});
    return id;
}

GeoTag Simulation::position_of(NodeId n) const {
    const NodeSlot& slot = nodes_[n];
    if (!slot.trace.waypoints.empty()) return slot.trace.at(now_ms());
    return slot.pos;
}

bool Simulation::partitioned(NodeId a, NodeId b, SimTime t) const {
    for (const Partition& p : partitions_) {
        if (t < p.from_ms || t >= p.to_ms) continue;
        if (p.node == a && (!p.peer_kind || kind_of(b) == *p.peer_kind))
            return true;
        if (p.node == b && (!p.peer_kind || kind_of(a) == *p.peer_kind))
            return true;
    }
    return false;
}

double Simulation::base_latency_ms(NodeKind a, NodeKind b) const {
    if (a == NodeKind::Rsi && b == NodeKind::Rsi) return link_.rsi_rsi_ms;
    if (a == NodeKind::Vehicle && b == NodeKind::Vehicle)
        return link_.vehicle_vehicle_ms;
    return link_.vehicle_rsi_ms;
}

bool Simulation::reachable(NodeId from, NodeId to) const {
    NodeKind ka = kind_of(from), kb = kind_of(to);
    if (ka == NodeKind::Rsi && kb == NodeKind::Rsi) return true;  // wired mesh
    double limit = (ka == NodeKind::Vehicle && kb == NodeKind::Vehicle)
                       ? link_.v2v_range_m
                       : link_.rsi_range_m;
    return distance_m(position_of(from), position_of(to)) <= limit;
}

void Simulation::send(NodeId from, NodeId to, proto::Message msg) {
    const size_t v = msg.index();
    counters_.sent[v]++;
    if (!reachable(from, to)) {
        counters_.dropped_range[v]++;
        return;
    }
    if (partitioned(from, to, now_ms())) {
        counters_.dropped_partition[v]++;
        return;
    }
    if (link_.drop_probability > 0 && rng_.chance(link_.drop_probability)) {
        counters_.dropped_loss[v]++;
        return;
    }
    double base = base_latency_ms(kind_of(from), kind_of(to));
    // Integer per-mil jitter keeps latency sampling platform-exact.
    double j = link_.jitter_frac;
    uint64_t lo = static_cast<uint64_t>(std::lround((1.0 - j) * 1000.0));
    uint64_t hi = static_cast<uint64_t>(std::lround((1.0 + j) * 1000.0));
    uint64_t per_mil = (j <= 0.0) ? 1000 : rng_.range(lo, hi);
    EventTime latency_us =
        static_cast<EventTime>(std::llround(base * static_cast<double>(per_mil)));
    queue_.push(Event{now_us_ + latency_us, seq_++, to, from, false,
                      TickKind::VehicleTick, std::move(msg)});
}

void Simulation::schedule_tick(NodeId node, SimTime at_ms, TickKind kind) {
    queue_.push(Event{at_ms * kUsPerMs, seq_++, node, kNoNode, true, kind,
                      proto::Message{proto::Ack{}}});
}

bool Simulation::run_until_quiescent(SimTime max_ms) {
    const EventTime max_us = max_ms * kUsPerMs;
    while (!queue_.empty()) {
        const Event& top = queue_.top();
        if (top.at_us > max_us) return false;
        Event ev = top;
        queue_.pop();
        if (ev.at_us > now_us_) now_us_ = ev.at_us;
        ++events_processed_;
        Node* dst = nodes_[ev.dst].node.get();
        if (ev.is_tick) {
            counters_.ticks++;
            dst->on_tick(*this, ev.tick);
        } else {
            counters_.delivered[ev.msg.index()]++;
            dst->on_message(*this, ev.src, ev.msg);
        }
    }
    return true;
}

std::optional<NodeId> Simulation::nearest_rsi(NodeId vehicle) const {
    GeoTag pos = position_of(vehicle);
    std::optional<NodeId> best;
    double best_d = 0.0;
    for (NodeId n = 0; n < nodes_.size(); ++n) {
        if (nodes_[n].kind != NodeKind::Rsi) continue;
        double d = distance_m(pos, position_of(n));
        if (d > link_.rsi_range_m) continue;
        if (!best || d < best_d) {  // ties resolve to the lower id
            best = n;
            best_d = d;
        }
    }
    return best;
}

std::optional<NodeId> Simulation::nearest_vehicle(NodeId vehicle) const {
    GeoTag pos = position_of(vehicle);
    std::optional<NodeId> best;
    double best_d = 0.0;
    for (NodeId n = 0; n < nodes_.size(); ++n) {
        if (n == vehicle || nodes_[n].kind != NodeKind::Vehicle) continue;
        double d = distance_m(pos, position_of(n));
        if (d > link_.v2v_range_m) continue;
        if (!best || d < best_d) {
            best = n;
            best_d = d;
        }
    }
    return best;
}

std::vector<NodeId> Simulation::nodes_near(const GeoTag& pos, double radius_m,
                                           std::optional<NodeKind> kind,
                                           NodeId exclude) const {
    std::vector<NodeId> out;
    for (NodeId n = 0; n < nodes_.size(); ++n) {
        if (n == exclude) continue;
        if (kind && nodes_[n].kind != *kind) continue;
        if (distance_m(pos, position_of(n)) <= radius_m) out.push_back(n);
    }
    return out;
}

void Simulation::register_identity(const PublicKey& pk, NodeId owner) {
    identities_[pk] = owner;
}

void Simulation::register_phantom(const PublicKey& pk) {
    identities_[pk] = kNoNode;
}

std::optional<GeoTag> Simulation::true_position(const PublicKey& pk) const {
    auto it = identities_.find(pk);
    if (it == identities_.end() || it->second == kNoNode) return std::nullopt;
    return position_of(it->second);
}

}  // namespace apc::sim
