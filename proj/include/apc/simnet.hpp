#pragma once
//
// Deterministic discrete-event network simulator. Events are processed in
// strict (deliver_time, sequence) order; all randomness (latency jitter,
// drops) comes from one seeded generator, so identical (scenario, seed)
// inputs replay identically. Event time is kept in microseconds so sub-
// millisecond latency jitter still yields a total order; domain timestamps
// are the floor in milliseconds.
//

#include <memory>
#include <queue>
#include <unordered_map>

#include "apc/protocol.hpp"
#include "apc/rng.hpp"

namespace apc::sim {

using NodeId = uint32_t;
constexpr NodeId kNoNode = UINT32_MAX;

using EventTime = int64_t;  // microseconds
constexpr EventTime kUsPerMs = 1000;

using ledger::GeoTag;

// Equirectangular approximation; exact enough at city scale.
double distance_m(const GeoTag& a, const GeoTag& b);
// Offset east/north in meters.
GeoTag offset_m(const GeoTag& origin, double east_m, double north_m);

enum class NodeKind : uint8_t { Rsi = 0, Vehicle = 1 };

struct LinkModel {
    double rsi_rsi_ms = 1.0;
    double vehicle_rsi_ms = 5.0;
    double vehicle_vehicle_ms = 5.0;
    double jitter_frac = 0.2;  // uniform multiplicative jitter, +/- fraction
    double drop_probability = 0.0;
    double rsi_range_m = 500.0;
    double v2v_range_m = 150.0;
};

// Severs traffic between `node` and peers of `peer_kind` (or every peer)
// for sim times in [from_ms, to_ms).
struct Partition {
    NodeId node = kNoNode;
    std::optional<NodeKind> peer_kind;
    SimTime from_ms = 0;
    SimTime to_ms = 0;
};

// Piecewise-linear position schedule. An empty trace pins the node to the
// position given at add_node.
struct MobilityTrace {
    std::vector<std::pair<SimTime, GeoTag>> waypoints;  // ascending time
    GeoTag at(SimTime t_ms) const;
};

enum class TickKind : uint8_t {
    VehicleTick = 0,  // rotation check + outbox/relay flush
    RsiTick = 1,      // pending-pool expiry sweep
    KuiTick = 2,      // Merkle rebuild + root broadcast
    Beacon = 3,       // RSI credential beacon
    Bootstrap = 4,    // vehicle starts its join flow
    EmitTx = 5,       // vehicle reads sensors and emits one transaction
};

class Simulation;

class Node {
  public:
    virtual ~Node() = default;
    virtual void on_message(Simulation& sim, NodeId from,
                            const proto::Message& msg) = 0;
    virtual void on_tick(Simulation& sim, TickKind kind) = 0;

    NodeId id() const { return id_; }
    NodeKind kind() const { return kind_; }

  private:
    friend class Simulation;
    NodeId id_ = kNoNode;
    NodeKind kind_ = NodeKind::Vehicle;
};

// Per-message-variant delivery accounting. Conservation invariant:
// sent = delivered + dropped_* + in-flight at cutoff.
struct Counters {
    uint64_t sent[proto::kVariantCount] = {};
    uint64_t delivered[proto::kVariantCount] = {};
    uint64_t dropped_range[proto::kVariantCount] = {};
    uint64_t dropped_partition[proto::kVariantCount] = {};
    uint64_t dropped_loss[proto::kVariantCount] = {};
    uint64_t ticks = 0;

    uint64_t total_sent() const;
    uint64_t total_delivered() const;
    uint64_t total_dropped() const;
};

class Simulation {
  public:
    Simulation(uint64_t seed, LinkModel link)
        : rng_(seed), link_(link) {}

    NodeId add_node(std::unique_ptr<Node> node, NodeKind kind, GeoTag pos,
                    MobilityTrace trace = {});

    void add_partition(Partition p) { partitions_.push_back(p); }

    // Applies reachability, partitions, loss, and latency at send time.
    void send(NodeId from, NodeId to, proto::Message msg);

    void schedule_tick(NodeId node, SimTime at_ms, TickKind kind);

    // Processes events in total order until the queue drains or an event
    // would exceed max_ms. Returns true when fully drained (quiescent).
    bool run_until_quiescent(SimTime max_ms);

    SimTime now_ms() const { return now_us_ / kUsPerMs; }
    EventTime now_us() const { return now_us_; }

    GeoTag position_of(NodeId n) const;
    std::optional<NodeId> nearest_rsi(NodeId vehicle) const;
    std::optional<NodeId> nearest_vehicle(NodeId vehicle) const;
    std::vector<NodeId> nodes_near(const GeoTag& pos, double radius_m,
                                   std::optional<NodeKind> kind,
                                   NodeId exclude = kNoNode) const;

    // Ground truth for witness checks: where the owner of `pk` really is.
    // Phantom identities (sybil) have no position.
    void register_identity(const PublicKey& pk, NodeId owner);
    void register_phantom(const PublicKey& pk);
    std::optional<GeoTag> true_position(const PublicKey& pk) const;

    Node* node(NodeId n) { return nodes_[n].node.get(); }
    const Node* node(NodeId n) const { return nodes_[n].node.get(); }
    NodeKind kind_of(NodeId n) const { return nodes_[n].kind; }
    size_t node_count() const { return nodes_.size(); }

    Rng& rng() { return rng_; }
    const LinkModel& link() const { return link_; }
    const Counters& counters() const { return counters_; }
    uint64_t events_processed() const { return events_processed_; }
    size_t in_flight() const { return queue_.size(); }

  private:
    struct Event {
        EventTime at_us;
        uint64_t seq;
        NodeId dst;
        NodeId src;          // kNoNode for ticks
        bool is_tick;
        TickKind tick;
        proto::Message msg;  // valid when !is_tick
    };
    struct EventOrder {
        bool operator()(const Event& a, const Event& b) const {
            if (a.at_us != b.at_us) return a.at_us > b.at_us;
            return a.seq > b.seq;
        }
    };
    struct NodeSlot {
        std::unique_ptr<Node> node;
        NodeKind kind;
        GeoTag pos;
        MobilityTrace trace;
    };

    bool partitioned(NodeId a, NodeId b, SimTime t) const;
    double base_latency_ms(NodeKind a, NodeKind b) const;
    bool reachable(NodeId from, NodeId to) const;

    Rng rng_;
    LinkModel link_;
    std::vector<NodeSlot> nodes_;
    std::vector<Partition> partitions_;
    std::priority_queue<Event, std::vector<Event>, EventOrder> queue_;
    std::unordered_map<PublicKey, NodeId> identities_;  // kNoNode = phantom
    EventTime now_us_ = 0;
    uint64_t seq_ = 0;
    uint64_t events_processed_ = 0;
    Counters counters_;
};

}  // namespace apc::sim
