#pragma once
//
// Deterministic state machines for the two node roles.
//
// RSI: maintains the replicated chain, runs the witness-validated join flow
// (two-phase genesis binding via HeaderOffer), appends and gossips
// transactions, rebuilds the key Merkle tree each KUI tick, and resolves
// concurrent block creation deterministically (lowest header hash wins).
//
// Vehicle: light client holding only (own tail hash, merkle root, proof).
// Joins through the nearest trusted RSI, emits signed transactions, buffers
// them while offline, forwards through a neighbor vehicle when only V2V
// coverage exists, and rotates its key when the block expires.
//

#include <deque>
#include <set>

#include "apc/ledger.hpp"
#include "apc/metrics.hpp"
#include "apc/simnet.hpp"

namespace apc::node {

struct WitnessPolicy {
    uint32_t required_reports = 1;
    uint32_t max_queries = 8;          // per-join query fan-out bound
    double query_radius_m = 600.0;     // witness search radius around the claim
    double confirm_radius_m = 50.0;    // max claim-to-true-position distance
    SimTime pool_timeout_ms = 5000;
};

struct NodeConfig {
    PublicKey authority_pk;
    SimTime expiration_window_ms = 60000;
    uint8_t access_level = 1;
    size_t payload_bytes = 16;
    SimTime retry_interval_ms = 2000;    // join/offer resend cadence
    size_t reorder_limit = 64;           // per-block peer-update buffer
    metrics::TimingMode timing = metrics::TimingMode::Cpu;
    WitnessPolicy witness;
};

// ---------------------------------------------------------------------------
// RSI
// ---------------------------------------------------------------------------

class RsiNode : public sim::Node {
  public:
    struct Counters {
        uint64_t joins_opened = 0;
        uint64_t joins_completed = 0;
        uint64_t pool_expired = 0;
        uint64_t rejects_sent = 0;
        uint64_t dup_tx_acked = 0;
        uint64_t dup_peer_tx = 0;
        uint64_t dup_peer_block = 0;
        uint64_t invalid_witness_reports = 0;
        uint64_t invalid_peer_tx = 0;
        uint64_t invalid_peer_block = 0;
        uint64_t reorder_parked_tx = 0;
        uint64_t reorder_dropped_tx = 0;
        uint64_t reorder_parked_block = 0;
        uint64_t fork_rollbacks = 0;
        uint64_t fork_ignored = 0;
        uint64_t rolled_back_txs = 0;
        uint64_t kui_roots_built = 0;
        uint64_t kui_mismatches = 0;
        uint64_t witness_queries_sent = 0;
        uint64_t witness_reports_sent = 0;
    };

    RsiNode(crypto::KeyPair keys, Signature credential,
            ledger::Blockchain chain, NodeConfig cfg, metrics::Sink* sink,
            crypto::SigCache* cache);

    void set_peers(std::vector<sim::NodeId> peers) { peers_ = std::move(peers); }
    void set_rsi_keys(std::set<PublicKey> pks) { rsi_pks_ = std::move(pks); }

    // Attack knob: rebroadcast received transactions with a flipped payload
    // byte (signature left intact), modeling the malicious-RSI scenario.
    void set_mutate_rebroadcast(bool on) { mutate_rebroadcast_ = on; }

    void on_message(sim::Simulation& sim, sim::NodeId from,
                    const proto::Message& msg) override;
    void on_tick(sim::Simulation& sim, sim::TickKind kind) override;

    const ledger::Blockchain& chain() const { return chain_; }
    const PublicKey& pk() const { return keys_.pk; }
    const Counters& counters() const { return counters_; }
    uint64_t kui_epoch() const { return kui_epoch_; }
    const Digest& kui_root() const { return kui_root_; }
    size_t pool_size() const { return pool_.size(); }

  private:
    struct PendingJoin {
        ledger::Transaction genesis;  // unbound form as first received
        sim::NodeId origin = sim::kNoNode;
        ledger::GeoTag claimed;
        SimTime received_at = 0;
        SimTime last_activity = 0;
        std::set<PublicKey> reporters;
        std::set<PublicKey> confirms;
        std::optional<ledger::BlockHeader> offered;
        int64_t accum_ns = 0;  // local compute spent on this join so far
    };

    void handle_join(sim::Simulation& sim, sim::NodeId from,
                     const proto::JoinRequest& req);
    void handle_witness_report(sim::Simulation& sim, sim::NodeId from,
                               const proto::WitnessReport& rep);
    void handle_witness_query(sim::Simulation& sim, sim::NodeId from,
                              const proto::WitnessQuery& q);
    void handle_tx(sim::Simulation& sim, sim::NodeId from,
                   const PublicKey& pk, const ledger::TxPtr& tx, bool direct);
    void handle_peer_tx(sim::Simulation& sim, sim::NodeId from,
                        const proto::TxBroadcast& msg);
    void handle_peer_block(sim::Simulation& sim, sim::NodeId from,
                           const proto::BlockBroadcast& msg);
    void handle_kui_root(sim::Simulation& sim, sim::NodeId from,
                         const proto::KuiRoot& msg);

    void send_offer(sim::Simulation& sim, PendingJoin& entry,
                    const PublicKey& pk);
    void finalize_join(sim::Simulation& sim, sim::NodeId from,
                       const ledger::Transaction& bound);
    void broadcast_to_peers(sim::Simulation& sim, const proto::Message& msg);
    void drain_reorder_buffers(sim::Simulation& sim);
    bool try_adopt_block(sim::Simulation& sim, const ledger::DeviceBlock& block);
    void record(metrics::Kind kind, uint64_t chain_size, SimTime sim_time,
                int64_t elapsed_ns);
    bool verify_sig(const PublicKey& pk, ByteSpan msg, const Signature& sig);

    crypto::KeyPair keys_;
    Signature credential_;  // authority signature over our pk
    ledger::Blockchain chain_;
    NodeConfig cfg_;
    metrics::Sink* sink_;
    crypto::SigCache* cache_;  // shared process-wide memo (may be null)

    std::vector<sim::NodeId> peers_;
    std::set<PublicKey> rsi_pks_;  // trusted peer identities (incl. own)
    std::map<PublicKey, PendingJoin> pool_;
    std::map<sim::NodeId, PublicKey> device_of_node_;  // join/submit origin map
    std::map<PublicKey, sim::NodeId> origin_of_device_;

    // Out-of-order arrivals parked until their predecessor lands, keyed by
    // the digest they chain from. `entry_point` marks transactions that
    // reached us as submissions (direct or relayed) rather than peer gossip:
    // when drained those still owe the peer broadcast.
    struct ParkedTx {
        ledger::TxPtr tx;
        bool entry_point = false;
    };
    std::map<PublicKey, std::map<Digest, ParkedTx>> tx_reorder_;
    std::map<Digest, ledger::DeviceBlock> block_reorder_;  // keyed by prev hash

    // Header hash -> chain position, for duplicate/sibling classification.
    std::unordered_map<Digest, size_t> header_pos_;

    uint64_t kui_epoch_ = 0;
    Digest kui_root_;
    bool mutate_rebroadcast_ = false;
    Counters counters_;
};

// ---------------------------------------------------------------------------
// Vehicle
// ---------------------------------------------------------------------------

class VehicleNode : public sim::Node {
  public:
    enum class JoinState : uint8_t {
        Idle = 0,      // before bootstrap
        WaitRsi = 1,   // genesis ready, no trusted RSI reachable yet
        JoinSent = 2,  // unbound genesis sent, awaiting offer
        Bound = 3,     // bound genesis sent, awaiting ack
        Active = 4,
    };

    struct Counters {
        uint64_t txs_emitted = 0;
        uint64_t emits_skipped = 0;
        uint64_t acks = 0;
        uint64_t rejects = 0;
        uint64_t rotations = 0;
        uint64_t rotation_dropped = 0;  // unacked txs abandoned at rotation
        uint64_t forwarded_mule = 0;    // own txs handed to a neighbor
        uint64_t relayed = 0;           // neighbor txs carried to an RSI
        uint64_t witness_queries = 0;
        uint64_t join_restarts = 0;
    };

    // Snapshot taken at rotation time, for light-client assertions.
    struct RotationSnapshot {
        PublicKey old_pk;
        Digest old_root;
        std::optional<crypto::MembershipProof> old_proof;
        uint64_t old_epoch = 0;
    };

    VehicleNode(NodeConfig cfg, Rng rng);

    // Attack knobs.
    void set_lie_witness(bool on) { lie_witness_ = on; }
    void set_tamper_relay(bool on) { tamper_relay_ = on; }
    void set_phantom_joins(size_t n) { phantom_joins_ = n; }

    void on_message(sim::Simulation& sim, sim::NodeId from,
                    const proto::Message& msg) override;
    void on_tick(sim::Simulation& sim, sim::TickKind kind) override;

    JoinState state() const { return state_; }
    const PublicKey& pk() const { return kp_.pk; }
    SimTime key_expiry() const { return key_expiry_; }
    const Digest& merkle_root() const { return merkle_root_; }
    uint64_t merkle_epoch() const { return merkle_epoch_; }
    const std::optional<crypto::MembershipProof>& membership_proof() const {
        return proof_;
    }
    const std::optional<RotationSnapshot>& last_rotation() const {
        return last_rotation_;
    }
    const Counters& counters() const { return counters_; }
    size_t outbox_size() const { return outbox_.size(); }
    const Digest& tail_digest() const { return tail_; }
    const std::vector<PublicKey>& phantom_pks() const { return phantom_pks_; }
    const std::vector<PublicKey>& used_pks() const { return used_pks_; }

  private:
    struct OutboxEntry {
        ledger::TxPtr tx;
        Digest digest;
        SimTime last_sent_at = -1;  // last transmission attempt, -1 = never
    };
    struct RelayEntry {  // mule role: somebody else's transaction
        PublicKey device_pk;
        ledger::TxPtr tx;
        sim::NodeId origin;
        Digest digest;
    };

    void start_join(sim::Simulation& sim, bool rotation);
    void try_send_join(sim::Simulation& sim);
    void send_phantom_joins(sim::Simulation& sim);
    void flush_outbox(sim::Simulation& sim);
    void emit_tx(sim::Simulation& sim);
    std::optional<sim::NodeId> nearest_trusted_rsi(sim::Simulation& sim) const;

    NodeConfig cfg_;
    Rng rng_;

    crypto::KeyPair kp_;
    SimTime key_expiry_ = 0;
    JoinState state_ = JoinState::Idle;
    ledger::Transaction unbound_genesis_;
    Digest expected_header_hash_;
    sim::NodeId join_rsi_ = sim::kNoNode;
    SimTime last_join_activity_ = 0;
    Digest tail_;        // digest of the last transaction created
    Digest acked_tail_;  // digest of the last acknowledged one (or genesis)

    std::deque<OutboxEntry> outbox_;  // unacked, creation order
    std::vector<RelayEntry> relay_held_;
    std::map<Digest, sim::NodeId> relay_awaiting_ack_;

    Digest merkle_root_;
    uint64_t merkle_epoch_ = 0;
    std::optional<crypto::MembershipProof> proof_;
    std::optional<RotationSnapshot> last_rotation_;

    std::set<PublicKey> trusted_rsis_;
    std::map<sim::NodeId, PublicKey> rsi_pk_of_node_;

    bool lie_witness_ = false;
    bool tamper_relay_ = false;
    size_t phantom_joins_ = 0;
    size_t phantoms_sent_ = 0;
    std::vector<PublicKey> phantom_pks_;
    std::vector<PublicKey> used_pks_;  // every pk this vehicle ever activated

    Counters counters_;
};

}  // namespace apc::node
