// End-to-end node behavior on the simulated network: witnessed joins with
// two-phase genesis binding, transaction flow and gossip, out-of-order
// delivery, deterministic fork resolution, key rotation, the key-update
// Merkle broadcast, the store-and-forward mule path, and rejection of
// forged/sybil/tampered input.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <functional>
#include <set>

#include "apc/node.hpp"
#include "doctest.h"

using namespace apc;
using ledger::GeoTag;
using node::NodeConfig;
using node::RsiNode;
using node::VehicleNode;
using sim::LinkModel;
using sim::NodeId;
using sim::NodeKind;
using sim::Simulation;
using sim::TickKind;

namespace {

GeoTag base() { return GeoTag{-30.0, -51.2}; }
GeoTag at_m(double east, double north) {
    return sim::offset_m(base(), east, north);
}

// Free-form node for injecting crafted traffic.
struct Injector : sim::Node {
    std::function<void(Simulation&, NodeId, const proto::Message&)> on_msg;
    std::function<void(Simulation&, TickKind)> on_tick_fn;
    void on_message(Simulation& sim, NodeId from,
                    const proto::Message& msg) override {
        if (on_msg) on_msg(sim, from, msg);
    }
    void on_tick(Simulation& sim, TickKind kind) override {
        if (on_tick_fn) on_tick_fn(sim, kind);
    }
};

struct TestNet {
    crypto::KeyPair authority;
    NodeConfig cfg;
    metrics::VectorSink sink;
    crypto::SigCache cache;
    Rng key_rng;
    Simulation sim;
    ledger::Blockchain genesis_chain;
    std::vector<NodeId> rsis;
    std::vector<NodeId> vehicles;
    uint64_t vehicle_stream = 0;

    explicit TestNet(uint64_t seed, LinkModel link = {})
        : key_rng(seed ^ 0x517cc1b727220a95ull), sim(seed, link) {
        authority = crypto::keypair_from_seed(key_rng.seed_bytes());
        cfg.authority_pk = authority.pk;
        cfg.timing = metrics::TimingMode::None;
        cfg.retry_interval_ms = 1000;
        cfg.witness.pool_timeout_ms = 4000;
        genesis_chain = ledger::make_chain(authority, base(), 0);
    }

    NodeId add_rsi(GeoTag pos) {
        crypto::KeyPair kp = crypto::keypair_from_seed(key_rng.seed_bytes());
        Signature cred = crypto::sign(
            authority.sk, ByteSpan(enc::credential_signing_bytes(kp.pk)));
        auto n = std::make_unique<RsiNode>(kp, cred, genesis_chain, cfg, &sink,
                                          &cache);
        NodeId id = sim.add_node(std::move(n), NodeKind::Rsi, pos);
        rsis.push_back(id);
        return id;
    }

    NodeId add_vehicle(GeoTag pos, sim::MobilityTrace trace = {}) {
        auto v = std::make_unique<VehicleNode>(
            cfg, key_rng.fork(1000 + vehicle_stream++));
        NodeId id =
            sim.add_node(std::move(v), NodeKind::Vehicle, pos, std::move(trace));
        vehicles.push_back(id);
        return id;
    }

    Injector* add_injector(NodeKind kind, GeoTag pos) {
        auto owned = std::make_unique<Injector>();
        Injector* raw = owned.get();
        sim.add_node(std::move(owned), kind, pos);
        return raw;
    }

    void wire_peers() {
        std::set<PublicKey> pks;
        for (NodeId id : rsis) pks.insert(rsi_at(id).pk());
        for (NodeId id : rsis) {
            std::vector<NodeId> peers;
            for (NodeId other : rsis)
                if (other != id) peers.push_back(other);
            rsi_at(id).set_peers(std::move(peers));
            rsi_at(id).set_rsi_keys(pks);
        }
    }

    RsiNode& rsi_at(NodeId id) { return *static_cast<RsiNode*>(sim.node(id)); }
    RsiNode& rsi(size_t i) { return rsi_at(rsis[i]); }
    VehicleNode& veh(size_t i) {
        return *static_cast<VehicleNode*>(sim.node(vehicles[i]));
    }

    void schedule_standard(SimTime horizon) {
        for (SimTime t = 200; t < horizon; t += 1000)
            for (NodeId id : rsis) sim.schedule_tick(id, t, TickKind::Beacon);
        for (SimTime t = 600; t < horizon; t += 1000)
            for (NodeId id : rsis) sim.schedule_tick(id, t, TickKind::RsiTick);
        for (SimTime t = 400; t < horizon; t += 500)
            for (NodeId id : vehicles)
                sim.schedule_tick(id, t, TickKind::VehicleTick);
    }

    void bootstrap(size_t i, SimTime at) {
        sim.schedule_tick(vehicles[i], at, TickKind::Bootstrap);
    }
    void emit(size_t i, SimTime at) {
        sim.schedule_tick(vehicles[i], at, TickKind::EmitTx);
    }
    void kui_all(SimTime at) {
        for (NodeId id : rsis) sim.schedule_tick(id, at, TickKind::KuiTick);
    }

    void run(SimTime max_ms) { REQUIRE(sim.run_until_quiescent(max_ms)); }

    size_t count_records(metrics::Kind k,
                         std::optional<NodeId> node = std::nullopt) const {
        size_t n = 0;
        for (const auto& r : sink.records)
            if (r.kind == k && (!node || r.node == *node)) ++n;
        return n;
    }

    bool chains_converged() {
        if (rsis.empty()) return true;
        Digest first = ledger::chain_digest(rsi(0).chain());
        for (size_t i = 1; i < rsis.size(); ++i)
            if (ledger::chain_digest(rsi(i).chain()) != first) return false;
        return true;
    }
};

}  // namespace

TEST_CASE("witnessed join: two-phase binding ends with a replicated block") {
    TestNet net(101);
    net.add_rsi(at_m(0, 0));
    net.add_rsi(at_m(400, 0));  // witness for the claim + gossip peer
    net.wire_peers();
    net.add_vehicle(at_m(200, 0));
    net.schedule_standard(6000);
    net.bootstrap(0, 1000);
    net.run(12000);

    VehicleNode& v = net.veh(0);
    CHECK(v.state() == VehicleNode::JoinState::Active);
    REQUIRE(net.rsi(0).chain().size() == 2);
    REQUIRE(net.rsi(1).chain().size() == 2);
    CHECK(net.chains_converged());
    CHECK(ledger::validate_chain(net.rsi(0).chain(), &net.cache));

    const ledger::DeviceBlock& blk = net.rsi(0).chain().blocks[1];
    CHECK(blk.header.device_pk == v.pk());
    CHECK(blk.ledger.size() == 1);  // genesis only
    CHECK(!blk.ledger[0]->prev_tx_hash.is_zero());  // bound, not raw
    CHECK(blk.ledger[0]->prev_tx_hash == ledger::header_hash(blk.header));

    CHECK(net.rsi(0).counters().joins_opened == 1);
    CHECK(net.rsi(0).counters().joins_completed == 1);
    CHECK(net.rsi(1).counters().joins_completed == 0);
    CHECK(net.rsi(0).counters().witness_queries_sent >= 1);
    CHECK(net.count_records(metrics::Kind::BlockAdd) == 1);
    CHECK(net.count_records(metrics::Kind::PeerBlockUpdate, net.rsis[1]) == 1);
    CHECK(v.tail_digest() == ledger::tx_digest(*blk.ledger[0]));
}

TEST_CASE("transactions append in order and replicate to peers") {
    TestNet net(102);
    net.add_rsi(at_m(0, 0));
    net.add_rsi(at_m(400, 0));
    net.wire_peers();
    net.add_vehicle(at_m(200, 0));
    net.schedule_standard(8000);
    net.bootstrap(0, 1000);
    for (SimTime t : {5000, 5200, 5400}) net.emit(0, t);
    net.run(15000);

    VehicleNode& v = net.veh(0);
    REQUIRE(v.state() == VehicleNode::JoinState::Active);
    CHECK(v.counters().txs_emitted == 3);
    CHECK(v.outbox_size() == 0);  // everything acknowledged
    CHECK(v.counters().acks >= 4);  // join ack + one per transaction

    for (size_t i = 0; i < 2; ++i) {
        const auto* blk =
            ledger::find_block(net.rsi(i).chain(), v.pk(), net.sim.now_ms());
        REQUIRE(blk != nullptr);
        CHECK(blk->ledger.size() == 4);
    }
    CHECK(net.chains_converged());
    CHECK(ledger::validate_chain(net.rsi(1).chain(), &net.cache));
    CHECK(net.count_records(metrics::Kind::TxAdd, net.rsis[0]) == 3);
    CHECK(net.count_records(metrics::Kind::PeerTxUpdate, net.rsis[1]) == 3);
    CHECK(net.rsi(1).counters().dup_peer_tx == 0);
}

TEST_CASE("witness quorum gates the join") {
    SUBCASE("one witness cannot satisfy a quorum of two") {
        TestNet net(103);
        net.cfg.witness.required_reports = 2;
        net.add_rsi(at_m(0, 0));
        net.add_rsi(at_m(400, 0));  // only reachable witness
        net.wire_peers();
        net.add_vehicle(at_m(200, 0));
        net.schedule_standard(9000);
        net.bootstrap(0, 1000);
        net.run(16000);

        CHECK(net.veh(0).state() != VehicleNode::JoinState::Active);
        CHECK(net.rsi(0).chain().size() == 1);
        CHECK(net.rsi(1).chain().size() == 1);
        CHECK(net.rsi(0).counters().joins_completed == 0);
        CHECK(net.rsi(0).counters().pool_expired >= 1);
    }
    SUBCASE("two witnesses satisfy it") {
        TestNet net(104);
        net.cfg.witness.required_reports = 2;
        net.add_rsi(at_m(0, 0));
        net.add_rsi(at_m(400, 0));
        net.add_rsi(at_m(200, -400));  // second witness
        net.wire_peers();
        net.add_vehicle(at_m(200, 0));
        net.schedule_standard(9000);
        net.bootstrap(0, 1000);
        net.run(16000);

        CHECK(net.veh(0).state() == VehicleNode::JoinState::Active);
        CHECK(net.rsi(0).chain().size() == 2);
        CHECK(net.chains_converged());
    }
}

TEST_CASE("forged witness reports never admit a device") {
    TestNet net(105);
    net.add_rsi(at_m(0, 0));
    net.add_rsi(at_m(2000, 0));  // peer, but too far to witness
    net.wire_peers();
    net.add_vehicle(at_m(150, 0));
    PublicKey rsi1_pk = net.rsi(1).pk();

    // Sits right next to the claim and sends confirmations with a known
    // witness identity but an unverifiable signature, plus one with an
    // unknown identity.
    Injector* liar = net.add_injector(NodeKind::Vehicle, at_m(100, 0));
    liar->on_msg = [liar, rsi1_pk](Simulation& s, NodeId from,
                                   const proto::Message& m) {
        const auto* q = std::get_if<proto::WitnessQuery>(&m);
        if (!q) return;
        Signature garbage{};
        garbage.v[0] = 0x5a;
        s.send(liar->id(), from,
               proto::Message{proto::WitnessReport{q->subject_pk, true,
                                                   rsi1_pk, garbage}});
        PublicKey nobody{};
        nobody.v[5] = 0x77;
        s.send(liar->id(), from,
               proto::Message{proto::WitnessReport{q->subject_pk, true,
                                                   nobody, garbage}});
    };

    net.schedule_standard(9000);
    net.bootstrap(0, 1000);
    net.run(16000);

    CHECK(net.veh(0).state() != VehicleNode::JoinState::Active);
    CHECK(net.rsi(0).chain().size() == 1);
    CHECK(net.rsi(0).counters().joins_completed == 0);
    CHECK(net.rsi(0).counters().invalid_witness_reports >= 2);
}

TEST_CASE("duplicate peer gossip is idempotent") {
    TestNet net(106);
    net.add_rsi(at_m(0, 0));
    net.add_rsi(at_m(400, 0));
    net.wire_peers();
    net.add_vehicle(at_m(200, 0));
    Injector* dummy = net.add_injector(NodeKind::Vehicle, at_m(400, 10));
    net.schedule_standard(7000);
    net.bootstrap(0, 1000);
    net.emit(0, 5000);
    net.run(14000);

    VehicleNode& v = net.veh(0);
    REQUIRE(v.state() == VehicleNode::JoinState::Active);
    const auto* blk =
        ledger::find_block(net.rsi(1).chain(), v.pk(), net.sim.now_ms());
    REQUIRE(blk != nullptr);
    REQUIRE(blk->ledger.size() == 2);

    // Replay the same gossip twice straight at the replica.
    ledger::TxPtr tx = blk->ledger[1];
    net.sim.send(dummy->id(), net.rsis[1],
                 proto::Message{proto::TxBroadcast{v.pk(), tx}});
    net.sim.send(dummy->id(), net.rsis[1],
                 proto::Message{proto::TxBroadcast{v.pk(), tx}});
    net.run(15000);

    const auto* after =
        ledger::find_block(net.rsi(1).chain(), v.pk(), net.sim.now_ms());
    REQUIRE(after != nullptr);
    CHECK(after->ledger.size() == 2);  // unchanged
    CHECK(net.rsi(1).counters().dup_peer_tx == 2);
    CHECK(ledger::validate_chain(net.rsi(1).chain(), &net.cache));
}

TEST_CASE("out-of-order gossip parks and drains in link order") {
    TestNet net(107);
    net.add_rsi(at_m(0, 0));
    net.wire_peers();
    Injector* dummy = net.add_injector(NodeKind::Vehicle, at_m(10, 0));

    // Craft a foreign block plus two chained transactions locally.
    crypto::KeyPair kp = crypto::keypair_from_seed(net.key_rng.seed_bytes());
    ledger::DeviceBlock blk = ledger::make_block(
        net.rsi(0).chain().tip().header, kp, at_m(10, 0), 1, 60000, 50);
    auto make_tx = [&](const Digest& prev, SimTime ts) {
        ledger::Transaction tx;
        tx.prev_tx_hash = prev;
        tx.payload = {1, 2, 3};
        tx.geotag = at_m(10, 0);
        tx.access_level = 1;
        tx.timestamp = ts;
        tx.signature = crypto::sign(kp.sk, ByteSpan(enc::tx_signing_bytes(tx)));
        return std::make_shared<const ledger::Transaction>(tx);
    };
    ledger::TxPtr t1 = make_tx(blk.tail_digest(), 60);
    ledger::TxPtr t2 = make_tx(ledger::tx_digest(*t1), 70);

    dummy->on_tick_fn = [&, sent = 0](Simulation& s, TickKind) mutable {
        switch (sent++) {
            case 0:
                s.send(dummy->id(), net.rsis[0],
                       proto::Message{proto::BlockBroadcast{blk}});
                break;
            case 1:  // successor before predecessor
                s.send(dummy->id(), net.rsis[0],
                       proto::Message{proto::TxBroadcast{kp.pk, t2}});
                break;
            case 2:
                s.send(dummy->id(), net.rsis[0],
                       proto::Message{proto::TxBroadcast{kp.pk, t1}});
                break;
        }
    };
    for (SimTime t : {100, 150, 200})
        net.sim.schedule_tick(dummy->id(), t, TickKind::VehicleTick);
    net.run(2000);

    RsiNode& r = net.rsi(0);
    REQUIRE(r.chain().size() == 2);
    CHECK(r.chain().blocks[1].ledger.size() == 3);
    CHECK(r.counters().reorder_parked_tx == 1);
    CHECK(r.counters().invalid_peer_tx == 0);
    CHECK(net.count_records(metrics::Kind::PeerBlockUpdate, net.rsis[0]) == 1);
    CHECK(net.count_records(metrics::Kind::PeerTxUpdate, net.rsis[0]) == 2);
    CHECK(ledger::validate_chain(r.chain(), &net.cache));
}

TEST_CASE("concurrent block creation converges by the lowest header hash") {
    LinkModel lockstep;
    lockstep.jitter_frac = 0.0;  // symmetric flows guarantee the race
    TestNet net(108, lockstep);
    net.add_rsi(at_m(0, 0));
    net.add_rsi(at_m(400, 0));
    net.wire_peers();
    net.add_vehicle(at_m(100, 0));  // joins via RSI 0
    net.add_vehicle(at_m(300, 0));  // joins via RSI 1, same instant
    net.schedule_standard(10000);
    net.bootstrap(0, 1500);
    net.bootstrap(1, 1500);
    net.run(20000);

    CHECK(net.veh(0).state() == VehicleNode::JoinState::Active);
    CHECK(net.veh(1).state() == VehicleNode::JoinState::Active);
    REQUIRE(net.rsi(0).chain().size() == 3);
    REQUIRE(net.rsi(1).chain().size() == 3);
    CHECK(net.chains_converged());
    CHECK(ledger::validate_chain(net.rsi(0).chain(), &net.cache));
    uint64_t rollbacks = net.rsi(0).counters().fork_rollbacks +
                         net.rsi(1).counters().fork_rollbacks;
    uint64_t ignored = net.rsi(0).counters().fork_ignored +
                       net.rsi(1).counters().fork_ignored;
    CHECK(rollbacks >= 1);  // exactly one side rolled its own block back
    CHECK(ignored >= 1);    // ... and the other ignored the losing sibling
    // The displaced device was re-offered a slot chained onto the winner.
    const auto& blocks = net.rsi(0).chain().blocks;
    CHECK(blocks[2].header.prev_header_hash ==
          ledger::header_hash(blocks[1].header));
    std::set<PublicKey> members{blocks[1].header.device_pk,
                                blocks[2].header.device_pk};
    CHECK(members == std::set<PublicKey>{net.veh(0).pk(), net.veh(1).pk()});
}

TEST_CASE("key rotation starts a fresh block and keeps history valid") {
    TestNet net(109);
    net.cfg.expiration_window_ms = 4000;
    net.add_rsi(at_m(0, 0));
    net.add_rsi(at_m(400, 0));
    net.wire_peers();
    net.add_vehicle(at_m(200, 0));
    net.schedule_standard(12000);
    for (SimTime t = 2000; t < 12000; t += 2000) net.kui_all(t);
    net.bootstrap(0, 1000);
    net.run(20000);

    VehicleNode& v = net.veh(0);
    CHECK(v.state() == VehicleNode::JoinState::Active);
    CHECK(v.counters().rotations >= 2);
    CHECK(v.used_pks().size() >= 3);
    CHECK(net.rsi(0).chain().size() >= 4);
    CHECK(net.chains_converged());
    CHECK(ledger::validate_chain(net.rsi(0).chain(), &net.cache));

    // Exactly the current key is active; every predecessor expired.
    SimTime now = net.sim.now_ms();
    const auto* active = ledger::find_block(net.rsi(0).chain(), v.pk(), now);
    REQUIRE(active != nullptr);
    for (const PublicKey& old : v.used_pks()) {
        if (old == v.pk()) continue;
        CHECK(ledger::find_block(net.rsi(0).chain(), old, now) == nullptr);
        CHECK(net.rsi(0).chain().index.contains(old));  // history retained
    }

    // Light-client state survives rotation: fresh root, fresh proof.
    REQUIRE(v.last_rotation().has_value());
    CHECK(v.last_rotation()->old_pk != v.pk());
    CHECK(v.merkle_epoch() >= 2);
    REQUIRE(v.membership_proof().has_value());
    CHECK(crypto::merkle_verify(v.merkle_root(), crypto::leaf_hash(v.pk()),
                                *v.membership_proof()));
}

TEST_CASE("key-update broadcast carries per-device proofs for the sorted set") {
    TestNet net(110);
    net.add_rsi(at_m(0, 0));
    net.add_rsi(at_m(400, 0));
    net.wire_peers();
    net.add_vehicle(at_m(100, 0));
    net.add_vehicle(at_m(200, 0));
    net.add_vehicle(at_m(300, 0));
    net.schedule_standard(9000);
    net.bootstrap(0, 1000);
    net.bootstrap(1, 1400);
    net.bootstrap(2, 1800);
    net.kui_all(8000);
    net.run(16000);

    for (size_t i = 0; i < 3; ++i)
        REQUIRE(net.veh(i).state() == VehicleNode::JoinState::Active);

    // Oracle: the root over the lexicographically sorted active keys.
    std::vector<PublicKey> keys;
    for (size_t i = 0; i < 3; ++i) keys.push_back(net.veh(i).pk());
    std::sort(keys.begin(), keys.end());
    Digest expected = crypto::merkle_build_serial(keys).root();

    for (size_t i = 0; i < 2; ++i) {
        CHECK(net.rsi(i).kui_epoch() == 1);
        CHECK(net.rsi(i).kui_root() == expected);
        CHECK(net.rsi(i).counters().kui_mismatches == 0);
        CHECK(net.rsi(i).counters().kui_roots_built == 1);
    }
    CHECK(net.count_records(metrics::Kind::MerkleBuild) == 2);

    for (size_t i = 0; i < 3; ++i) {
        VehicleNode& v = net.veh(i);
        CHECK(v.merkle_epoch() == 1);
        CHECK(v.merkle_root() == expected);
        REQUIRE(v.membership_proof().has_value());
        CHECK(crypto::merkle_verify(v.merkle_root(),
                                    crypto::leaf_hash(v.pk()),
                                    *v.membership_proof()));
    }
}

namespace {

// RSI at the origin; helper vehicle parked inside coverage; subject vehicle
// joins inside coverage, then drives beyond RSI range but stays within V2V
// range of the helper.
void mule_topology(TestNet& net) {
    net.add_rsi(at_m(0, 0));
    net.add_rsi(at_m(0, -100));  // witness coverage for both vehicles
    net.wire_peers();
    net.add_vehicle(at_m(0, 400));  // helper (static)
    sim::MobilityTrace trace;
    trace.waypoints = {{0, at_m(0, 450)},
                       {5000, at_m(0, 450)},
                       {7000, at_m(0, 520)},
                       {600000, at_m(0, 520)}};
    net.add_vehicle(at_m(0, 450), trace);  // subject
    net.schedule_standard(12000);
    net.bootstrap(0, 1000);
    net.bootstrap(1, 1600);
}

}  // namespace

TEST_CASE("store-and-forward: a neighbor carries transactions and receipts") {
    TestNet net(111);
    mule_topology(net);
    net.emit(1, 8000);
    net.emit(1, 8300);
    net.run(20000);

    VehicleNode& helper = net.veh(0);
    VehicleNode& subject = net.veh(1);
    REQUIRE(helper.state() == VehicleNode::JoinState::Active);
    REQUIRE(subject.state() == VehicleNode::JoinState::Active);
    CHECK(subject.counters().txs_emitted == 2);
    CHECK(subject.counters().forwarded_mule >= 2);
    CHECK(helper.counters().relayed >= 2);
    CHECK(subject.outbox_size() == 0);  // receipts made it back

    const auto* blk = ledger::find_block(net.rsi(0).chain(), subject.pk(),
                                         net.sim.now_ms());
    REQUIRE(blk != nullptr);
    CHECK(blk->ledger.size() == 3);
    CHECK(net.chains_converged());
    CHECK(ledger::validate_chain(net.rsi(0).chain(), &net.cache));
}

TEST_CASE("a tampering relay cannot alter content, only suppress it") {
    TestNet net(112);
    mule_topology(net);
    net.veh(0).set_tamper_relay(true);
    net.emit(1, 8000);
    net.run(20000);

    VehicleNode& subject = net.veh(1);
    REQUIRE(subject.state() == VehicleNode::JoinState::Active);
    CHECK(subject.counters().txs_emitted == 1);
    CHECK(subject.outbox_size() == 1);  // never acknowledged

    const auto* blk = ledger::find_block(net.rsi(0).chain(), subject.pk(),
                                         net.sim.now_ms());
    REQUIRE(blk != nullptr);
    CHECK(blk->ledger.size() == 1);  // the altered copy never lands
    CHECK(net.rsi(0).counters().rejects_sent >= 1);
    CHECK(ledger::validate_chain(net.rsi(0).chain(), &net.cache));
    CHECK(net.chains_converged());
}

TEST_CASE("sybil joins for phantom identities all time out") {
    TestNet net(113);
    net.add_rsi(at_m(0, 0));
    net.add_rsi(at_m(400, 0));
    net.wire_peers();
    net.add_vehicle(at_m(150, 0));  // honest
    net.add_vehicle(at_m(250, 0));  // attacker (also joins legitimately)
    net.veh(1).set_phantom_joins(4);
    net.veh(1).set_lie_witness(true);
    net.schedule_standard(10000);
    net.bootstrap(0, 1000);
    net.bootstrap(1, 1200);
    net.run(18000);

    CHECK(net.veh(0).state() == VehicleNode::JoinState::Active);
    CHECK(net.veh(1).state() == VehicleNode::JoinState::Active);
    REQUIRE(net.veh(1).phantom_pks().size() == 4);

    // Real devices admitted; phantoms nowhere, in any replica.
    for (size_t i = 0; i < 2; ++i) {
        CHECK(net.rsi(i).chain().size() == 3);
        CHECK(net.rsi(i).pool_size() == 0);
        for (const PublicKey& ghost : net.veh(1).phantom_pks())
            CHECK_FALSE(net.rsi(i).chain().index.contains(ghost));
    }
    CHECK(net.rsi(0).counters().pool_expired +
              net.rsi(1).counters().pool_expired >=
          4);
    CHECK(net.chains_converged());
    CHECK(ledger::validate_chain(net.rsi(0).chain(), &net.cache));
}

TEST_CASE("vehicles ignore credentials that the authority never signed") {
    TestNet net(114);
    net.add_rsi(at_m(0, 0));
    net.add_rsi(at_m(400, 0));
    net.wire_peers();
    net.add_vehicle(at_m(200, 0));          // sees real + fake beacons
    net.add_vehicle(at_m(5000, 0));         // sees only the fake beacon
    Injector* fake = net.add_injector(NodeKind::Rsi, at_m(5000, 50));
    fake->on_tick_fn = [fake](Simulation& s, TickKind) {
        crypto::KeyPair imposter =
            crypto::keypair_from_seed(std::array<uint8_t, 32>{0x66});
        Signature self_signed = crypto::sign(
            imposter.sk, ByteSpan(enc::credential_signing_bytes(imposter.pk)));
        for (NodeId v : s.nodes_near(s.position_of(fake->id()), 500.0,
                                     NodeKind::Vehicle))
            s.send(fake->id(), v,
                   proto::Message{proto::RsiCredential{imposter.pk,
                                                       self_signed}});
    };
    for (SimTime t = 300; t < 8000; t += 700)
        net.sim.schedule_tick(fake->id(), t, TickKind::Beacon);

    net.schedule_standard(8000);
    net.bootstrap(0, 1000);
    net.bootstrap(1, 1000);
    net.run(15000);

    CHECK(net.veh(0).state() == VehicleNode::JoinState::Active);
    CHECK(net.veh(1).state() == VehicleNode::JoinState::WaitRsi);
    CHECK(net.rsi(0).chain().size() == 2);  // only the honest join landed
    CHECK(net.chains_converged());
}
