#include <algorithm>

#include "apc/encoding.hpp"
#include "apc/node.hpp"

namespace apc::node {

using ledger::RejectReason;
using ledger::Transaction;
using proto::Message;

VehicleNode::VehicleNode(NodeConfig cfg, Rng rng)
    : cfg_(std::move(cfg)), rng_(rng) {}

std::optional<sim::NodeId> VehicleNode::nearest_trusted_rsi(
    sim::Simulation& sim) const {
    auto n = sim.nearest_rsi(id());  // already range-limited
    if (!n) return std::nullopt;
    auto it = rsi_pk_of_node_.find(*n);
    if (it == rsi_pk_of_node_.end() || !trusted_rsis_.contains(it->second))
        return std::nullopt;
    return n;
}

// --- join state machine ------------------------------------------------------

void VehicleNode::start_join(sim::Simulation& sim, bool rotation) {
    SimTime now = sim.now_ms();
    if (rotation) {
        last_rotation_ =
            RotationSnapshot{kp_.pk, merkle_root_, proof_, merkle_epoch_};
        counters_.rotations++;
        counters_.rotation_dropped += outbox_.size();
        outbox_.clear();
        proof_.reset();  // proves membership of the old key only
    }
    kp_ = crypto::keypair_from_seed(rng_.seed_bytes());
    used_pks_.push_back(kp_.pk);
    sim.register_identity(kp_.pk, id());
    key_expiry_ = now + cfg_.expiration_window_ms;
    unbound_genesis_ = ledger::make_genesis_tx(kp_, sim.position_of(id()), now,
                                               cfg_.access_level);
    expected_header_hash_ = Digest{};
    tail_ = acked_tail_ = Digest{};
    join_rsi_ = sim::kNoNode;
    state_ = JoinState::WaitRsi;
    last_join_activity_ = now;
    try_send_join(sim);
}

void VehicleNode::try_send_join(sim::Simulation& sim) {
    auto rsi = nearest_trusted_rsi(sim);
    if (!rsi) {
        state_ = JoinState::WaitRsi;
        return;
    }
    join_rsi_ = *rsi;
    sim.send(id(), *rsi, Message{proto::JoinRequest{unbound_genesis_}});
    state_ = JoinState::JoinSent;
    last_join_activity_ = sim.now_ms();
}

// Sybil knob: flood the nearest RSI with joins for keys that belong to no
// vehicle. Half claim our own position, half a spot far outside the map.
void VehicleNode::send_phantom_joins(sim::Simulation& sim) {
    auto rsi = nearest_trusted_rsi(sim);
    if (!rsi) return;
    while (phantoms_sent_ < phantom_joins_) {
        crypto::KeyPair kp = crypto::keypair_from_seed(rng_.seed_bytes());
        sim.register_phantom(kp.pk);
        phantom_pks_.push_back(kp.pk);
        ledger::GeoTag claimed = sim.position_of(id());
        if (phantoms_sent_ % 2 == 1)
            claimed = sim::offset_m(claimed, 10000.0, 10000.0);
        Transaction g = ledger::make_genesis_tx(kp, claimed, sim.now_ms(),
                                                cfg_.access_level);
        sim.send(id(), *rsi, Message{proto::JoinRequest{g}});
        phantoms_sent_++;
    }
}

// --- message handling --------------------------------------------------------

void VehicleNode::on_message(sim::Simulation& sim, sim::NodeId from,
                             const Message& msg) {
    if (const auto* cred = std::get_if<proto::RsiCredential>(&msg)) {
        if (!trusted_rsis_.contains(cred->rsi_pk)) {
            if (!crypto::verify(
                    cfg_.authority_pk,
                    ByteSpan(enc::credential_signing_bytes(cred->rsi_pk)),
                    cred->authority_sig))
                return;  // forged credential
            trusted_rsis_.insert(cred->rsi_pk);
        }
        rsi_pk_of_node_[from] = cred->rsi_pk;
        if (state_ == JoinState::WaitRsi) try_send_join(sim);
        return;
    }

    if (const auto* offer = std::get_if<proto::HeaderOffer>(&msg)) {
        auto it = rsi_pk_of_node_.find(from);
        if (it == rsi_pk_of_node_.end() || it->second != offer->rsi_pk) return;
        if (!trusted_rsis_.contains(offer->rsi_pk)) return;
        if (state_ == JoinState::Idle || state_ == JoinState::WaitRsi) return;
        if (from != join_rsi_) return;  // stray offer from another RSI
        if (!crypto::verify(offer->rsi_pk,
                            ByteSpan(enc::offer_signing_bytes(offer->header_hash)),
                            offer->rsi_sig))
            return;

        Transaction bound =
            ledger::bind_genesis(unbound_genesis_, offer->header_hash, kp_);
        expected_header_hash_ = offer->header_hash;
        Digest genesis_digest = ledger::tx_digest(bound);
        if (state_ == JoinState::Active) {
            // Our block was displaced by fork resolution and the RSI offered
            // a slot on the surviving branch: re-link unacked transactions
            // onto the fresh genesis.
            Digest prev = genesis_digest;
            for (OutboxEntry& e : outbox_) {
                Transaction t = *e.tx;
                t.prev_tx_hash = prev;
                t.signature = crypto::sign(kp_.sk,
                                           ByteSpan(enc::tx_signing_bytes(t)));
                e.digest = ledger::tx_digest(t);
                e.tx = std::make_shared<const Transaction>(std::move(t));
                e.last_sent_at = -1;
                prev = e.digest;
            }
            acked_tail_ = genesis_digest;
            tail_ = outbox_.empty() ? genesis_digest : outbox_.back().digest;
        } else {
            tail_ = acked_tail_ = genesis_digest;
        }
        state_ = JoinState::Bound;
        last_join_activity_ = sim.now_ms();
        sim.send(id(), from, Message{proto::JoinRequest{bound}});
        return;
    }

    if (const auto* ack = std::get_if<proto::Ack>(&msg)) {
        if (state_ == JoinState::Bound && ack->subject == expected_header_hash_) {
            state_ = JoinState::Active;
            counters_.acks++;
            last_join_activity_ = sim.now_ms();
            flush_outbox(sim);  // emissions buffered while joining
            return;
        }
        // One of our own transactions: the chain link means an ack for entry
        // k implies every earlier entry was appended too.
        for (size_t i = 0; i < outbox_.size(); ++i) {
            if (outbox_[i].digest == ack->subject) {
                acked_tail_ = ack->subject;
                outbox_.erase(outbox_.begin(),
                              outbox_.begin() + static_cast<ptrdiff_t>(i) + 1);
                counters_.acks++;
                return;
            }
        }
        // A transaction we relayed: pass the receipt back to its origin
        // (the simulator drops it if the origin moved out of V2V range).
        auto r = relay_awaiting_ack_.find(ack->subject);
        if (r != relay_awaiting_ack_.end()) {
            sim::NodeId origin = r->second;
            relay_awaiting_ack_.erase(r);
            sim.send(id(), origin, Message{proto::Ack{ack->subject}});
        }
        return;
    }

    if (const auto* rej = std::get_if<proto::Reject>(&msg)) {
        counters_.rejects++;
        if (state_ == JoinState::JoinSent || state_ == JoinState::Bound) {
            counters_.join_restarts++;
            start_join(sim, false);  // fresh keypair; never reuse a refused one
            return;
        }
        if (rej->reason == RejectReason::BlockExpired) {
            if (state_ == JoinState::Active) start_join(sim, true);
            return;
        }
        // Only a content refusal is final; anything else (unknown device,
        // stale link) is a transient view on the RSI side and the entry
        // stays queued for retry. A refused transaction poisons every
        // successor (they chain through it), so drop from the refused entry
        // onward and restart from the tail.
        if (rej->reason != RejectReason::BadSignature &&
            rej->reason != RejectReason::Malformed)
            return;
        for (size_t i = 0; i < outbox_.size(); ++i) {
            if (outbox_[i].digest == rej->subject) {
                outbox_.erase(outbox_.begin() + static_cast<ptrdiff_t>(i),
                              outbox_.end());
                tail_ = outbox_.empty() ? acked_tail_ : outbox_.back().digest;
                break;
            }
        }
        return;
    }

    if (const auto* q = std::get_if<proto::WitnessQuery>(&msg)) {
        if (state_ != JoinState::Active) return;  // not a registered device
        counters_.witness_queries++;
        bool observed;
        if (lie_witness_) {
            observed = true;
        } else {
            auto tp = sim.true_position(q->subject_pk);
            observed = tp.has_value() &&
                       sim::distance_m(*tp, q->claimed) <=
                           cfg_.witness.confirm_radius_m &&
                       sim::distance_m(sim.position_of(id()), q->claimed) <=
                           cfg_.witness.query_radius_m;
        }
        proto::WitnessReport rep{
            q->subject_pk, observed, kp_.pk,
            crypto::sign(kp_.sk,
                         ByteSpan(enc::witness_signing_bytes(
                             q->subject_pk, observed, kp_.pk)))};
        sim.send(id(), from, Message{rep});
        return;
    }

    if (const auto* kui = std::get_if<proto::KuiRoot>(&msg)) {
        if (kui->epoch < merkle_epoch_) return;  // stale broadcast
        if (kui->epoch > merkle_epoch_) {
            merkle_epoch_ = kui->epoch;
            merkle_root_ = kui->root;
            proof_.reset();
        } else if (kui->root != merkle_root_) {
            return;  // conflicting root for the same epoch: keep the first
        }
        if (kui->proof && !proof_ &&
            crypto::merkle_verify(merkle_root_, crypto::leaf_hash(kp_.pk),
                                  *kui->proof))
            proof_ = kui->proof;  // light client stores verified proofs only
        return;
    }

    if (const auto* fwd = std::get_if<proto::TxForward>(&msg)) {
        // Mule role: carry a neighbor's transaction toward an RSI.
        ledger::TxPtr tx = fwd->tx;
        if (tamper_relay_) {
            Transaction t = *tx;
            if (t.payload.empty()) t.payload.push_back(0xff);
            else t.payload[0] ^= 0xff;
            tx = std::make_shared<const Transaction>(std::move(t));
        }
        Digest digest = ledger::tx_digest(*tx);
        if (auto rsi = nearest_trusted_rsi(sim)) {
            sim.send(id(), *rsi, Message{proto::TxForward{fwd->device_pk, tx}});
            relay_awaiting_ack_[digest] = from;
            counters_.relayed++;
        } else {
            relay_held_.push_back(RelayEntry{fwd->device_pk, tx, from, digest});
        }
        return;
    }
}

// --- ticks -------------------------------------------------------------------

void VehicleNode::on_tick(sim::Simulation& sim, sim::TickKind kind) {
    SimTime now = sim.now_ms();
    switch (kind) {
        case sim::TickKind::Bootstrap:
            start_join(sim, false);
            if (phantoms_sent_ < phantom_joins_) send_phantom_joins(sim);
            break;

        case sim::TickKind::EmitTx:
            emit_tx(sim);
            break;

        case sim::TickKind::VehicleTick: {
            if (state_ == JoinState::Active && now >= key_expiry_) {
                start_join(sim, true);  // rotation
            } else if (state_ == JoinState::WaitRsi) {
                try_send_join(sim);
            } else if ((state_ == JoinState::JoinSent ||
                        state_ == JoinState::Bound) &&
                       now - last_join_activity_ >= cfg_.retry_interval_ms) {
                if (state_ == JoinState::JoinSent) {
                    try_send_join(sim);  // nearest RSI may have changed
                } else {
                    Transaction bound = ledger::bind_genesis(
                        unbound_genesis_, expected_header_hash_, kp_);
                    sim.send(id(), join_rsi_,
                             Message{proto::JoinRequest{bound}});
                    last_join_activity_ = now;
                }
            }
            if (state_ == JoinState::Active) flush_outbox(sim);
            if (!relay_held_.empty()) {
                if (auto rsi = nearest_trusted_rsi(sim)) {
                    for (RelayEntry& e : relay_held_) {
                        sim.send(id(), *rsi,
                                 Message{proto::TxForward{e.device_pk, e.tx}});
                        relay_awaiting_ack_[e.digest] = e.origin;
                        counters_.relayed++;
                    }
                    relay_held_.clear();
                }
            }
            if (phantoms_sent_ < phantom_joins_) send_phantom_joins(sim);
            break;
        }

        default:
            break;
    }
}

void VehicleNode::flush_outbox(sim::Simulation& sim) {
    if (outbox_.empty()) return;
    SimTime now = sim.now_ms();
    auto stale = [&](const OutboxEntry& e) {
        return e.last_sent_at < 0 ||
               now - e.last_sent_at >= cfg_.retry_interval_ms;
    };
    if (auto rsi = nearest_trusted_rsi(sim)) {
        for (OutboxEntry& e : outbox_) {
            if (!stale(e)) continue;
            sim.send(id(), *rsi, Message{proto::TxSubmit{kp_.pk, e.tx}});
            e.last_sent_at = now;
        }
    } else if (auto mule = sim.nearest_vehicle(id())) {
        for (OutboxEntry& e : outbox_) {
            if (!stale(e)) continue;
            sim.send(id(), *mule, Message{proto::TxForward{kp_.pk, e.tx}});
            e.last_sent_at = now;
            counters_.forwarded_mule++;
        }
    }
}

void VehicleNode::emit_tx(sim::Simulation& sim) {
    SimTime now = sim.now_ms();
    if (state_ != JoinState::Active) {
        counters_.emits_skipped++;
        return;
    }
    if (now >= key_expiry_) {
        counters_.emits_skipped++;
        start_join(sim, true);  // expired mid-schedule: rotate first
        return;
    }
    Transaction tx;
    tx.prev_tx_hash = tail_;
    tx.payload.resize(cfg_.payload_bytes);
    rng_.fill(tx.payload.data(), tx.payload.size());
    tx.geotag = sim.position_of(id());
    tx.access_level = cfg_.access_level;
    tx.timestamp = now;
    tx.signature = crypto::sign(kp_.sk, ByteSpan(enc::tx_signing_bytes(tx)));
    Digest digest = ledger::tx_digest(tx);
    outbox_.push_back(OutboxEntry{
        std::make_shared<const Transaction>(std::move(tx)), digest, -1});
    tail_ = digest;
    counters_.txs_emitted++;

    OutboxEntry& e = outbox_.back();
    if (auto rsi = nearest_trusted_rsi(sim)) {
        sim.send(id(), *rsi, Message{proto::TxSubmit{kp_.pk, e.tx}});
        e.last_sent_at = now;
    } else if (auto mule = sim.nearest_vehicle(id())) {
        sim.send(id(), *mule, Message{proto::TxForward{kp_.pk, e.tx}});
        e.last_sent_at = now;
        counters_.forwarded_mule++;
    }
}

}  // namespace apc::node
