#include <algorithm>

#include "apc/encoding.hpp"
#include "apc/node.hpp"

namespace apc::node {

using ledger::DeviceBlock;
using ledger::RejectReason;
using ledger::Transaction;
using metrics::Kind;
using metrics::OpTimer;
using proto::Message;

RsiNode::RsiNode(crypto::KeyPair keys, Signature credential,
                 ledger::Blockchain chain, NodeConfig cfg, metrics::Sink* sink,
                 crypto::SigCache* cache)
    : keys_(std::move(keys)),
      credential_(credential),
      chain_(std::move(chain)),
      cfg_(std::move(cfg)),
      sink_(sink),
      cache_(cache) {
    for (size_t i = 0; i < chain_.blocks.size(); ++i)
        header_pos_[ledger::header_hash(chain_.blocks[i].header)] = i;
}

bool RsiNode::verify_sig(const PublicKey& pk, ByteSpan msg,
                         const Signature& sig) {
    if (cache_) return cache_->verify(pk, msg, sig);
    return crypto::verify(pk, msg, sig);
}

void RsiNode::record(Kind kind, uint64_t chain_size, SimTime sim_time,
                     int64_t elapsed_ns) {
    if (sink_)
        sink_->record(metrics::Record{kind, id(), chain_size, sim_time,
                                      elapsed_ns});
}

void RsiNode::broadcast_to_peers(sim::Simulation& sim, const Message& msg) {
    for (sim::NodeId peer : peers_) sim.send(id(), peer, msg);
}

void RsiNode::on_message(sim::Simulation& sim, sim::NodeId from,
                         const Message& msg) {
    if (const auto* join = std::get_if<proto::JoinRequest>(&msg)) {
        handle_join(sim, from, *join);
    } else if (const auto* rep = std::get_if<proto::WitnessReport>(&msg)) {
        handle_witness_report(sim, from, *rep);
    } else if (const auto* q = std::get_if<proto::WitnessQuery>(&msg)) {
        handle_witness_query(sim, from, *q);
    } else if (const auto* sub = std::get_if<proto::TxSubmit>(&msg)) {
        handle_tx(sim, from, sub->device_pk, sub->tx, true);
    } else if (const auto* fwd = std::get_if<proto::TxForward>(&msg)) {
        handle_tx(sim, from, fwd->device_pk, fwd->tx, false);
    } else if (const auto* bc = std::get_if<proto::TxBroadcast>(&msg)) {
        handle_peer_tx(sim, from, *bc);
    } else if (const auto* bb = std::get_if<proto::BlockBroadcast>(&msg)) {
        handle_peer_block(sim, from, *bb);
    } else if (const auto* kui = std::get_if<proto::KuiRoot>(&msg)) {
        handle_kui_root(sim, from, *kui);
    }
    // Credentials, offers, acks, rejects: not RSI input; ignored.
}

// --- join flow -------------------------------------------------------------

void RsiNode::handle_join(sim::Simulation& sim, sim::NodeId from,
                          const proto::JoinRequest& req) {
    const Transaction& genesis = req.genesis;
    auto embedded = enc::parse_genesis_payload(ByteSpan(genesis.payload));
    if (!embedded) {
        counters_.rejects_sent++;
        sim.send(id(), from,
                 proto::Reject{RejectReason::Malformed,
                               ledger::tx_digest(genesis)});
        return;
    }
    const PublicKey& pk = embedded->first;

    if (!genesis.prev_tx_hash.is_zero()) {
        finalize_join(sim, from, genesis);
        return;
    }

    // Fresh (unbound) join.
    if (ledger::find_block(chain_, pk, sim.now_ms())) {
        counters_.rejects_sent++;
        sim.send(id(), from,
                 proto::Reject{RejectReason::DuplicateKey,
                               ledger::tx_digest(genesis)});
        return;
    }
    auto it = pool_.find(pk);
    if (it != pool_.end()) {
        it->second.last_activity = sim.now_ms();
        if (it->second.offered) send_offer(sim, it->second, pk);  // lost offer
        return;
    }

    OpTimer t(cfg_.timing);
    bool sig_ok =
        verify_sig(pk, ByteSpan(enc::tx_signing_bytes(genesis)),
                   genesis.signature);
    int64_t elapsed = t.stop();
    if (!sig_ok) {
        counters_.rejects_sent++;
        sim.send(id(), from,
                 proto::Reject{RejectReason::BadSignature,
                               ledger::tx_digest(genesis)});
        return;
    }

    PendingJoin entry;
    entry.genesis = genesis;
    entry.origin = from;
    entry.claimed = embedded->second;
    entry.received_at = entry.last_activity = sim.now_ms();
    entry.accum_ns = elapsed;

    // Fan out witness queries to nodes near the claimed location, excluding
    // ourselves and the subject itself. The fan-out is capped: in a dense
    // deployment every nearby vehicle is a candidate, but a small fixed
    // witness set is enough for the quorum and keeps join cost bounded.
    // nodes_near returns ascending ids and infrastructure registers first,
    // so fixed witnesses take priority over transient ones.
    auto witnesses = sim.nodes_near(entry.claimed,
                                    cfg_.witness.query_radius_m, std::nullopt,
                                    id());
    proto::WitnessQuery query{pk, entry.claimed};
    uint32_t queried = 0;
    for (sim::NodeId w : witnesses) {
        if (w == from) continue;  // no self-witnessing
        if (queried >= cfg_.witness.max_queries) break;
        sim.send(id(), w, Message{query});
        counters_.witness_queries_sent++;
        ++queried;
    }
    pool_.emplace(pk, std::move(entry));
    device_of_node_[from] = pk;
    origin_of_device_[pk] = from;
    counters_.joins_opened++;
}

void RsiNode::send_offer(sim::Simulation& sim, PendingJoin& entry,
                         const PublicKey& pk) {
    if (!entry.offered) {
        entry.offered = ledger::propose_header(
            chain_.tip().header, pk, entry.genesis.access_level,
            cfg_.expiration_window_ms, sim.now_ms());
    }
    Digest hh = ledger::header_hash(*entry.offered);
    proto::HeaderOffer offer{
        hh, keys_.pk, crypto::sign(keys_.sk, enc::offer_signing_bytes(hh))};
    entry.last_activity = sim.now_ms();
    sim.send(id(), entry.origin, Message{offer});
}

void RsiNode::handle_witness_report(sim::Simulation& sim, sim::NodeId,
                                    const proto::WitnessReport& rep) {
    auto it = pool_.find(rep.subject_pk);
    if (it == pool_.end() || it->second.offered) return;  // stale/unknown
    PendingJoin& entry = it->second;

    // A witness must be verifiable: a peer RSI or an active device.
    bool known_witness =
        rsi_pks_.contains(rep.witness_pk) ||
        ledger::find_block(chain_, rep.witness_pk, sim.now_ms()) != nullptr;
    if (!known_witness) {
        counters_.invalid_witness_reports++;
        return;
    }
    OpTimer t(cfg_.timing);
    bool sig_ok = verify_sig(
        rep.witness_pk,
        ByteSpan(enc::witness_signing_bytes(rep.subject_pk, rep.observed,
                                            rep.witness_pk)),
        rep.witness_sig);
    entry.accum_ns += t.stop();
    if (!sig_ok) {
        counters_.invalid_witness_reports++;
        return;
    }
    if (!entry.reporters.insert(rep.witness_pk).second) return;  // duplicate
    entry.last_activity = sim.now_ms();
    if (rep.observed) entry.confirms.insert(rep.witness_pk);
    if (entry.confirms.size() >= cfg_.witness.required_reports)
        send_offer(sim, entry, rep.subject_pk);
}

void RsiNode::handle_witness_query(sim::Simulation& sim, sim::NodeId from,
                                   const proto::WitnessQuery& q) {
    auto true_pos = sim.true_position(q.subject_pk);
    bool observed =
        true_pos.has_value() &&
        sim::distance_m(*true_pos, q.claimed) <= cfg_.witness.confirm_radius_m &&
        sim::distance_m(sim.position_of(id()), q.claimed) <=
            cfg_.witness.query_radius_m;
    proto::WitnessReport rep{
        q.subject_pk, observed, keys_.pk,
        crypto::sign(keys_.sk, enc::witness_signing_bytes(q.subject_pk,
                                                          observed, keys_.pk))};
    counters_.witness_reports_sent++;
    sim.send(id(), from, Message{rep});
}

void RsiNode::finalize_join(sim::Simulation& sim, sim::NodeId from,
                            const Transaction& bound) {
    auto embedded = enc::parse_genesis_payload(ByteSpan(bound.payload));
    const PublicKey& pk = embedded->first;  // parse checked by caller
    auto it = pool_.find(pk);
    if (it == pool_.end()) {
        counters_.rejects_sent++;
        sim.send(id(), from,
                 proto::Reject{RejectReason::UnknownDevice,
                               ledger::tx_digest(bound)});
        return;
    }
    PendingJoin& entry = it->second;
    if (!entry.offered) return;  // bound before confirmation: ignore
    if (bound.prev_tx_hash != ledger::header_hash(*entry.offered)) {
        send_offer(sim, entry, pk);  // stale binding; repeat current offer
        return;
    }

    OpTimer t(cfg_.timing);
    auto result = ledger::create_block(*entry.offered, bound, cache_);
    if (std::holds_alternative<RejectReason>(result)) {
        counters_.rejects_sent++;
        sim.send(id(), from,
                 proto::Reject{std::get<RejectReason>(result),
                               ledger::tx_digest(bound)});
        return;
    }
    DeviceBlock block = std::get<DeviceBlock>(std::move(result));

    // The tip may have moved since the offer; if so, re-propose on the new
    // tip instead of appending a stale link.
    if (block.header.prev_header_hash != ledger::header_hash(chain_.tip().header)) {
        entry.offered.reset();
        send_offer(sim, entry, pk);
        return;
    }

    uint64_t size_before = chain_.size();
    Digest hh = ledger::header_hash(block.header);
    proto::BlockBroadcast bc{block};
    ledger::append_block(chain_, std::move(block));
    header_pos_[hh] = chain_.size() - 1;
    Bytes wire_bytes = proto::encode(Message{bc});  // gossip serialization cost
    int64_t elapsed = entry.accum_ns + t.stop();
    (void)wire_bytes;
    record(Kind::BlockAdd, size_before, sim.now_ms(), elapsed);
    counters_.joins_completed++;

    broadcast_to_peers(sim, Message{bc});
    sim.send(id(), from, Message{proto::Ack{ledger::header_hash(*entry.offered)}});
    device_of_node_[from] = pk;
    origin_of_device_[pk] = from;
    pool_.erase(it);
    drain_reorder_buffers(sim);
}

// --- transaction paths -----------------------------------------------------

void RsiNode::handle_tx(sim::Simulation& sim, sim::NodeId from,
                        const PublicKey& pk, const ledger::TxPtr& tx,
                        bool direct) {
    OpTimer t(cfg_.timing);
    uint64_t size_before = chain_.size();
    Digest digest = ledger::tx_digest(*tx);
    DeviceBlock* block = ledger::find_block_mut(chain_, pk, sim.now_ms());
    if (!block) {
        t.stop();
        bool known_expired = chain_.index.contains(pk);
        counters_.rejects_sent++;
        sim.send(id(), from,
                 proto::Reject{known_expired ? RejectReason::BlockExpired
                                             : RejectReason::UnknownDevice,
                               digest});
        return;
    }
    // Idempotent duplicate detection: linear scan of the block's digests.
    if (std::find(block->tx_digests.begin(), block->tx_digests.end(), digest) !=
        block->tx_digests.end()) {
        t.stop();
        counters_.dup_tx_acked++;
        sim.send(id(), from, Message{proto::Ack{digest}});
        return;
    }
    auto reject = ledger::append_transaction(*block, tx, sim.now_ms(), cache_);
    if (reject) {
        t.stop();
        if (*reject == RejectReason::BrokenChainLink) {
            // A flushed backlog arrives scrambled by link jitter, so the
            // predecessor may simply still be in flight. Park (verified)
            // rather than refuse; the submitter's retry collects a
            // duplicate-ack once the chain drains.
            if (verify_sig(pk, ByteSpan(enc::tx_signing_bytes(*tx)),
                           tx->signature)) {
                auto& buf = tx_reorder_[pk];
                if (buf.size() >= cfg_.reorder_limit) {
                    counters_.reorder_dropped_tx++;
                } else {
                    buf.emplace(tx->prev_tx_hash, ParkedTx{tx, true});
                    counters_.reorder_parked_tx++;
                }
                return;
            }
            counters_.rejects_sent++;
            sim.send(id(), from, Message{proto::Reject{
                                     RejectReason::BadSignature, digest}});
            return;
        }
        counters_.rejects_sent++;
        sim.send(id(), from, Message{proto::Reject{*reject, digest}});
        return;
    }
    proto::TxBroadcast bc{pk, tx};
    if (mutate_rebroadcast_) {
        auto mutated = std::make_shared<Transaction>(*tx);
        if (mutated->payload.empty()) mutated->payload.push_back(0xff);
        else mutated->payload[0] ^= 0xff;
        bc.tx = std::move(mutated);  // altered content, original signature
    }
    Bytes wire_bytes = proto::encode(Message{bc});
    (void)wire_bytes;
    record(Kind::TxAdd, size_before, sim.now_ms(), t.stop());

    broadcast_to_peers(sim, Message{bc});
    sim.send(id(), from, Message{proto::Ack{digest}});
    if (direct) {
        device_of_node_[from] = pk;
        origin_of_device_[pk] = from;
    }
    drain_reorder_buffers(sim);
}

void RsiNode::handle_peer_tx(sim::Simulation& sim, sim::NodeId,
                             const proto::TxBroadcast& msg) {
    OpTimer t(cfg_.timing);
    uint64_t size_before = chain_.size();
    Digest digest = ledger::tx_digest(*msg.tx);
    DeviceBlock* block = ledger::find_block_mut(chain_, msg.device_pk,
                                                sim.now_ms());
    auto park = [&] {
        // Verify before parking: a forged copy must never squat on the
        // reorder slot (keyed by prev hash) that its honest original will
        // need when it arrives.
        if (!verify_sig(msg.device_pk,
                        ByteSpan(enc::tx_signing_bytes(*msg.tx)),
                        msg.tx->signature)) {
            counters_.invalid_peer_tx++;
            return;
        }
        auto& buf = tx_reorder_[msg.device_pk];
        if (buf.size() >= cfg_.reorder_limit) {
            counters_.reorder_dropped_tx++;
            return;
        }
        buf.emplace(msg.tx->prev_tx_hash, ParkedTx{msg.tx, false});
        counters_.reorder_parked_tx++;
    };
    if (!block) {
        t.stop();
        if (chain_.index.contains(msg.device_pk)) {
            counters_.invalid_peer_tx++;  // gossip for an expired block
        } else {
            park();  // its BlockBroadcast may still be in flight
        }
        return;
    }
    if (std::find(block->tx_digests.begin(), block->tx_digests.end(), digest) !=
        block->tx_digests.end()) {
        t.stop();
        counters_.dup_peer_tx++;
        return;
    }
    if (msg.tx->prev_tx_hash != block->tail_digest()) {
        t.stop();
        park();  // out of order: wait for the predecessor
        return;
    }
    auto reject = ledger::append_transaction(*block, msg.tx, sim.now_ms(),
                                             cache_);
    if (reject) {
        t.stop();
        counters_.invalid_peer_tx++;
        return;
    }
    record(Kind::PeerTxUpdate, size_before, sim.now_ms(), t.stop());
    if (mutate_rebroadcast_) {
        auto mutated = std::make_shared<Transaction>(*msg.tx);
        if (mutated->payload.empty()) mutated->payload.push_back(0xff);
        else mutated->payload[0] ^= 0xff;
        broadcast_to_peers(sim,
                           Message{proto::TxBroadcast{msg.device_pk, mutated}});
    }
    drain_reorder_buffers(sim);
}

// Validates an out-of-band block and attaches it to the chain, resolving
// sibling conflicts deterministically: the lower header hash wins and the
// displaced suffix is rolled back (its origins re-offer).
bool RsiNode::try_adopt_block(sim::Simulation& sim,
                              const DeviceBlock& block) {
    OpTimer t(cfg_.timing);
    uint64_t size_before = chain_.size();
    Digest hh = ledger::header_hash(block.header);
    if (header_pos_.contains(hh)) {
        t.stop();
        counters_.dup_peer_block++;
        return false;
    }
    Digest tip_hash = ledger::header_hash(chain_.tip().header);

    if (block.header.prev_header_hash == tip_hash) {
        // Plain extension. Guard the one-active-key rule first.
        const DeviceBlock* active = ledger::find_block(
            chain_, block.header.device_pk, block.header.created_at);
        if (active || !ledger::validate_block_serial(block, cache_)) {
            t.stop();
            counters_.invalid_peer_block++;
            return false;
        }
        ledger::append_block(chain_, block);
        header_pos_[hh] = chain_.size() - 1;
        record(Kind::PeerBlockUpdate, size_before, sim.now_ms(), t.stop());
        return true;
    }

    auto parent = header_pos_.find(block.header.prev_header_hash);
    if (parent == header_pos_.end()) {
        t.stop();
        if (block_reorder_.size() < cfg_.reorder_limit) {
            auto [slot, inserted] =
                block_reorder_.emplace(block.header.prev_header_hash, block);
            if (!inserted && hh < ledger::header_hash(slot->second.header))
                slot->second = block;  // keep the eventual winner
            counters_.reorder_parked_block++;
        }
        return false;
    }

    // Sibling race: `block` competes with the existing child of its parent.
    size_t child_pos = parent->second + 1;
    Digest child_hash = ledger::header_hash(chain_.blocks[child_pos].header);
    if (!(hh < child_hash)) {
        t.stop();
        counters_.fork_ignored++;  // our branch wins; the peer rolls back
        return false;
    }
    if (!ledger::validate_block_serial(block, cache_)) {
        t.stop();
        counters_.invalid_peer_block++;
        return false;
    }
    std::vector<DeviceBlock> removed = ledger::truncate_chain(chain_, child_pos);
    ledger::append_block(chain_, block);
    header_pos_.clear();
    for (size_t i = 0; i < chain_.blocks.size(); ++i)
        header_pos_[ledger::header_hash(chain_.blocks[i].header)] = i;
    counters_.fork_rollbacks++;
    record(Kind::PeerBlockUpdate, size_before, sim.now_ms(), t.stop());

    // Blocks we created ourselves get a fresh offer so their vehicles can
    // rebind onto the surviving branch; foreign blocks are re-offered by
    // their own origin RSI symmetrically.
    for (DeviceBlock& r : removed) {
        counters_.rolled_back_txs += r.ledger.size() - 1;
        const PublicKey& pk = r.header.device_pk;
        auto origin = origin_of_device_.find(pk);
        if (origin == origin_of_device_.end()) continue;
        PendingJoin entry;
        entry.genesis = *r.ledger.front();
        entry.origin = origin->second;
        auto embedded = enc::parse_genesis_payload(ByteSpan(entry.genesis.payload));
        if (embedded) entry.claimed = embedded->second;
        entry.received_at = entry.last_activity = sim.now_ms();
        auto [slot, inserted] = pool_.emplace(pk, std::move(entry));
        if (inserted) send_offer(sim, slot->second, pk);
    }
    return true;
}

void RsiNode::handle_peer_block(sim::Simulation& sim, sim::NodeId,
                                const proto::BlockBroadcast& msg) {
    if (try_adopt_block(sim, msg.block)) drain_reorder_buffers(sim);
}

void RsiNode::drain_reorder_buffers(sim::Simulation& sim) {
    bool progress = true;
    while (progress) {
        progress = false;

        // Parked blocks whose parent has landed (tip or interior; adoption
        // classifies extension vs. sibling race either way). Every actionable
        // entry is removed whether or not it is adopted, so this terminates.
        bool actionable = true;
        while (actionable) {
            actionable = false;
            for (auto blk = block_reorder_.begin();
                 blk != block_reorder_.end(); ++blk) {
                if (!header_pos_.contains(blk->first)) continue;
                DeviceBlock pending = std::move(blk->second);
                block_reorder_.erase(blk);
                if (try_adopt_block(sim, pending)) progress = true;
                actionable = true;
                break;  // map and chain changed; rescan
            }
        }

        // Parked transactions whose predecessor has landed.
        for (auto it = tx_reorder_.begin(); it != tx_reorder_.end();) {
            DeviceBlock* block =
                ledger::find_block_mut(chain_, it->first, sim.now_ms());
            auto& buf = it->second;
            if (block) {
                while (true) {
                    auto next = buf.find(block->tail_digest());
                    if (next == buf.end()) break;
                    OpTimer t(cfg_.timing);
                    uint64_t size_before = chain_.size();
                    ParkedTx parked = next->second;
                    buf.erase(next);
                    // Duplicate guard: the direct path may have appended it.
                    Digest d = ledger::tx_digest(*parked.tx);
                    if (std::find(block->tx_digests.begin(),
                                  block->tx_digests.end(),
                                  d) != block->tx_digests.end()) {
                        t.stop();
                        counters_.dup_peer_tx++;
                        continue;
                    }
                    auto reject = ledger::append_transaction(*block, parked.tx,
                                                             sim.now_ms(),
                                                             cache_);
                    if (reject) {
                        t.stop();
                        counters_.invalid_peer_tx++;
                        continue;
                    }
                    // We are the entry point for parked submissions, so the
                    // deferred append still owes the peer broadcast.
                    record(parked.entry_point ? Kind::TxAdd
                                              : Kind::PeerTxUpdate,
                           size_before, sim.now_ms(), t.stop());
                    if (parked.entry_point)
                        broadcast_to_peers(
                            sim, Message{proto::TxBroadcast{it->first,
                                                            parked.tx}});
                    progress = true;
                }
            }
            it = buf.empty() ? tx_reorder_.erase(it) : std::next(it);
        }
    }
}

// --- KUI and housekeeping ---------------------------------------------------

void RsiNode::handle_kui_root(sim::Simulation&, sim::NodeId,
                              const proto::KuiRoot& msg) {
    if (msg.epoch == kui_epoch_ && kui_epoch_ > 0 && msg.root != kui_root_)
        counters_.kui_mismatches++;
}

void RsiNode::on_tick(sim::Simulation& sim, sim::TickKind kind) {
    switch (kind) {
        case sim::TickKind::RsiTick: {
            // Bound every pending join's total lifetime (resends refresh
            // last_activity, so keying on received_at keeps an unconfirmable
            // claim from pinning pool space forever).
            SimTime now = sim.now_ms();
            for (auto it = pool_.begin(); it != pool_.end();) {
                if (now - it->second.received_at >
                    cfg_.witness.pool_timeout_ms) {
                    counters_.pool_expired++;
                    it = pool_.erase(it);
                } else {
                    ++it;
                }
            }
            break;
        }
        case sim::TickKind::Beacon: {
            proto::RsiCredential cred{keys_.pk, credential_};
            for (sim::NodeId v :
                 sim.nodes_near(sim.position_of(id()), sim.link().rsi_range_m,
                                sim::NodeKind::Vehicle))
                sim.send(id(), v, proto::Message{cred});
            break;
        }
        case sim::TickKind::KuiTick: {
            SimTime now = sim.now_ms();
            std::vector<PublicKey> leaves;
            const PublicKey& authority = chain_.blocks[0].header.device_pk;
            for (const auto& [pk, pos] : chain_.index) {
                if (pk == authority) continue;
                if (!chain_.blocks[pos].expired(now) &&
                    chain_.blocks[pos].header.device_pk == pk)
                    leaves.push_back(pk);
            }
            if (leaves.empty()) break;  // nothing to summarize yet

            OpTimer t(cfg_.timing);
            crypto::MerkleTree tree = crypto::merkle_build(leaves);
            int64_t elapsed = t.stop();
            record(Kind::MerkleBuild, chain_.size(), now, elapsed);
            kui_root_ = tree.root();
            kui_epoch_++;
            counters_.kui_roots_built++;

            proto::KuiRoot plain{kui_root_, kui_epoch_, std::nullopt};
            broadcast_to_peers(sim, proto::Message{plain});
            for (sim::NodeId v :
                 sim.nodes_near(sim.position_of(id()), sim.link().rsi_range_m,
                                sim::NodeKind::Vehicle)) {
                proto::KuiRoot out = plain;
                auto dev = device_of_node_.find(v);
                if (dev != device_of_node_.end()) {
                    auto leaf = std::lower_bound(leaves.begin(), leaves.end(),
                                                 dev->second);
                    if (leaf != leaves.end() && *leaf == dev->second)
                        out.proof = crypto::merkle_prove(
                            tree,
                            static_cast<size_t>(leaf - leaves.begin()));
                }
                sim.send(id(), v, proto::Message{out});
            }
            break;
        }
        default:
            break;
    }
}

}  // namespace apc::node
