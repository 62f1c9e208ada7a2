#include "apc/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "apc/encoding.hpp"
#include "apc/merkle.hpp"
#include "apc/wire.hpp"
#include "json.hpp"

namespace apc::harness {

using ledger::GeoTag;
using nlohmann::json;
using sim::NodeId;
using sim::NodeKind;
using sim::TickKind;

namespace {

constexpr uint64_t kKeySalt = 0x517cc1b727220a95ull;    // key material stream
constexpr uint64_t kPlaceSalt = 0x2545f4914f6cdd1dull;  // vehicle placement

GeoTag map_origin() { return GeoTag{-30.0, -51.2}; }

double lattice_width_m(const Scenario& s) {
    return (s.grid_cols - 1) * s.rsi_spacing_m;
}
double lattice_height_m(const Scenario& s) {
    return (s.grid_rows - 1) * s.rsi_spacing_m;
}

json summary_to_json(const stats::Summary& s) {
    return json{{"n", s.n},         {"mean_us", s.mean},
                {"stddev_us", s.stddev}, {"ci95_us", s.ci95},
                {"min_us", s.min},  {"max_us", s.max}};
}

json rsi_counters_json(const node::RsiNode::Counters& c) {
    return json{{"joins_opened", c.joins_opened},
                {"joins_completed", c.joins_completed},
                {"pool_expired", c.pool_expired},
                {"rejects_sent", c.rejects_sent},
                {"dup_tx_acked", c.dup_tx_acked},
                {"dup_peer_tx", c.dup_peer_tx},
                {"dup_peer_block", c.dup_peer_block},
                {"invalid_witness_reports", c.invalid_witness_reports},
                {"invalid_peer_tx", c.invalid_peer_tx},
                {"invalid_peer_block", c.invalid_peer_block},
                {"reorder_parked_tx", c.reorder_parked_tx},
                {"reorder_dropped_tx", c.reorder_dropped_tx},
                {"reorder_parked_block", c.reorder_parked_block},
                {"fork_rollbacks", c.fork_rollbacks},
                {"fork_ignored", c.fork_ignored},
                {"rolled_back_txs", c.rolled_back_txs},
                {"kui_roots_built", c.kui_roots_built},
                {"kui_mismatches", c.kui_mismatches},
                {"witness_queries_sent", c.witness_queries_sent},
                {"witness_reports_sent", c.witness_reports_sent}};
}

json vehicle_counters_json(const node::VehicleNode::Counters& c) {
    return json{{"txs_emitted", c.txs_emitted},
                {"emits_skipped", c.emits_skipped},
                {"acks", c.acks},
                {"rejects", c.rejects},
                {"rotations", c.rotations},
                {"rotation_dropped", c.rotation_dropped},
                {"forwarded_mule", c.forwarded_mule},
                {"relayed", c.relayed},
                {"witness_queries", c.witness_queries},
                {"join_restarts", c.join_restarts}};
}

void accumulate(node::RsiNode::Counters& into,
                const node::RsiNode::Counters& c) {
    into.joins_opened += c.joins_opened;
    into.joins_completed += c.joins_completed;
    into.pool_expired += c.pool_expired;
    into.rejects_sent += c.rejects_sent;
    into.dup_tx_acked += c.dup_tx_acked;
    into.dup_peer_tx += c.dup_peer_tx;
    into.dup_peer_block += c.dup_peer_block;
    into.invalid_witness_reports += c.invalid_witness_reports;
    into.invalid_peer_tx += c.invalid_peer_tx;
    into.invalid_peer_block += c.invalid_peer_block;
    into.reorder_parked_tx += c.reorder_parked_tx;
    into.reorder_dropped_tx += c.reorder_dropped_tx;
    into.reorder_parked_block += c.reorder_parked_block;
    into.fork_rollbacks += c.fork_rollbacks;
    into.fork_ignored += c.fork_ignored;
    into.rolled_back_txs += c.rolled_back_txs;
    into.kui_roots_built += c.kui_roots_built;
    into.kui_mismatches += c.kui_mismatches;
    into.witness_queries_sent += c.witness_queries_sent;
    into.witness_reports_sent += c.witness_reports_sent;
}

void accumulate(node::VehicleNode::Counters& into,
                const node::VehicleNode::Counters& c) {
    into.txs_emitted += c.txs_emitted;
    into.emits_skipped += c.emits_skipped;
    into.acks += c.acks;
    into.rejects += c.rejects;
    into.rotations += c.rotations;
    into.rotation_dropped += c.rotation_dropped;
    into.forwarded_mule += c.forwarded_mule;
    into.relayed += c.relayed;
    into.witness_queries += c.witness_queries;
    into.join_restarts += c.join_restarts;
}

void write_file(const std::string& dir, const std::string& name,
                const std::string& content) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    std::ofstream out(dir + "/" + name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + dir + "/" + name);
    out << content;
}

// The sim-time threshold from which records of this kind count as measured.
SimTime measure_window_start(const Scenario& s, metrics::Kind k) {
    switch (k) {
        case metrics::Kind::BlockAdd:
        case metrics::Kind::PeerBlockUpdate:
            return s.kui_end_ms();  // the timed-join phase
        default:
            return s.measure_start_ms();
    }
}

}  // namespace

Runtime build_runtime(const Scenario& s) {
    s.validate();
    Runtime rt;
    rt.scenario = s;

    Rng key_rng(s.seed ^ kKeySalt);
    Rng place_rng(s.seed ^ kPlaceSalt);

    rt.authority = crypto::keypair_from_seed(key_rng.seed_bytes());
    rt.node_cfg.authority_pk = rt.authority.pk;
    rt.node_cfg.expiration_window_ms = s.expiration_window_ms;
    rt.node_cfg.access_level = s.access_level;
    rt.node_cfg.payload_bytes = s.payload_bytes;
    rt.node_cfg.retry_interval_ms = s.retry_interval_ms;
    rt.node_cfg.timing = s.timing;
    rt.node_cfg.witness = s.witness;

    rt.sink = std::make_unique<metrics::VectorSink>();
    rt.sim = std::make_unique<sim::Simulation>(s.seed, s.link);
    if (s.cache_mode == CacheMode::Shared) {
        rt.caches.push_back(std::make_unique<crypto::SigCache>());
    } else if (s.cache_mode == CacheMode::PerNode) {
        for (uint32_t i = 0; i < s.rsi_count; ++i)
            rt.caches.push_back(std::make_unique<crypto::SigCache>());
    }
    auto cache_for = [&](size_t rsi_index) -> crypto::SigCache* {
        if (s.cache_mode == CacheMode::Shared) return rt.caches[0].get();
        if (s.cache_mode == CacheMode::PerNode)
            return rt.caches[rsi_index].get();
        return nullptr;
    };

    GeoTag origin = map_origin();
    ledger::Blockchain genesis = ledger::make_chain(rt.authority, origin, 0);

    // RSIs on the lattice, row-major. Infrastructure registers first so it
    // gets the low node ids (witness fan-out prefers low ids).
    for (uint32_t r = 0; r < s.grid_rows; ++r) {
        for (uint32_t c = 0; c < s.grid_cols; ++c) {
            crypto::KeyPair kp =
                crypto::keypair_from_seed(key_rng.seed_bytes());
            Signature cred = crypto::sign(
                rt.authority.sk,
                ByteSpan(enc::credential_signing_bytes(kp.pk)));
            size_t index = rt.rsis.size();
            auto owned = std::make_unique<node::RsiNode>(
                kp, cred, genesis, rt.node_cfg, rt.sink.get(),
                cache_for(index));
            node::RsiNode* raw = owned.get();
            GeoTag pos =
                sim::offset_m(origin, c * s.rsi_spacing_m, r * s.rsi_spacing_m);
            NodeId id = rt.sim->add_node(std::move(owned), NodeKind::Rsi, pos);
            rt.rsi_ids.push_back(id);
            rt.rsis.push_back(raw);
        }
    }
    std::set<PublicKey> rsi_pks;
    for (auto* rsi : rt.rsis) rsi_pks.insert(rsi->pk());
    for (size_t i = 0; i < rt.rsis.size(); ++i) {
        std::vector<NodeId> peers;
        for (size_t j = 0; j < rt.rsi_ids.size(); ++j)
            if (j != i) peers.push_back(rt.rsi_ids[j]);
        rt.rsis[i]->set_peers(std::move(peers));
        rt.rsis[i]->set_rsi_keys(rsi_pks);
    }
    if (s.adversary == AdversaryKind::MaliciousRsi) {
        rt.malicious_rsi = rt.rsis.size() - 1;  // far corner of the lattice
        rt.rsis[*rt.malicious_rsi]->set_mutate_rebroadcast(true);
    }

    // Vehicles: the pre-population cohort, then the timed-join cohort.
    uint64_t vehicle_stream = 0;
    auto add_vehicle = [&](GeoTag pos, sim::MobilityTrace trace = {}) {
        auto owned = std::make_unique<node::VehicleNode>(
            rt.node_cfg, key_rng.fork(1000 + vehicle_stream++));
        node::VehicleNode* raw = owned.get();
        NodeId id = rt.sim->add_node(std::move(owned), NodeKind::Vehicle, pos,
                                     std::move(trace));
        rt.vehicle_ids.push_back(id);
        rt.vehicles.push_back(raw);
        return rt.vehicles.size() - 1;
    };
    auto uniform_pos = [&] {
        double x = place_rng.uniform() * lattice_width_m(s);
        double y = place_rng.uniform() * lattice_height_m(s);
        return sim::offset_m(origin, x, y);
    };

    for (uint32_t e = 0; e < s.emitter_count; ++e)
        rt.emitters.push_back(e);
    uint32_t total_standard = s.blockchain_size + s.measure_joins;
    for (uint32_t v = 0; v < total_standard; ++v) {
        GeoTag pos = uniform_pos();
        // Under a malicious RSI, emitters home on the opposite lattice
        // corner (RSI 0) so their direct submissions always hit an honest
        // node; the attack then rides the gossip path.
        if (s.adversary == AdversaryKind::MaliciousRsi &&
            v < s.emitter_count) {
            double angle = 0.777 * v;
            double radius = 60.0 + 10.0 * (v / 8);
            pos = sim::offset_m(origin, radius * std::cos(angle) + 40.0,
                                radius * std::sin(angle) + 40.0);
        }
        add_vehicle(pos);
    }

    // Adversarial extras.
    if (s.adversary == AdversaryKind::Sybil) {
        size_t idx = add_vehicle(
            sim::offset_m(origin, lattice_width_m(s) * 0.5,
                          lattice_height_m(s) * 0.5));
        rt.attacker_vehicle = idx;
        rt.vehicles[idx]->set_phantom_joins(s.phantom_count);
        rt.vehicles[idx]->set_lie_witness(true);
    }
    if (s.adversary == AdversaryKind::Tamperer) {
        // An emitter that joins in coverage, drives beyond every RSI's
        // radio range for its whole emission phase, and returns afterwards.
        // Its only path out while isolated is the neighbor vehicle, which
        // tampers with everything it relays.
        double xmax = lattice_width_m(s);
        GeoTag inside = sim::offset_m(origin, xmax - 60.0, 0.0);
        GeoTag outside = sim::offset_m(origin, xmax + 560.0, 0.0);
        GeoTag mule_pos = sim::offset_m(origin, xmax + 430.0, 0.0);
        SimTime ms = s.measure_start_ms();
        SimTime emit_end =
            ms + static_cast<SimTime>(s.tx_per_vehicle) * s.tx_interval_ms;
        sim::MobilityTrace trace{{{0, inside},
                                  {ms - 1500, inside},
                                  {ms - 500, outside},
                                  {emit_end + 2000, outside},
                                  {emit_end + 3000, inside}}};
        rt.subject_vehicle = add_vehicle(inside, std::move(trace));
        rt.mule_vehicle = add_vehicle(mule_pos);
        rt.vehicles[*rt.mule_vehicle]->set_tamper_relay(true);
    }

    // --- schedule -----------------------------------------------------------
    sim::Simulation& net = *rt.sim;
    SimTime horizon = s.horizon_ms();
    for (NodeId id : rt.rsi_ids) {
        for (SimTime t = 200; t < horizon; t += s.beacon_interval_ms)
            net.schedule_tick(id, t, TickKind::Beacon);
        for (SimTime t = 600; t < horizon; t += s.rsi_tick_ms)
            net.schedule_tick(id, t, TickKind::RsiTick);
        for (uint32_t k = 0; k < s.kui_rounds; ++k)
            net.schedule_tick(id, s.tx_phase_end_ms() + k * s.kui_period_ms,
                              TickKind::KuiTick);
    }
    for (NodeId id : rt.vehicle_ids)
        for (SimTime t = 400; t < horizon; t += s.vehicle_tick_ms)
            net.schedule_tick(id, t, TickKind::VehicleTick);

    for (uint32_t v = 0; v < s.blockchain_size; ++v)
        net.schedule_tick(rt.vehicle_ids[v],
                          s.bootstrap_start_ms() + v * s.join_stagger_ms,
                          TickKind::Bootstrap);
    for (uint32_t j = 0; j < s.measure_joins; ++j)
        net.schedule_tick(rt.vehicle_ids[s.blockchain_size + j],
                          s.kui_end_ms() + j * s.join_stagger_ms,
                          TickKind::Bootstrap);

    SimTime phase = std::max<SimTime>(
        1, s.tx_interval_ms / std::max<uint32_t>(1, s.emitter_count));
    for (size_t e = 0; e < rt.emitters.size(); ++e)
        for (uint32_t i = 0; i < s.tx_per_vehicle; ++i)
            net.schedule_tick(
                rt.vehicle_ids[rt.emitters[e]],
                s.measure_start_ms() + i * s.tx_interval_ms +
                    static_cast<SimTime>(e) * phase,
                TickKind::EmitTx);

    if (rt.attacker_vehicle)
        net.schedule_tick(rt.vehicle_ids[*rt.attacker_vehicle],
                          s.bootstrap_start_ms() +
                              (s.blockchain_size / 2) * s.join_stagger_ms,
                          TickKind::Bootstrap);
    if (rt.subject_vehicle) {
        net.schedule_tick(rt.vehicle_ids[*rt.subject_vehicle],
                          s.bootstrap_start_ms(), TickKind::Bootstrap);
        for (uint32_t i = 0; i < s.tx_per_vehicle; ++i)
            net.schedule_tick(rt.vehicle_ids[*rt.subject_vehicle],
                              s.measure_start_ms() + i * s.tx_interval_ms,
                              TickKind::EmitTx);
    }
    if (rt.mule_vehicle)
        net.schedule_tick(rt.vehicle_ids[*rt.mule_vehicle],
                          s.bootstrap_start_ms() + 20, TickKind::Bootstrap);

    return rt;
}

// Everything below is pure observation of a finished simulation; the split
// from run() lets run_grid() advance several simulations in lockstep before
// summarizing any of them.
static RunResult collect(Runtime& rt, bool quiescent) {
    const Scenario& s = rt.scenario;
    RunResult r;
    r.quiescent = quiescent;
    r.end_ms = rt.sim->now_ms();
    r.events = rt.sim->events_processed();
    r.net = rt.sim->counters();

    // Chains.
    std::vector<Digest> digests;
    digests.reserve(rt.rsis.size());
    for (auto* rsi : rt.rsis) digests.push_back(ledger::chain_digest(rsi->chain()));
    r.chains_identical = true;
    for (const Digest& d : digests)
        if (d != digests.front()) r.chains_identical = false;
    std::optional<Digest> honest;
    r.honest_chains_identical = true;
    for (size_t i = 0; i < digests.size(); ++i) {
        if (!rt.rsi_is_honest(i)) continue;
        if (!honest) honest = digests[i];
        else if (digests[i] != *honest) r.honest_chains_identical = false;
    }
    if (honest && r.honest_chains_identical) r.chain_digest = *honest;

    crypto::SigCache* vcache =
        rt.caches.empty() ? nullptr : rt.caches[0].get();
    r.chains_valid = true;
    uint64_t kui_mismatches = 0;
    for (size_t i = 0; i < rt.rsis.size(); ++i) {
        if (!rt.rsi_is_honest(i)) continue;
        if (!ledger::validate_chain(rt.rsis[i]->chain(), vcache))
            r.chains_valid = false;
        kui_mismatches += rt.rsis[i]->counters().kui_mismatches;
        accumulate(r.rsi_totals, rt.rsis[i]->counters());
    }
    if (rt.malicious_rsi)
        accumulate(r.rsi_totals, rt.rsis[*rt.malicious_rsi]->counters());
    r.kui_consistent = kui_mismatches == 0;

    // Vehicles.
    for (auto* v : rt.vehicles) {
        if (v->state() == node::VehicleNode::JoinState::Active)
            ++r.vehicles_active;
        r.outbox_leftover += v->outbox_size();
        accumulate(r.vehicle_totals, v->counters());
    }
    r.all_vehicles_active = r.vehicles_active == rt.vehicles.size();

    // Timing summaries.
    std::vector<double> all[metrics::kKindCount];
    std::vector<double> measured[metrics::kKindCount];
    for (const auto& rec : rt.sink->records) {
        size_t k = static_cast<size_t>(rec.kind);
        double us = static_cast<double>(rec.elapsed_ns) / 1000.0;
        all[k].push_back(us);
        if (rec.sim_time >= measure_window_start(s, rec.kind))
            measured[k].push_back(us);
    }
    for (size_t k = 0; k < metrics::kKindCount; ++k) {
        r.kinds[k].all = stats::summarize(all[k]);
        r.kinds[k].measured = stats::summarize(measured[k]);
    }

    r.clean = r.quiescent && r.honest_chains_identical && r.chains_valid &&
              r.kui_consistent && r.all_vehicles_active &&
              r.outbox_leftover == 0;

    // Timing-free fingerprint of the end state.
    {
        wire::Writer w;
        for (const Digest& d : digests) w.raw(d.span());
        w.u64(r.events);
        w.u64(r.net.total_sent());
        w.u64(r.net.total_delivered());
        w.u64(r.vehicles_active);
        w.u64(rt.sink->records.size());
        for (auto* rsi : rt.rsis) w.u64(rsi->chain().size());
        r.fingerprint = to_hex(crypto::sha256(w.take()));
    }

    // CSV, one row per record, in emission order.
    {
        std::string csv = "kind,blockchain_size,tx_count,node,sim_time,elapsed_us\n";
        csv.reserve(64 * rt.sink->records.size() + 64);
        char buf[160];
        for (const auto& rec : rt.sink->records) {
            std::snprintf(buf, sizeof buf, "%s,%u,%u,%u,%" PRId64 ",%.3f\n",
                          metrics::to_string(rec.kind), s.blockchain_size,
                          s.tx_per_vehicle, rec.node, rec.sim_time,
                          static_cast<double>(rec.elapsed_ns) / 1000.0);
            csv += buf;
        }
        r.metrics_csv = std::move(csv);
    }

    // Structured report (keys are sorted by the JSON library, so the byte
    // stream is deterministic for a deterministic end state).
    {
        json j;
        j["name"] = s.name;
        j["scenario"] = json::parse(scenario_to_json(s));
        j["quiescent"] = r.quiescent;
        j["clean"] = r.clean;
        j["sim_end_ms"] = r.end_ms;
        j["events"] = r.events;
        j["fingerprint"] = r.fingerprint;
        json per_rsi = json::array();
        for (size_t i = 0; i < rt.rsis.size(); ++i) {
            uint64_t txs = 0;
            for (const auto& b : rt.rsis[i]->chain().blocks)
                txs += b.ledger.size();
            per_rsi.push_back(json{{"node", rt.rsi_ids[i]},
                                   {"blocks", rt.rsis[i]->chain().size()},
                                   {"txs", txs},
                                   {"digest", to_hex(digests[i])},
                                   {"honest", rt.rsi_is_honest(i)}});
        }
        j["chains"] = json{{"identical", r.chains_identical},
                           {"honest_identical", r.honest_chains_identical},
                           {"valid", r.chains_valid},
                           {"digest", honest ? to_hex(*honest) : ""},
                           {"per_rsi", per_rsi}};
        json kinds;
        for (size_t k = 0; k < metrics::kKindCount; ++k) {
            kinds[metrics::to_string(static_cast<metrics::Kind>(k))] =
                json{{"all", summary_to_json(r.kinds[k].all)},
                     {"measured", summary_to_json(r.kinds[k].measured)}};
        }
        j["kinds"] = kinds;
        j["net"] = json{{"sent", r.net.total_sent()},
                        {"delivered", r.net.total_delivered()},
                        {"dropped", r.net.total_dropped()},
                        {"events", r.events}};
        j["rsi_counters"] = rsi_counters_json(r.rsi_totals);
        j["vehicle_counters"] = vehicle_counters_json(r.vehicle_totals);
        j["vehicles"] = json{{"total", rt.vehicles.size()},
                             {"active", r.vehicles_active},
                             {"outbox_leftover", r.outbox_leftover},
                             {"kui_consistent", r.kui_consistent}};
        r.report_json = j.dump(2) + "\n";
    }
    return r;
}

RunResult run(Runtime& rt) {
    bool quiescent = rt.sim->run_until_quiescent(rt.scenario.horizon_ms());
    return collect(rt, quiescent);
}

RunResult run_scenario(const Scenario& s, const std::string& out_dir) {
    Runtime rt = build_runtime(s);
    RunResult r = run(rt);
    write_file(out_dir, "metrics.csv", r.metrics_csv);
    write_file(out_dir, "report.json", r.report_json);
    return r;
}

std::vector<MerkleTiming> merkle_sweep(const std::vector<size_t>& leaf_counts,
                                       int rounds, uint64_t seed) {
    Rng rng(seed ^ 0x6a09e667f3bcc908ull);
    size_t max_leaves = 0;
    for (size_t n : leaf_counts) max_leaves = std::max(max_leaves, n);
    std::vector<PublicKey> keys(max_leaves);
    for (auto& k : keys) k = crypto::keypair_from_seed(rng.seed_bytes()).pk;

    std::vector<std::vector<int64_t>> times(leaf_counts.size());
    for (int round = 0; round < rounds; ++round) {
        for (size_t i = 0; i < leaf_counts.size(); ++i) {
            auto span = std::span<const PublicKey>(keys.data(), leaf_counts[i]);
            auto t0 = std::chrono::steady_clock::now();
            crypto::MerkleTree tree = crypto::merkle_build(span);
            auto t1 = std::chrono::steady_clock::now();
            if (tree.leaf_count() != leaf_counts[i])
                throw std::logic_error("merkle sweep: bad tree");
            times[i].push_back(
                std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0)
                    .count());
        }
    }
    std::vector<MerkleTiming> out;
    for (size_t i = 0; i < leaf_counts.size(); ++i) {
        auto& v = times[i];
        std::sort(v.begin(), v.end());
        out.push_back({leaf_counts[i], v[v.size() / 2]});
    }
    return out;
}

GridResult run_grid(const Scenario& base, const std::string& out_dir) {
    // Throwaway warmup run: first-run costs (allocator growth, library
    // init, cold caches) land here instead of inside the first cell.
    {
        Scenario warm = base;
        warm.name = "warmup";
        warm.blockchain_size = 8;
        warm.tx_per_vehicle = 5;
        warm.emitter_count = 4;
        warm.measure_joins = 2;
        warm.validate();
        Runtime rt = build_runtime(warm);
        (void)run(rt);
    }

    // Cells are built up front and advanced in lockstep slices rather than
    // run back-to-back. Effective machine speed on a shared host drifts on a
    // seconds scale by several percent — larger than the microsecond-level
    // effects under test — so a fair cross-cell comparison needs every
    // cell's samples spread over the same wall-clock span. Equal tx-phase
    // duration (interval = budget / count) lines the cells' measurement
    // windows up in phase time, and the slice loop interleaves their
    // execution at ~100 ms grain so slow minutes hit all cells alike.
    constexpr SimTime kTxPhaseBudgetMs = 20000;
    constexpr SimTime kSliceMs = 100;
    GridResult g;
    std::vector<Runtime> rts;
    rts.reserve(std::size(kGridSizes) * std::size(kGridTxCounts));
    for (uint32_t size : kGridSizes) {
        for (uint32_t txs : kGridTxCounts) {
            Scenario cell = base;
            cell.name =
                "cell_" + std::to_string(size) + "_" + std::to_string(txs);
            cell.blockchain_size = size;
            cell.tx_per_vehicle = txs;
            // Keep per-cell sample counts healthy: many emitters when each
            // produces few transactions, few when each produces many.
            cell.emitter_count = std::clamp<uint32_t>(4000 / txs, 10, 400);
            cell.emitter_count = std::min(cell.emitter_count, size);
            cell.tx_interval_ms = kTxPhaseBudgetMs / txs;
            cell.validate();
            GridCell gc;
            gc.scenario = cell;
            g.cells.push_back(std::move(gc));
            rts.push_back(build_runtime(cell));
        }
    }
    // The prologue (join storm populating each chain) is never measured, so
    // wall order does not matter there; bring every cell to the start of its
    // measurement window first.
    SimTime phase_len = 0;
    for (auto& rt : rts) {
        rt.sim->run_until_quiescent(rt.scenario.measure_start_ms());
        phase_len = std::max(phase_len, rt.scenario.horizon_ms() -
                                            rt.scenario.measure_start_ms());
    }
    for (SimTime phase = kSliceMs; phase < phase_len + kSliceMs;
         phase += kSliceMs)
        for (auto& rt : rts)
            rt.sim->run_until_quiescent(
                std::min(rt.scenario.measure_start_ms() + phase,
                         rt.scenario.horizon_ms()));
    for (size_t i = 0; i < rts.size(); ++i) {
        bool quiescent =
            rts[i].sim->run_until_quiescent(rts[i].scenario.horizon_ms());
        g.cells[i].result = collect(rts[i], quiescent);
        const std::string& name = g.cells[i].scenario.name;
        std::string cell_dir = out_dir.empty() ? "" : out_dir + "/" + name;
        write_file(cell_dir, "metrics.csv", g.cells[i].result.metrics_csv);
        write_file(cell_dir, "report.json", g.cells[i].result.report_json);
    }
    rts.clear();

    constexpr size_t kSizes = std::size(kGridSizes);
    constexpr size_t kTxs = std::size(kGridTxCounts);
    auto mean = [&](size_t si, size_t ti, metrics::Kind k) {
        return g.cells[si * kTxs + ti]
            .result.kinds[static_cast<size_t>(k)]
            .measured.mean;
    };
    auto non_decreasing = [](double earlier, double later) {
        return later >= earlier * (1.0 - kShapeSlackFrac);
    };

    g.all_clean = true;
    for (const auto& c : g.cells) g.all_clean = g.all_clean && c.result.clean;

    g.tx_add_monotone_in_tx = true;
    g.tx_add_monotone_in_size = true;
    g.tx_add_row_growth = true;
    g.tx_add_650_above_50 = true;
    g.block_add_exceeds_tx_add = true;
    for (size_t si = 0; si < kSizes; ++si)
        for (size_t ti = 0; ti + 1 < kTxs; ++ti)
            if (!non_decreasing(mean(si, ti, metrics::Kind::TxAdd),
                                mean(si, ti + 1, metrics::Kind::TxAdd)))
                g.tx_add_monotone_in_tx = false;
    for (size_t ti = 0; ti < kTxs; ++ti)
        for (size_t si = 0; si + 1 < kSizes; ++si)
            if (!non_decreasing(mean(si, ti, metrics::Kind::TxAdd),
                                mean(si + 1, ti, metrics::Kind::TxAdd)))
                g.tx_add_monotone_in_size = false;
    for (size_t si = 0; si < kSizes; ++si)
        if (mean(si, kTxs - 1, metrics::Kind::TxAdd) <=
            mean(si, 0, metrics::Kind::TxAdd))
            g.tx_add_row_growth = false;
    for (size_t ti = 0; ti < kTxs; ++ti)
        if (mean(kSizes - 1, ti, metrics::Kind::TxAdd) <=
            mean(0, ti, metrics::Kind::TxAdd))
            g.tx_add_650_above_50 = false;
    for (size_t si = 0; si < kSizes; ++si)
        for (size_t ti = 0; ti < kTxs; ++ti)
            if (mean(si, ti, metrics::Kind::BlockAdd) <=
                mean(si, ti, metrics::Kind::TxAdd))
                g.block_add_exceeds_tx_add = false;

    g.merkle = merkle_sweep({10, 100, 1000}, 15, base.seed);
    g.merkle_strictly_increasing = true;
    for (size_t i = 0; i + 1 < g.merkle.size(); ++i)
        if (g.merkle[i].median_ns >= g.merkle[i + 1].median_ns)
            g.merkle_strictly_increasing = false;

    // Cross-cell summary CSVs, one per metric kind, one row per cell.
    for (size_t k = 0; k < metrics::kKindCount; ++k) {
        std::string csv =
            "blockchain_size,tx_count,n,mean_us,stddev_us,ci95_us,min_us,"
            "max_us,ratio_vs_first\n";
        double first_mean = g.cells.front()
                                .result.kinds[k]
                                .measured.mean;
        char buf[240];
        for (const auto& c : g.cells) {
            const stats::Summary& m = c.result.kinds[k].measured;
            double ratio = first_mean > 0 ? m.mean / first_mean : 0.0;
            std::snprintf(buf, sizeof buf,
                          "%u,%u,%" PRIu64 ",%.3f,%.3f,%.3f,%.3f,%.3f,%.4f\n",
                          c.scenario.blockchain_size,
                          c.scenario.tx_per_vehicle, m.n, m.mean, m.stddev,
                          m.ci95, m.min, m.max, ratio);
            csv += buf;
        }
        std::string name =
            std::string("summary_") +
            metrics::to_string(static_cast<metrics::Kind>(k)) + ".csv";
        write_file(out_dir, name, csv);
    }

    // Structured grid summary.
    {
        json j;
        json cells = json::array();
        for (const auto& c : g.cells) {
            json kinds;
            for (size_t k = 0; k < metrics::kKindCount; ++k)
                kinds[metrics::to_string(static_cast<metrics::Kind>(k))] =
                    summary_to_json(c.result.kinds[k].measured);
            cells.push_back(
                json{{"name", c.scenario.name},
                     {"blockchain_size", c.scenario.blockchain_size},
                     {"tx_count", c.scenario.tx_per_vehicle},
                     {"clean", c.result.clean},
                     {"quiescent", c.result.quiescent},
                     {"chains_identical", c.result.chains_identical},
                     {"chain_digest", to_hex(c.result.chain_digest)},
                     {"kinds", kinds}});
        }
        j["cells"] = cells;
        j["all_clean"] = g.all_clean;
        j["shape"] = json{
            {"slack_frac", kShapeSlackFrac},
            {"tx_add_monotone_in_tx", g.tx_add_monotone_in_tx},
            {"tx_add_monotone_in_size", g.tx_add_monotone_in_size},
            {"tx_add_row_growth", g.tx_add_row_growth},
            {"tx_add_650_above_50", g.tx_add_650_above_50},
            {"block_add_exceeds_tx_add", g.block_add_exceeds_tx_add},
            {"merkle_strictly_increasing", g.merkle_strictly_increasing}};
        json merkle = json::array();
        for (const auto& m : g.merkle)
            merkle.push_back(
                json{{"leaves", m.leaves}, {"median_ns", m.median_ns}});
        j["merkle_sweep"] = merkle;
        g.summary_json = j.dump(2) + "\n";
        write_file(out_dir, "grid_summary.json", g.summary_json);
    }
    return g;
}

Scenario attack_base(uint64_t seed) {
    Scenario s;
    s.seed = seed;
    s.blockchain_size = 12;
    s.tx_per_vehicle = 20;
    s.emitter_count = 4;
    s.measure_joins = 4;
    s.rsi_count = 6;
    s.grid_cols = 3;
    s.grid_rows = 2;
    s.timing = metrics::TimingMode::None;
    return s;
}

AttackResult run_attack(AdversaryKind kind, Scenario base,
                        const std::string& out_dir) {
    if (kind == AdversaryKind::None)
        throw std::invalid_argument("run_attack needs a real adversary");
    base.adversary = kind;
    base.name = std::string("attack_") + to_string(kind) + "_seed" +
                std::to_string(base.seed);
    if (kind == AdversaryKind::Tamperer) {
        // The tamper topology hangs off the lattice edge; a single witness
        // suffices there, and the attack targets signatures, not presence.
        base.witness.required_reports = 1;
        if (base.grid_rows < 2)
            throw std::invalid_argument(
                "tamperer scenario needs at least two lattice rows");
    }

    Runtime rt = build_runtime(base);
    RunResult res = run(rt);

    AttackResult a;
    a.kind = kind;
    a.seed = base.seed;
    auto check = [&](const std::string& name, bool ok,
                     const std::string& detail) {
        a.checks.push_back({name, ok, detail});
    };

    check("quiescent", res.quiescent, "event queue drained");
    check("honest_chains_identical", res.honest_chains_identical,
          "same digest on every honest RSI");
    check("honest_chains_valid", res.chains_valid,
          "full revalidation of every honest chain");

    if (kind == AdversaryKind::Sybil) {
        const auto& attacker = rt.vehicle(*rt.attacker_vehicle);
        const auto& phantoms = attacker.phantom_pks();
        check("phantoms_sent",
              phantoms.size() == base.phantom_count,
              std::to_string(phantoms.size()) + " forged identities");
        bool none = true;
        for (auto* rsi : rt.rsis)
            for (const PublicKey& pk : phantoms)
                if (rsi->chain().index.contains(pk)) none = false;
        check("no_phantom_block", none,
              "no forged identity appears in any chain");
        check("attacker_own_join_legitimate",
              attacker.state() == node::VehicleNode::JoinState::Active,
              "the attacker's real identity still joins");
        check("honest_vehicles_unaffected", res.all_vehicles_active,
              "every vehicle ends Active");
        uint64_t pool = 0, expired = 0;
        for (auto* rsi : rt.rsis) {
            pool += rsi->pool_size();
            expired += rsi->counters().pool_expired;
        }
        check("pending_pool_drained", pool == 0,
              "unconfirmed claims leave the pool");
        check("phantoms_expired", expired >= base.phantom_count,
              std::to_string(expired) + " pool expiries");
    }

    if (kind == AdversaryKind::Tamperer) {
        const auto& subject = rt.vehicle(*rt.subject_vehicle);
        const auto& mule = rt.vehicle(*rt.mule_vehicle);
        uint64_t k = base.tx_per_vehicle;
        check("subject_emitted_while_isolated",
              subject.counters().txs_emitted == k &&
                  subject.counters().forwarded_mule >= 1,
              std::to_string(subject.counters().forwarded_mule) +
                  " transactions handed to the neighbor");
        check("tampered_relays_rejected",
              mule.counters().relayed >= 1 && res.rsi_totals.rejects_sent >= 1,
              "every altered relay bounced with BadSignature");
        bool originals = true;
        for (size_t i = 0; i < rt.rsis.size(); ++i) {
            const auto* block = ledger::find_block(
                rt.rsis[i]->chain(), subject.pk(), rt.sim->now_ms());
            if (!block || block->ledger.size() != k + 1) originals = false;
        }
        check("originals_present_in_order", originals,
              "signed originals land after reconnection, correct count");
        check("subject_outbox_flushed", subject.outbox_size() == 0,
              "no transaction stranded");
    }

    if (kind == AdversaryKind::MaliciousRsi) {
        uint64_t invalid = 0, parked = 0, dropped = 0;
        for (size_t i = 0; i < rt.rsis.size(); ++i) {
            if (!rt.rsi_is_honest(i)) continue;
            invalid += rt.rsis[i]->counters().invalid_peer_tx;
            parked += rt.rsis[i]->counters().reorder_parked_tx;
            dropped += rt.rsis[i]->counters().reorder_dropped_tx;
        }
        check("mutations_rejected_everywhere",
              invalid >= base.tx_per_vehicle,
              std::to_string(invalid) + " forged peer updates rejected");
        check("no_mutation_parked", parked == 0 && dropped == 0,
              "forged copies never occupy reorder slots");
        bool counts_ok = true;
        for (size_t e = 0; e < rt.emitters.size() && counts_ok; ++e) {
            const PublicKey& pk = rt.vehicle(rt.emitters[e]).pk();
            for (size_t i = 0; i < rt.rsis.size(); ++i) {
                if (!rt.rsi_is_honest(i)) continue;
                const auto* block = ledger::find_block(
                    rt.rsis[i]->chain(), pk, rt.sim->now_ms());
                if (!block ||
                    block->ledger.size() != base.tx_per_vehicle + 1)
                    counts_ok = false;
            }
        }
        check("originals_on_every_honest_chain", counts_ok,
              "each emitter's signed ledger is complete");
    }

    a.pass = true;
    for (const auto& c : a.checks) a.pass = a.pass && c.pass;

    // Merge the checks into the run report.
    json j = json::parse(res.report_json);
    json checks = json::array();
    for (const auto& c : a.checks)
        checks.push_back(
            json{{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    j["attack"] = json{{"kind", to_string(kind)},
                       {"seed", base.seed},
                       {"pass", a.pass},
                       {"checks", checks}};
    a.report_json = j.dump(2) + "\n";
    write_file(out_dir, "report.json", a.report_json);
    write_file(out_dir, "metrics.csv", res.metrics_csv);
    return a;
}

}  // namespace apc::harness
