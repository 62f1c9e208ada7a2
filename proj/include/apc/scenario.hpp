#pragma once
//
// Declarative description of one simulation run: population sizes, lattice
// geometry, protocol timers, link model, measurement knobs, and an optional
// adversary. Scenarios load from JSON and accept `key=value` overrides so
// the CLI can tweak any field without editing files. Parsing is strict —
// unknown keys are errors, never silently ignored.
//
// The schedule a scenario implies is phased so that each metric is sampled
// at a controlled chain size:
//
//   [0 .. prepop_end)        blockchain_size vehicles join (untimed warmup)
//   [measure_start .. tx_end) emitters produce tx_per_vehicle transactions
//   [tx_end .. kui_end)       kui_rounds Merkle rebuild rounds
//   [kui_end .. joins_end)    measure_joins fresh vehicles join (timed)
//   [.. horizon)              retries, acks, and gossip drain out
//
// Summaries only use records whose sim time falls at or after measure_start,
// so warmup never pollutes a cell's statistics.
//

#include <cstdint>
#include <string>

#include "apc/metrics.hpp"
#include "apc/node.hpp"
#include "apc/simnet.hpp"

namespace apc::harness {

enum class AdversaryKind : uint8_t { None = 0, Sybil, Tamperer, MaliciousRsi };
enum class CacheMode : uint8_t { Shared = 0, PerNode, Off };

const char* to_string(AdversaryKind k);
const char* to_string(CacheMode m);

struct Scenario {
    std::string name = "cell";
    uint64_t seed = 1;

    // Population: the two sweep axes plus the measurement cohorts.
    uint32_t blockchain_size = 50;  // device blocks created before measuring
    uint32_t tx_per_vehicle = 10;   // timed transactions per emitter
    uint32_t emitter_count = 5;     // vehicles that emit timed transactions
    uint32_t measure_joins = 32;    // timed joins after the transaction phase

    // Geometry: RSIs on a cols x rows lattice; vehicles uniform in its hull.
    uint32_t rsi_count = 15;
    uint32_t grid_cols = 5;
    uint32_t grid_rows = 3;
    double rsi_spacing_m = 400.0;

    // Protocol policies and timers.
    node::WitnessPolicy witness{/*required_reports=*/2,
                                /*max_queries=*/8,
                                /*query_radius_m=*/600.0,
                                /*confirm_radius_m=*/50.0,
                                /*pool_timeout_ms=*/4000};
    SimTime kui_period_ms = 2000;
    uint32_t kui_rounds = 3;
    SimTime expiration_window_ms = 3600000;  // default: no rotation mid-run
    SimTime retry_interval_ms = 1000;
    uint32_t payload_bytes = 64;
    uint8_t access_level = 1;

    // Schedule cadence.
    SimTime join_stagger_ms = 40;
    SimTime tx_interval_ms = 20;
    SimTime vehicle_tick_ms = 500;
    SimTime rsi_tick_ms = 600;
    SimTime beacon_interval_ms = 1000;
    SimTime settle_ms = 2000;         // quiet gap between phases
    SimTime horizon_slack_ms = 10000;

    sim::LinkModel link;  // defaults in simnet.hpp

    // Measurement.
    metrics::TimingMode timing = metrics::TimingMode::Cpu;
    CacheMode cache_mode = CacheMode::Shared;

    // Adversary.
    AdversaryKind adversary = AdversaryKind::None;
    uint32_t phantom_count = 6;  // sybil: forged identities per attacker

    // Derived schedule boundaries (milliseconds of sim time).
    SimTime bootstrap_start_ms() const { return 500; }
    SimTime prepop_end_ms() const;
    SimTime measure_start_ms() const { return prepop_end_ms(); }
    SimTime tx_phase_end_ms() const;
    SimTime kui_end_ms() const;
    SimTime joins_end_ms() const;
    SimTime horizon_ms() const;

    // Throws std::invalid_argument when fields are inconsistent.
    void validate() const;
};

// Strict JSON round-trip. Absent keys keep their defaults; unknown keys and
// type mismatches throw std::invalid_argument.
Scenario scenario_from_json(const std::string& text);
std::string scenario_to_json(const Scenario& s);
Scenario load_scenario_file(const std::string& path);

// Dotted-path override, e.g. "blockchain_size=650" or "link.jitter_frac=0"
// or "timing=none". Throws std::invalid_argument on unknown keys/bad values.
void apply_override(Scenario& s, const std::string& expr);

}  // namespace apc::harness
