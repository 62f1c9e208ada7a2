#pragma once
//
// Turns a Scenario into a running simulation and distills the outcome into
// a deterministic structured report plus a per-operation timing CSV.
//
// Three drivers build on one another:
//   run_scenario  one cell: build, run to quiescence, summarize, write files
//   run_grid      the 3x3 sweep over blockchain size x transaction count
//   run_attack    adversarial runs with explicit pass/fail checks
//
// build_runtime/run are exposed separately so tests can assemble a runtime,
// bolt extra nodes or partitions onto it, and only then let it run.
//

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "apc/scenario.hpp"
#include "apc/stats.hpp"

namespace apc::harness {

// One constructed simulation universe, ready to run.
struct Runtime {
    Scenario scenario;
    crypto::KeyPair authority;
    node::NodeConfig node_cfg;
    std::unique_ptr<metrics::VectorSink> sink;
    std::vector<std::unique_ptr<crypto::SigCache>> caches;
    std::unique_ptr<sim::Simulation> sim;

    std::vector<sim::NodeId> rsi_ids;
    std::vector<sim::NodeId> vehicle_ids;
    std::vector<node::RsiNode*> rsis;
    std::vector<node::VehicleNode*> vehicles;

    std::vector<size_t> emitters;              // vehicle indices
    std::optional<size_t> malicious_rsi;       // rsi index
    std::optional<size_t> attacker_vehicle;    // sybil
    std::optional<size_t> subject_vehicle;     // tamperer: isolated emitter
    std::optional<size_t> mule_vehicle;        // tamperer: relaying neighbor

    node::RsiNode& rsi(size_t i) { return *rsis[i]; }
    node::VehicleNode& vehicle(size_t i) { return *vehicles[i]; }
    bool rsi_is_honest(size_t i) const {
        return !malicious_rsi || *malicious_rsi != i;
    }
};

struct KindSummary {
    stats::Summary all;       // every record of this kind
    stats::Summary measured;  // records inside the kind's measurement window
};

struct RunResult {
    bool quiescent = false;
    bool chains_identical = false;         // across every RSI
    bool honest_chains_identical = false;  // excluding a malicious RSI
    bool chains_valid = false;             // honest chains fully validate
    bool kui_consistent = false;           // no same-epoch root mismatches
    bool all_vehicles_active = false;
    bool clean = false;  // all of the above plus empty outboxes
    SimTime end_ms = 0;
    uint64_t events = 0;
    Digest chain_digest;      // shared honest digest when identical
    std::string fingerprint;  // hex digest over the timing-free end state
    KindSummary kinds[metrics::kKindCount];
    node::RsiNode::Counters rsi_totals;
    node::VehicleNode::Counters vehicle_totals;
    uint64_t vehicles_active = 0;
    uint64_t outbox_leftover = 0;
    sim::Counters net;
    std::string report_json;  // deterministic structured summary
    std::string metrics_csv;  // kind,blockchain_size,tx_count,node,sim_time,elapsed_us
};

Runtime build_runtime(const Scenario& s);
RunResult run(Runtime& rt);

// Build + run + write metrics.csv and report.json under out_dir (created if
// needed). An empty out_dir skips the files.
RunResult run_scenario(const Scenario& s, const std::string& out_dir);

struct GridCell {
    Scenario scenario;
    RunResult result;
};

// Merkle-root build timing at a given leaf count; medians over interleaved
// rounds so clock drift hits every size equally.
struct MerkleTiming {
    size_t leaves = 0;
    int64_t median_ns = 0;
};

// Cross-cell mean comparisons tolerate this much relative slack: cells run
// back to back and CPU frequency wobble between them shifts whole cells by
// a percent or two, while the scaling signal under test is several times
// larger. Strict (slack-free) checks cover the endpoint-to-endpoint growth.
inline constexpr double kShapeSlackFrac = 0.025;

struct GridResult {
    std::vector<GridCell> cells;  // size-major, tx-minor order
    bool all_clean = false;
    // Shape of the measured means (only meaningful with CPU timing).
    // Adjacent-cell monotonicity allows kShapeSlackFrac; the endpoint
    // checks (10 -> 1,000 growth per row, 650-block series above the
    // 50-block series) are strict.
    bool tx_add_monotone_in_tx = false;
    bool tx_add_monotone_in_size = false;
    bool tx_add_row_growth = false;
    bool tx_add_650_above_50 = false;
    bool block_add_exceeds_tx_add = false;
    std::vector<MerkleTiming> merkle;
    bool merkle_strictly_increasing = false;
    std::string summary_json;
};

inline constexpr uint32_t kGridSizes[] = {50, 100, 650};
inline constexpr uint32_t kGridTxCounts[] = {10, 100, 1000};

// Runs all 9 cells of the sweep; per-cell outputs land in
// out_dir/<cell name>/ and the cross-cell summaries (one CSV per metric
// kind plus grid_summary.json) in out_dir itself.
GridResult run_grid(const Scenario& base, const std::string& out_dir);

struct AttackCheck {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct AttackResult {
    AdversaryKind kind = AdversaryKind::None;
    uint64_t seed = 0;
    bool pass = false;
    std::vector<AttackCheck> checks;
    std::string report_json;
};

// Configures `base` for the given adversary, runs it, and evaluates the
// attack's pass/fail conditions against the end state.
AttackResult run_attack(AdversaryKind kind, Scenario base,
                        const std::string& out_dir);

// Compact topology sized for the adversarial suites: six RSIs on a 3x2
// lattice, a dozen pre-populated devices, timing-free (deterministic) output.
Scenario attack_base(uint64_t seed);

std::vector<MerkleTiming> merkle_sweep(const std::vector<size_t>& leaf_counts,
                                       int rounds, uint64_t seed);

}  // namespace apc::harness
