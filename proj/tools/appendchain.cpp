//
// Command-line driver for the simulation harness.
//
//   appendchain run [scenario.json] [--seed N] [--out DIR] [--set k=v]...
//   appendchain grid              [--seed N] [--out DIR] [--set k=v]...
//   appendchain attack --kind K   [--seed N] [--seeds M] [--out DIR] [--set]...
//   appendchain defaults          print the default scenario as JSON
//
// Every Scenario field can be overridden with --set (dotted paths reach
// nested objects, e.g. --set link.jitter_frac=0). Exit status is nonzero
// when any run-level assertion fails.
//

#include <cinttypes>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "apc/runner.hpp"

namespace harness = apc::harness;
namespace metrics = apc::metrics;
using harness::AdversaryKind;
using harness::Scenario;

namespace {

Scenario assemble(const std::string& file, std::optional<uint64_t> seed,
                  const std::vector<std::string>& sets) {
    Scenario s = file.empty() ? Scenario{} : harness::load_scenario_file(file);
    for (const std::string& expr : sets) harness::apply_override(s, expr);
    if (seed) s.seed = *seed;
    s.validate();
    return s;
}

const char* yesno(bool b) { return b ? "yes" : "no"; }

void print_kind_table(const harness::RunResult& r) {
    std::printf("  %-18s %8s %12s %10s %10s %12s\n", "kind", "n", "mean_us",
                "ci95_us", "min_us", "max_us");
    for (size_t k = 0; k < metrics::kKindCount; ++k) {
        const apc::stats::Summary& m = r.kinds[k].measured;
        std::printf("  %-18s %8" PRIu64 " %12.3f %10.3f %10.3f %12.3f\n",
                    metrics::to_string(static_cast<metrics::Kind>(k)), m.n,
                    m.mean, m.ci95, m.min, m.max);
    }
}

int cmd_run(const Scenario& s, const std::string& out_dir) {
    harness::RunResult r = harness::run_scenario(s, out_dir);
    std::printf("scenario %s  seed %" PRIu64 "\n", s.name.c_str(), s.seed);
    std::printf("  quiescent=%s at %" PRId64 " ms, %" PRIu64 " events\n",
                yesno(r.quiescent), r.end_ms, r.events);
    std::printf("  chains: identical=%s valid=%s digest=%.16s...\n",
                yesno(r.chains_identical), yesno(r.chains_valid),
                apc::to_hex(r.chain_digest).c_str());
    std::printf("  vehicles: %" PRIu64 " active, outbox leftover %" PRIu64
                "\n",
                r.vehicles_active, r.outbox_leftover);
    print_kind_table(r);
    std::printf("  fingerprint %s\n", r.fingerprint.c_str());
    std::printf("  clean: %s\n", yesno(r.clean));
    if (!out_dir.empty())
        std::printf("  wrote %s/{metrics.csv,report.json}\n", out_dir.c_str());
    return r.clean ? 0 : 1;
}

int cmd_grid(const Scenario& base, const std::string& out_dir) {
    harness::GridResult g = harness::run_grid(base, out_dir);
    std::printf("%10s %8s %7s %14s %14s  %s\n", "size", "txs", "clean",
                "tx_add_us", "block_add_us", "digest");
    for (const auto& c : g.cells) {
        const auto& tx =
            c.result.kinds[static_cast<size_t>(metrics::Kind::TxAdd)].measured;
        const auto& blk =
            c.result.kinds[static_cast<size_t>(metrics::Kind::BlockAdd)]
                .measured;
        std::printf("%10u %8u %7s %14.3f %14.3f  %.16s...\n",
                    c.scenario.blockchain_size, c.scenario.tx_per_vehicle,
                    yesno(c.result.clean), tx.mean, blk.mean,
                    apc::to_hex(c.result.chain_digest).c_str());
    }
    std::printf("merkle sweep (median ns):");
    for (const auto& m : g.merkle)
        std::printf("  %zu leaves: %" PRId64, m.leaves, m.median_ns);
    std::printf("\n");
    std::printf("shape: tx_add/tx=%s tx_add/size=%s row_growth=%s "
                "650_above_50=%s block>tx=%s merkle=%s\n",
                yesno(g.tx_add_monotone_in_tx),
                yesno(g.tx_add_monotone_in_size),
                yesno(g.tx_add_row_growth), yesno(g.tx_add_650_above_50),
                yesno(g.block_add_exceeds_tx_add),
                yesno(g.merkle_strictly_increasing));
    bool shape_ok = base.timing != metrics::TimingMode::Cpu ||
                    (g.tx_add_monotone_in_tx && g.tx_add_monotone_in_size &&
                     g.tx_add_row_growth && g.tx_add_650_above_50 &&
                     g.block_add_exceeds_tx_add &&
                     g.merkle_strictly_increasing);
    std::printf("all cells clean: %s\n", yesno(g.all_clean));
    if (!out_dir.empty())
        std::printf("wrote %s/{summary_*.csv,grid_summary.json} and per-cell "
                    "subdirectories\n",
                    out_dir.c_str());
    return (g.all_clean && shape_ok) ? 0 : 1;
}

int cmd_attack(const std::vector<AdversaryKind>& kinds, uint64_t first_seed,
               uint32_t seed_count, Scenario base,
               const std::string& out_dir) {
    bool all_pass = true;
    for (AdversaryKind kind : kinds) {
        for (uint32_t i = 0; i < seed_count; ++i) {
            Scenario s = base;
            s.seed = first_seed + i;
            std::string dir =
                out_dir.empty()
                    ? ""
                    : out_dir + "/attack_" + harness::to_string(kind) +
                          "_seed" + std::to_string(s.seed);
            harness::AttackResult a = harness::run_attack(kind, s, dir);
            std::printf("attack %-13s seed %-4" PRIu64 " %s\n",
                        harness::to_string(kind), s.seed,
                        a.pass ? "PASS" : "FAIL");
            for (const auto& c : a.checks)
                std::printf("  [%s] %-32s %s\n", c.pass ? "ok" : "FAIL",
                            c.name.c_str(), c.detail.c_str());
            all_pass = all_pass && a.pass;
        }
    }
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"appendchain: appendable-block ledger simulation harness"};
    app.require_subcommand(1);

    std::string scenario_file;
    std::string out_dir;
    std::optional<uint64_t> seed;
    std::vector<std::string> sets;
    std::string attack_kind = "all";
    uint32_t seed_count = 1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "Override the scenario seed");
        cmd->add_option("--out", out_dir,
                        "Directory for reports/CSVs (omit to skip files)");
        cmd->add_option("--set", sets,
                        "Override a scenario field, e.g. --set "
                        "blockchain_size=650 or --set link.jitter_frac=0");
    };

    CLI::App* c_run = app.add_subcommand("run", "Run one scenario");
    c_run->add_option("scenario", scenario_file, "Scenario JSON file")
        ->check(CLI::ExistingFile);
    add_common(c_run);

    CLI::App* c_grid = app.add_subcommand(
        "grid", "Run the 3x3 blockchain-size x tx-count sweep");
    add_common(c_grid);

    CLI::App* c_attack =
        app.add_subcommand("attack", "Run adversarial scenarios");
    c_attack
        ->add_option("--kind", attack_kind,
                     "sybil | tamperer | malicious_rsi | all")
        ->check(CLI::IsMember({"sybil", "tamperer", "malicious_rsi", "all"}));
    c_attack->add_option("--seeds", seed_count,
                         "Number of consecutive seeds to run");
    add_common(c_attack);

    CLI::App* c_defaults = app.add_subcommand(
        "defaults", "Print the default scenario as JSON and exit");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_defaults->parsed()) {
            std::fputs(harness::scenario_to_json(Scenario{}).c_str(), stdout);
            return 0;
        }
        if (c_run->parsed())
            return cmd_run(assemble(scenario_file, seed, sets), out_dir);
        if (c_grid->parsed())
            return cmd_grid(assemble("", seed, sets), out_dir);
        if (c_attack->parsed()) {
            Scenario base = harness::attack_base(seed.value_or(1));
            for (const std::string& expr : sets)
                harness::apply_override(base, expr);
            base.validate();
            std::vector<AdversaryKind> kinds;
            if (attack_kind == "all")
                kinds = {AdversaryKind::Sybil, AdversaryKind::Tamperer,
                         AdversaryKind::MaliciousRsi};
            else if (attack_kind == "sybil")
                kinds = {AdversaryKind::Sybil};
            else if (attack_kind == "tamperer")
                kinds = {AdversaryKind::Tamperer};
            else
                kinds = {AdversaryKind::MaliciousRsi};
            return cmd_attack(kinds, base.seed, seed_count, base, out_dir);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
