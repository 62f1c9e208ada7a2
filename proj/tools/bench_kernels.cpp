//
// Compares the serial reference kernels against their OpenMP counterparts:
// Merkle construction over an active key set, and full-chain validation.
// Parity is asserted on every round (identical root, identical verdict);
// the exit status is nonzero on any disagreement, so this doubles as a
// stress check for the parallel paths.
//

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <vector>

#include "CLI11.hpp"
#include "apc/encoding.hpp"
#include "apc/ledger.hpp"
#include "apc/merkle.hpp"
#include "apc/rng.hpp"

#ifdef APC_HAVE_OPENMP
#include <omp.h>
#endif

using namespace apc;

namespace {

template <typename F>
int64_t median_ns(int rounds, F&& f) {
    std::vector<int64_t> t;
    t.reserve(rounds);
    for (int r = 0; r < rounds; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        f();
        auto t1 = std::chrono::steady_clock::now();
        t.push_back(
            std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0)
                .count());
    }
    std::sort(t.begin(), t.end());
    return t[t.size() / 2];
}

ledger::Blockchain build_chain(size_t blocks, size_t txs_per_block, Rng& rng) {
    crypto::KeyPair authority =
        crypto::keypair_from_seed(rng.seed_bytes());
    const ledger::GeoTag geo{-30.0, -51.2};
    ledger::Blockchain chain = ledger::make_chain(authority, geo, 0);
    SimTime now = 1000;
    for (size_t b = 0; b < blocks; ++b) {
        crypto::KeyPair kp = crypto::keypair_from_seed(rng.seed_bytes());
        ledger::DeviceBlock block =
            ledger::make_block(chain.tip().header, kp, geo, 1, 3600000, now);
        for (size_t i = 0; i < txs_per_block; ++i) {
            ledger::Transaction tx;
            tx.prev_tx_hash = block.tail_digest();
            tx.payload = Bytes(64, static_cast<uint8_t>(i));
            tx.geotag = geo;
            tx.access_level = 1;
            tx.timestamp = ++now;
            tx.signature = crypto::sign(kp.sk, enc::tx_signing_bytes(tx));
            if (ledger::append_transaction(
                    block, std::make_shared<ledger::Transaction>(tx), now)) {
                std::fprintf(stderr, "chain construction failed\n");
                std::exit(2);
            }
        }
        ledger::append_block(chain, std::move(block));
        ++now;
    }
    return chain;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bench_kernels: serial reference vs OpenMP kernels"};
    int rounds = 5;
    app.add_option("--rounds", rounds, "Timing rounds per configuration")
        ->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

#ifdef APC_HAVE_OPENMP
    std::printf("OpenMP enabled, max %d threads\n", omp_get_max_threads());
#else
    std::printf("OpenMP not available; parallel kernels fall back to serial\n");
#endif

    Rng rng(20260825);
    bool parity = true;

    std::printf("\n%-16s %10s %14s %14s %9s\n", "merkle_build", "leaves",
                "serial_ns", "parallel_ns", "speedup");
    for (size_t leaves : {256u, 1024u, 4096u, 16384u}) {
        std::vector<PublicKey> keys(leaves);
        for (auto& k : keys)
            k = crypto::keypair_from_seed(rng.seed_bytes()).pk;
        auto span = std::span<const PublicKey>(keys);
        crypto::MerkleTree ref = crypto::merkle_build_serial(span);
        crypto::MerkleTree par = crypto::merkle_build_parallel(span);
        if (ref.root() != par.root()) {
            std::fprintf(stderr, "parity failure: merkle root, %zu leaves\n",
                         leaves);
            parity = false;
        }
        int64_t ts = median_ns(rounds, [&] {
            if (crypto::merkle_build_serial(span).root() != ref.root())
                parity = false;
        });
        int64_t tp = median_ns(rounds, [&] {
            if (crypto::merkle_build_parallel(span).root() != ref.root())
                parity = false;
        });
        std::printf("%-16s %10zu %14" PRId64 " %14" PRId64 " %8.2fx\n", "",
                    leaves, ts, tp,
                    tp > 0 ? static_cast<double>(ts) / tp : 0.0);
    }

    std::printf("\n%-16s %10s %14s %14s %9s\n", "validate_chain",
                "blocks x txs", "serial_ns", "parallel_ns", "speedup");
    struct Shape {
        size_t blocks, txs;
    };
    for (Shape shape : {Shape{32, 32}, Shape{128, 8}, Shape{512, 2}}) {
        ledger::Blockchain chain = build_chain(shape.blocks, shape.txs, rng);
        bool ref = ledger::validate_chain_serial(chain, nullptr);
        if (!ref || !ledger::validate_chain_parallel(chain, nullptr)) {
            std::fprintf(stderr, "parity failure: chain %zux%zu\n",
                         shape.blocks, shape.txs);
            parity = false;
        }
        int64_t ts = median_ns(rounds, [&] {
            if (ledger::validate_chain_serial(chain, nullptr) != ref)
                parity = false;
        });
        int64_t tp = median_ns(rounds, [&] {
            if (ledger::validate_chain_parallel(chain, nullptr) != ref)
                parity = false;
        });
        char label[32];
        std::snprintf(label, sizeof label, "%zu x %zu", shape.blocks,
                      shape.txs);
        std::printf("%-16s %10s %14" PRId64 " %14" PRId64 " %8.2fx\n", "",
                    label, ts, tp,
                    tp > 0 ? static_cast<double>(ts) / tp : 0.0);
    }

    std::printf("\nparity: %s\n", parity ? "ok" : "FAILED");
    return parity ? 0 : 1;
}
