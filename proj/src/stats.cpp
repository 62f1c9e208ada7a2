#include "apc/stats.hpp"

#include <cmath>

#include "apc/metrics.hpp"

namespace apc::metrics {

const char* to_string(Kind k) {
    switch (k) {
        case Kind::BlockAdd: return "block_add";
        case Kind::TxAdd: return "tx_add";
        case Kind::PeerBlockUpdate: return "peer_block_update";
        case Kind::PeerTxUpdate: return "peer_tx_update";
        case Kind::MerkleBuild: return "merkle_build";
    }
    return "unknown";
}

double Welford::stddev() const { return std::sqrt(variance()); }

double Welford::ci95() const {
    if (n < 2) return 0.0;
    return stats::t95(n) * stddev() / std::sqrt(static_cast<double>(n));
}

}  // namespace apc::metrics

namespace apc::stats {

double t95(uint64_t n) {
    // Two-sided 95% Student-t critical values; converges to the normal
    // quantile well before n = 30.
    static const double table[] = {0,     12.71, 4.303, 3.182, 2.776, 2.571,
                                   2.447, 2.365, 2.306, 2.262, 2.228, 2.201,
                                   2.179, 2.160, 2.145, 2.131, 2.120, 2.110,
                                   2.101, 2.093, 2.086, 2.080, 2.074, 2.069,
                                   2.064, 2.060, 2.056, 2.052, 2.048, 2.045};
    if (n < 2) return 0.0;
    uint64_t df = n - 1;
    if (df < std::size(table)) return table[df];
    if (df < 40) return 2.03;
    if (df < 60) return 2.01;
    if (df < 120) return 1.99;
    return 1.96;
}

Summary summarize(const std::vector<double>& xs) {
    Summary s;
    s.n = xs.size();
    if (xs.empty()) return s;
    metrics::Welford w;
    for (double x : xs) w.add(x);
    s.mean = w.mean;
    s.stddev = w.stddev();
    s.ci95 = w.ci95();
    s.min = w.min;
    s.max = w.max;
    return s;
}

}  // namespace apc::stats
