#pragma once
//
// Small statistics helpers for the harness summary tables.
//

#include <cstdint>
#include <vector>

namespace apc::stats {

struct Summary {
    uint64_t n = 0;
    double mean = 0.0;
    double stddev = 0.0;
    double ci95 = 0.0;  // half-width of the 95% CI for the mean
    double min = 0.0;
    double max = 0.0;
};

Summary summarize(const std::vector<double>& xs);

// z/t multiplier for a two-sided 95% interval with n samples.
double t95(uint64_t n);

}  // namespace apc::stats
