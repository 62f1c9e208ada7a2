#pragma once
//
// Seeded PRNG with a platform-stable sequence (xoshiro256** seeded via
// splitmix64). std::mt19937 would work, but distribution implementations
// differ across standard libraries and determinism here must hold
// bit-for-bit on any platform.
//

#include <array>
#include <cstdint>

#include "apc/bytes.hpp"

namespace apc {

class Rng {
  public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& s : s_) s = splitmix64(x);
    }

    uint64_t next() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1). 53-bit mantissa, exactly reproducible.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform integer in [lo, hi] via rejection-free Lemire reduction;
    // slight modulo bias is irrelevant for simulation jitter but the result
    // is deterministic, which is what matters.
    uint64_t range(uint64_t lo, uint64_t hi) {
        const uint64_t span = hi - lo + 1;
        return lo + (span == 0 ? next() : next() % span);
    }

    // True with probability p, decided on integer thresholds.
    bool chance(double p) {
        if (p <= 0.0) return false;
        if (p >= 1.0) return true;
        return uniform() < p;
    }

    void fill(uint8_t* out, size_t n) {
        size_t i = 0;
        while (i < n) {
            uint64_t x = next();
            for (int b = 0; b < 8 && i < n; ++b, ++i)
                out[i] = static_cast<uint8_t>(x >> (8 * b));
        }
    }

    std::array<uint8_t, 32> seed_bytes() {
        std::array<uint8_t, 32> out;
        fill(out.data(), out.size());
        return out;
    }

    // Independent child stream; forking never perturbs this stream.
    Rng fork(uint64_t stream_id) const {
        uint64_t x = s_[0] ^ (0x9e3779b97f4a7c15ull * (stream_id + 1));
        Rng child(0);
        for (auto& s : child.s_) s = splitmix64(x);
        return child;
    }

  private:
    static uint64_t rotl(uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::array<uint64_t, 4> s_;
};

}  // namespace apc
