#pragma once
//
// Structured timing records emitted by node state machines. Timings bracket
// local computation only (validate + append + encode); simulated link
// latency never enters a record. A `None` timing mode zeroes every elapsed
// field so byte-identical output can be asserted across runs.
//

#include <chrono>
#include <cstdio>
#include <vector>

#include "apc/bytes.hpp"

namespace apc::metrics {

enum class Kind : uint8_t {
    BlockAdd = 0,
    TxAdd = 1,
    PeerBlockUpdate = 2,
    PeerTxUpdate = 3,
    MerkleBuild = 4,
};
constexpr size_t kKindCount = 5;

const char* to_string(Kind k);

struct Record {
    Kind kind;
    uint32_t node = 0;
    uint64_t chain_size = 0;  // blocks in the chain when measured
    SimTime sim_time = 0;     // milliseconds
    int64_t elapsed_ns = 0;   // thread CPU time around local computation
};

class Sink {
  public:
    virtual ~Sink() = default;
    virtual void record(const Record& r) = 0;
};

class VectorSink : public Sink {
  public:
    void record(const Record& r) override { records.push_back(r); }
    std::vector<Record> records;
};

// Streaming per-kind mean/variance (Welford) so grid cells never retain raw
// samples.
struct Welford {
    uint64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;
    double min = 0.0;
    double max = 0.0;

    void add(double x) {
        if (n == 0) {
            min = max = x;
        } else {
            if (x < min) min = x;
            if (x > max) max = x;
        }
        ++n;
        double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }

    double variance() const {
        return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
    }
    double stddev() const;
    // Half-width of the 95% confidence interval for the mean.
    double ci95() const;
};

class WelfordSink : public Sink {
  public:
    void record(const Record& r) override {
        by_kind[static_cast<size_t>(r.kind)].add(
            static_cast<double>(r.elapsed_ns) / 1000.0);  // microseconds
    }
    Welford by_kind[kKindCount];
};

// Fans one record stream out to several sinks.
class TeeSink : public Sink {
  public:
    void add(Sink* s) { sinks_.push_back(s); }
    void record(const Record& r) override {
        for (Sink* s : sinks_) s->record(r);
    }

  private:
    std::vector<Sink*> sinks_;
};

enum class TimingMode : uint8_t {
    Cpu,   // thread CPU time: scheduler interference never inflates a sample
    None,  // elapsed recorded as zero (deterministic output)
};

// Brackets one local computation. Thread CPU time is used rather than a
// wall clock so that preemption between start and stop (common on shared
// machines, and milliseconds long) cannot land inside a microsecond-scale
// sample; the ~0.2 us clock_gettime cost is a constant offset on every
// sample and therefore neutral to cross-cell comparisons.
class OpTimer {
  public:
    explicit OpTimer(TimingMode mode) : mode_(mode) {
        if (mode_ == TimingMode::Cpu) start_ = now_ns();
    }

    int64_t stop() const {
        if (mode_ != TimingMode::Cpu) return 0;
        return now_ns() - start_;
    }

  private:
    static int64_t now_ns() {
        timespec ts;
        clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
        return static_cast<int64_t>(ts.tv_sec) * 1000000000 + ts.tv_nsec;
    }

    TimingMode mode_;
    int64_t start_ = 0;
};

}  // namespace apc::metrics
