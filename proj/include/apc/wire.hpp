#pragma once
//
// Canonical binary primitives: fixed field order, big-endian fixed-width
// integers, u32 length prefixes for variable byte strings, doubles as their
// IEEE-754 bit pattern. Reader is sticky-fail: any short read poisons it and
// subsequent reads return zeroes; callers check ok() && at_end() after
// decoding a full message.
//

#include <bit>
#include <cstring>

#include "apc/bytes.hpp"

namespace apc::wire {

class Writer {
  public:
    void u8(uint8_t x) { buf_.push_back(x); }

    void u16(uint16_t x) {
        buf_.push_back(static_cast<uint8_t>(x >> 8));
        buf_.push_back(static_cast<uint8_t>(x));
    }

    void u32(uint32_t x) {
        for (int s = 24; s >= 0; s -= 8)
            buf_.push_back(static_cast<uint8_t>(x >> s));
    }

    void u64(uint64_t x) {
        for (int s = 56; s >= 0; s -= 8)
            buf_.push_back(static_cast<uint8_t>(x >> s));
    }

    void i64(int64_t x) { u64(static_cast<uint64_t>(x)); }

    void f64(double x) { u64(std::bit_cast<uint64_t>(x)); }

    // Raw bytes, no length prefix (fixed-size fields).
    void raw(ByteSpan b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

    template <size_t N>
    void arr(const ByteArray<N>& a) {
        raw(a.span());
    }

    // u32 length prefix + bytes (variable-size fields).
    void blob(ByteSpan b) {
        u32(static_cast<uint32_t>(b.size()));
        raw(b);
    }

    const Bytes& bytes() const { return buf_; }
    Bytes take() { return std::move(buf_); }

  private:
    Bytes buf_;
};

class Reader {
  public:
    explicit Reader(ByteSpan data) : data_(data) {}

    uint8_t u8() {
        if (!need(1)) return 0;
        return data_[pos_++];
    }

    uint16_t u16() {
        if (!need(2)) return 0;
        uint16_t x = static_cast<uint16_t>(data_[pos_] << 8 | data_[pos_ + 1]);
        pos_ += 2;
        return x;
    }

    uint32_t u32() {
        if (!need(4)) return 0;
        uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x = x << 8 | data_[pos_ + i];
        pos_ += 4;
        return x;
    }

    uint64_t u64() {
        if (!need(8)) return 0;
        uint64_t x = 0;
        for (int i = 0; i < 8; ++i) x = x << 8 | data_[pos_ + i];
        pos_ += 8;
        return x;
    }

    int64_t i64() { return static_cast<int64_t>(u64()); }

    double f64() { return std::bit_cast<double>(u64()); }

    template <size_t N>
    ByteArray<N> arr() {
        ByteArray<N> out;
        if (!need(N)) return out;
        std::memcpy(out.v.data(), data_.data() + pos_, N);
        pos_ += N;
        return out;
    }

    template <typename T>
    T fixed() {
        T out;
        out.v = arr<T::size()>().v;
        return out;
    }

    Bytes blob() {
        uint32_t n = u32();
        if (!need(n)) return {};
        Bytes out(data_.begin() + pos_, data_.begin() + pos_ + n);
        pos_ += n;
        return out;
    }

    bool ok() const { return ok_; }
    bool at_end() const { return pos_ == data_.size(); }
    bool complete() const { return ok_ && at_end(); }
    size_t remaining() const { return data_.size() - pos_; }

  private:
    bool need(size_t n) {
        if (!ok_ || data_.size() - pos_ < n) {
            ok_ = false;
            return false;
        }
        return true;
    }

    ByteSpan data_;
    size_t pos_ = 0;
    bool ok_ = true;
};

}  // namespace apc::wire
