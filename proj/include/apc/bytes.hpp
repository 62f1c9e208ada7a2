#pragma once
//
// Fixed-size byte value types shared across the library, plus hex helpers.
//

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace apc {

using Bytes = std::vector<uint8_t>;
using ByteSpan = std::span<const uint8_t>;

// Simulation timestamps are integer milliseconds.
using SimTime = int64_t;

template <size_t N>
struct ByteArray {
    std::array<uint8_t, N> v{};

    auto operator<=>(const ByteArray&) const = default;

    bool is_zero() const {
        for (uint8_t b : v)
            if (b != 0) return false;
        return true;
    }

    ByteSpan span() const { return ByteSpan(v.data(), v.size()); }
    static constexpr size_t size() { return N; }
};

struct Digest : ByteArray<32> {};
struct PublicKey : ByteArray<32> {};
struct Signature : ByteArray<64> {};

// Ed25519 secret key (seed || public key, libsodium layout).
struct PrivateKey : ByteArray<64> {};

std::string to_hex(ByteSpan data);
std::optional<Bytes> from_hex(const std::string& hex);

template <size_t N>
std::string to_hex(const ByteArray<N>& a) {
    return to_hex(a.span());
}

template <typename T>
std::optional<T> array_from_hex(const std::string& hex) {
    auto raw = from_hex(hex);
    if (!raw || raw->size() != T::size()) return std::nullopt;
    T out;
    std::copy(raw->begin(), raw->end(), out.v.begin());
    return out;
}

inline std::string to_hex(const std::string& s) = delete;

}  // namespace apc

// Allow byte arrays as unordered_map keys.
template <size_t N>
struct std::hash<apc::ByteArray<N>> {
    size_t operator()(const apc::ByteArray<N>& a) const {
        // FNV-1a over the bytes; these are uniformly distributed values
        // (hashes/keys) so a simple fold is fine.
        uint64_t h = 1469598103934665603ull;
        for (uint8_t b : a.v) {
            h ^= b;
            h *= 1099511628211ull;
        }
        return static_cast<size_t>(h);
    }
};

template <>
struct std::hash<apc::Digest> : std::hash<apc::ByteArray<32>> {};
template <>
struct std::hash<apc::PublicKey> : std::hash<apc::ByteArray<32>> {};
