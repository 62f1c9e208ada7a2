#include "apc/crypto.hpp"

#include <sodium.h>

#include <mutex>
#include <stdexcept>

namespace apc {

std::string to_hex(ByteSpan data) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (uint8_t b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

static int hex_nibble(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

std::optional<Bytes> from_hex(const std::string& hex) {
    if (hex.size() % 2 != 0) return std::nullopt;
    Bytes out;
    out.reserve(hex.size() / 2);
    for (size_t i = 0; i < hex.size(); i += 2) {
        int hi = hex_nibble(hex[i]);
        int lo = hex_nibble(hex[i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out.push_back(static_cast<uint8_t>(hi << 4 | lo));
    }
    return out;
}

}  // namespace apc

namespace apc::crypto {

void init() {
    static std::once_flag flag;
    static int rc = 0;
    std::call_once(flag, [] { rc = sodium_init(); });
    if (rc < 0) throw std::runtime_error("crypto backend failed to initialize");
}

KeyPair generate_keypair() {
    init();
    KeyPair kp;
    crypto_sign_keypair(kp.pk.v.data(), kp.sk.v.data());
    return kp;
}

KeyPair keypair_from_seed(const std::array<uint8_t, 32>& seed) {
    init();
    KeyPair kp;
    crypto_sign_seed_keypair(kp.pk.v.data(), kp.sk.v.data(), seed.data());
    return kp;
}

Signature sign(const PrivateKey& sk, ByteSpan msg) {
    init();
    Signature sig;
    crypto_sign_detached(sig.v.data(), nullptr, msg.data(), msg.size(),
                         sk.v.data());
    return sig;
}

bool verify(const PublicKey& pk, ByteSpan msg, const Signature& sig) {
    init();
    return crypto_sign_verify_detached(sig.v.data(), msg.data(), msg.size(),
                                       pk.v.data()) == 0;
}

Digest sha256(ByteSpan data) {
    init();
    Digest d;
    crypto_hash_sha256(d.v.data(), data.data(), data.size());
    return d;
}

Digest sha256_concat(ByteSpan a, ByteSpan b) {
    init();
    crypto_hash_sha256_state st;
    crypto_hash_sha256_init(&st);
    crypto_hash_sha256_update(&st, a.data(), a.size());
    crypto_hash_sha256_update(&st, b.data(), b.size());
    Digest d;
    crypto_hash_sha256_final(&st, d.v.data());
    return d;
}

SigCache::Key SigCache::make_key(const PublicKey& pk, ByteSpan msg,
                                 const Signature& sig) const {
    return Key{pk, sha256(msg), sig};
}

bool SigCache::verify(const PublicKey& pk, ByteSpan msg, const Signature& sig) {
    Key k = make_key(pk, msg, sig);
    if (seen_.contains(k)) {
        ++hits_;
        return true;
    }
    ++misses_;
    if (!crypto::verify(pk, msg, sig)) return false;
    seen_.insert(k);
    return true;
}

bool SigCache::verify_readonly(const PublicKey& pk, ByteSpan msg,
                               const Signature& sig) const {
    Key k = make_key(pk, msg, sig);
    if (seen_.contains(k)) return true;
    ++misses_;
    return crypto::verify(pk, msg, sig);
}

}  // namespace apc::crypto
