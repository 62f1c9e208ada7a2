#pragma once
//
// Thin wrapper over libsodium: Ed25519 detached signatures and SHA-256.
// Everything here consumes and produces plain byte sequences; canonical
// encodings of domain objects live in encoding.hpp.
//

#include <unordered_set>

#include "apc/bytes.hpp"

namespace apc::crypto {

// Initializes the crypto backend. Safe to call repeatedly; throws
// std::runtime_error if the backend cannot start.
void init();

struct KeyPair {
    PublicKey pk;
    PrivateKey sk;
};

// Fresh keypair from the system CSPRNG.
KeyPair generate_keypair();

// Deterministic keypair from a 32-byte seed (used by the simulator so runs
// are reproducible from a scenario seed).
KeyPair keypair_from_seed(const std::array<uint8_t, 32>& seed);

Signature sign(const PrivateKey& sk, ByteSpan msg);
bool verify(const PublicKey& pk, ByteSpan msg, const Signature& sig);

Digest sha256(ByteSpan data);
Digest sha256_concat(ByteSpan a, ByteSpan b);

// Memo of signatures that already verified, keyed by (pk, message digest).
// Replicated gossip re-validates the same (pk, tx) pairs on every node; the
// memo skips only the expensive curve operation, never a failed check, and
// any mutation of the message changes the digest and therefore misses.
class SigCache {
  public:
    // Returns true if the signature is valid, consulting the memo first.
    bool verify(const PublicKey& pk, ByteSpan msg, const Signature& sig);

    // Lookup-only variant, safe to call concurrently with other lookups.
    bool verify_readonly(const PublicKey& pk, ByteSpan msg,
                         const Signature& sig) const;

    size_t size() const { return seen_.size(); }
    uint64_t hits() const { return hits_; }
    uint64_t misses() const { return misses_; }

  private:
    struct Key {
        PublicKey pk;
        Digest msg_digest;
        Signature sig;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        size_t operator()(const Key& k) const {
            // msg_digest bytes are already uniform.
            uint64_t h;
            static_assert(sizeof h <= 32);
            std::copy_n(k.msg_digest.v.data(), sizeof h,
                        reinterpret_cast<uint8_t*>(&h));
            return static_cast<size_t>(h);
        }
    };

    Key make_key(const PublicKey& pk, ByteSpan msg, const Signature& sig) const;

    std::unordered_set<Key, KeyHash> seen_;
    uint64_t hits_ = 0;
    mutable uint64_t misses_ = 0;
};

}  // namespace apc::crypto
