#pragma once
//
// Merkle tree over device public keys, used for the periodic key-update
// broadcast. Leaves are sha256(pk) in the caller-supplied order (callers sort
// keys lexicographically before building). Internal nodes are
// sha256(left || right); a level with an odd node duplicates it. A single
// leaf is its own root.
//

#include <vector>

#include "apc/bytes.hpp"

namespace apc::crypto {

enum class SiblingSide : uint8_t { Left = 0, Right = 1 };

struct ProofStep {
    Digest sibling;
    SiblingSide side;  // which side the sibling sits on when hashing upward
    bool operator==(const ProofStep&) const = default;
};

struct MembershipProof {
    uint32_t leaf_index = 0;
    std::vector<ProofStep> path;
    bool operator==(const MembershipProof&) const = default;
};

struct MerkleTree {
    // levels[0] holds the leaves; levels.back() holds the single root.
    std::vector<std::vector<Digest>> levels;

    size_t leaf_count() const { return levels.empty() ? 0 : levels[0].size(); }
    const Digest& root() const { return levels.back().front(); }
};

Digest leaf_hash(const PublicKey& pk);

// Throws std::invalid_argument on an empty key set.
MerkleTree merkle_build_serial(std::span<const PublicKey> keys);
MerkleTree merkle_build_parallel(std::span<const PublicKey> keys);
MerkleTree merkle_build(std::span<const PublicKey> keys);  // picks a kernel

// Throws std::out_of_range for an invalid index.
MembershipProof merkle_prove(const MerkleTree& tree, size_t leaf_index);

bool merkle_verify(const Digest& root, const Digest& leaf,
                   const MembershipProof& proof);

}  // namespace apc::crypto
