#include "apc/merkle.hpp"

#include <stdexcept>

#include "apc/crypto.hpp"

namespace apc::crypto {

Digest leaf_hash(const PublicKey& pk) { return sha256(pk.span()); }

static std::vector<Digest> leaves_of(std::span<const PublicKey> keys) {
    if (keys.empty())
        throw std::invalid_argument("merkle_build: empty key set");
    std::vector<Digest> leaves(keys.size());
    for (size_t i = 0; i < keys.size(); ++i) leaves[i] = leaf_hash(keys[i]);
    return leaves;
}

static Digest parent_of(const Digest& l, const Digest& r) {
    return sha256_concat(l.span(), r.span());
}

// Builds the level above `cur`, duplicating a trailing odd node.
static std::vector<Digest> next_level(const std::vector<Digest>& cur) {
    std::vector<Digest> up((cur.size() + 1) / 2);
    for (size_t i = 0; i < up.size(); ++i) {
        const Digest& l = cur[2 * i];
        const Digest& r = (2 * i + 1 < cur.size()) ? cur[2 * i + 1] : l;
        up[i] = parent_of(l, r);
    }
    return up;
}

MerkleTree merkle_build_serial(std::span<const PublicKey> keys) {
    MerkleTree tree;
    tree.levels.push_back(leaves_of(keys));
    while (tree.levels.back().size() > 1)
        tree.levels.push_back(next_level(tree.levels.back()));
    return tree;
}

MerkleTree merkle_build_parallel(std::span<const PublicKey> keys) {
    MerkleTree tree;
    {
        if (keys.empty())
            throw std::invalid_argument("merkle_build: empty key set");
        std::vector<Digest> leaves(keys.size());
#if defined(APC_HAVE_OPENMP)
#pragma omp parallel for schedule(static)
#endif
        for (size_t i = 0; i < keys.size(); ++i)
            leaves[i] = leaf_hash(keys[i]);
        tree.levels.push_back(std::move(leaves));
    }
    while (tree.levels.back().size() > 1) {
        const std::vector<Digest>& cur = tree.levels.back();
        std::vector<Digest> up((cur.size() + 1) / 2);
#if defined(APC_HAVE_OPENMP)
#pragma omp parallel for schedule(static)
#endif
        for (size_t i = 0; i < up.size(); ++i) {
            const Digest& l = cur[2 * i];
            const Digest& r = (2 * i + 1 < cur.size()) ? cur[2 * i + 1] : l;
            up[i] = parent_of(l, r);
        }
        tree.levels.push_back(std::move(up));
    }
    return tree;
}

MerkleTree merkle_build(std::span<const PublicKey> keys) {
#if defined(APC_HAVE_OPENMP)
    // Parallelism only pays off once the per-level work dwarfs the fork/join
    // overhead; small sets stay on the serial path.
    if (keys.size() >= 4096) return merkle_build_parallel(keys);
#endif
    return merkle_build_serial(keys);
}

MembershipProof merkle_prove(const MerkleTree& tree, size_t leaf_index) {
    if (tree.levels.empty() || leaf_index >= tree.levels[0].size())
        throw std::out_of_range("merkle_prove: leaf index out of range");
    MembershipProof proof;
    proof.leaf_index = static_cast<uint32_t>(leaf_index);
    size_t idx = leaf_index;
    for (size_t lvl = 0; lvl + 1 < tree.levels.size(); ++lvl) {
        const std::vector<Digest>& cur = tree.levels[lvl];
        size_t sib = (idx % 2 == 0) ? idx + 1 : idx - 1;
        if (sib >= cur.size()) sib = idx;  // odd node pairs with itself
        proof.path.push_back(ProofStep{
            cur[sib],
            (idx % 2 == 0) ? SiblingSide::Right : SiblingSide::Left});
        idx /= 2;
    }
    return proof;
}

bool merkle_verify(const Digest& root, const Digest& leaf,
                   const MembershipProof& proof) {
    Digest acc = leaf;
    for (const ProofStep& step : proof.path) {
        acc = (step.side == SiblingSide::Right) ? parent_of(acc, step.sibling)
                                                : parent_of(step.sibling, acc);
    }
    return acc == root;
}

}  // namespace apc::crypto
