#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "apc/crypto.hpp"
#include "apc/merkle.hpp"
#include "apc/rng.hpp"

using namespace apc;
using crypto::MembershipProof;
using crypto::MerkleTree;

static std::vector<PublicKey> random_keys(size_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<PublicKey> keys(n);
    for (auto& k : keys) rng.fill(k.v.data(), k.v.size());
    return keys;
}

// Independent oracle: a straight-line fold over explicit level arrays using
// only the hash primitive. Written before the tree implementation; shares no
// code with it.
static Digest oracle_root(const std::vector<PublicKey>& keys) {
    std::vector<Digest> level;
    for (const auto& k : keys) level.push_back(crypto::sha256(k.span()));
    while (level.size() > 1) {
        std::vector<Digest> up;
        for (size_t i = 0; i < level.size(); i += 2) {
            const Digest& l = level[i];
            const Digest& r = (i + 1 < level.size()) ? level[i + 1] : level[i];
            up.push_back(crypto::sha256_concat(l.span(), r.span()));
        }
        level = up;
    }
    return level[0];
}

TEST_CASE("root matches the straight-line oracle for sizes 1..33") {
    for (size_t n = 1; n <= 33; ++n) {
        auto keys = random_keys(n, 1000 + n);
        CHECK(crypto::merkle_build_serial(keys).root() == oracle_root(keys));
    }
}

TEST_CASE("single leaf is its own root") {
    auto keys = random_keys(1, 7);
    auto tree = crypto::merkle_build_serial(keys);
    CHECK(tree.root() == crypto::leaf_hash(keys[0]));
    CHECK(tree.root() == crypto::sha256(keys[0].span()));
}

TEST_CASE("odd node duplicates upward (explicit 3-leaf shape)") {
    auto keys = random_keys(3, 8);
    Digest l0 = crypto::sha256(keys[0].span());
    Digest l1 = crypto::sha256(keys[1].span());
    Digest l2 = crypto::sha256(keys[2].span());
    Digest left = crypto::sha256_concat(l0.span(), l1.span());
    Digest right = crypto::sha256_concat(l2.span(), l2.span());
    Digest expected = crypto::sha256_concat(left.span(), right.span());
    CHECK(crypto::merkle_build_serial(keys).root() == expected);
}

TEST_CASE("internal nodes use plain concatenation (4-leaf shape)") {
    auto keys = random_keys(4, 9);
    Digest l0 = crypto::sha256(keys[0].span());
    Digest l1 = crypto::sha256(keys[1].span());
    Digest l2 = crypto::sha256(keys[2].span());
    Digest l3 = crypto::sha256(keys[3].span());
    Digest a = crypto::sha256_concat(l0.span(), l1.span());
    Digest b = crypto::sha256_concat(l2.span(), l3.span());
    CHECK(crypto::merkle_build_serial(keys).root() ==
          crypto::sha256_concat(a.span(), b.span()));
}

TEST_CASE("empty key set throws") {
    std::vector<PublicKey> none;
    CHECK_THROWS_AS((void)crypto::merkle_build_serial(none),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)crypto::merkle_build_parallel(none),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)crypto::merkle_build(none), std::invalid_argument);
}

TEST_CASE("every proof verifies; wrong leaf/root/path fail") {
    for (size_t n : {1u, 2u, 3u, 4u, 5u, 7u, 8u, 12u, 33u}) {
        auto keys = random_keys(n, 3000 + n);
        MerkleTree tree = crypto::merkle_build_serial(keys);
        for (size_t i = 0; i < n; ++i) {
            MembershipProof proof = crypto::merkle_prove(tree, i);
            CHECK(proof.leaf_index == i);
            Digest leaf = crypto::leaf_hash(keys[i]);
            CHECK(crypto::merkle_verify(tree.root(), leaf, proof));

            // Another leaf under the same proof fails (n > 1).
            if (n > 1) {
                Digest other = crypto::leaf_hash(keys[(i + 1) % n]);
                CHECK_FALSE(crypto::merkle_verify(tree.root(), other, proof));
            }

            // A corrupted root fails.
            Digest bad_root = tree.root();
            bad_root.v[0] ^= 1;
            CHECK_FALSE(crypto::merkle_verify(bad_root, leaf, proof));

            // A truncated path fails (n > 1 so the path is non-empty).
            if (!proof.path.empty()) {
                MembershipProof cut = proof;
                cut.path.pop_back();
                CHECK_FALSE(crypto::merkle_verify(tree.root(), leaf, cut));
            }
        }
        CHECK_THROWS_AS((void)crypto::merkle_prove(tree, n), std::out_of_range);
    }
}

TEST_CASE("proof from one tree fails against another tree's root") {
    auto keys_a = random_keys(8, 41);
    auto keys_b = random_keys(8, 42);
    auto tree_a = crypto::merkle_build_serial(keys_a);
    auto tree_b = crypto::merkle_build_serial(keys_b);
    auto proof = crypto::merkle_prove(tree_a, 3);
    CHECK_FALSE(crypto::merkle_verify(tree_b.root(),
                                      crypto::leaf_hash(keys_a[3]), proof));
}

TEST_CASE("leaf order matters") {
    auto keys = random_keys(8, 55);
    auto swapped = keys;
    std::swap(swapped[2], swapped[5]);
    CHECK(crypto::merkle_build_serial(keys).root() !=
          crypto::merkle_build_serial(swapped).root());
}

TEST_CASE("serial and parallel kernels agree") {
    for (size_t n : {1u, 2u, 3u, 5u, 9u, 17u, 64u, 1000u, 4099u}) {
        auto keys = random_keys(n, 7000 + n);
        auto s = crypto::merkle_build_serial(keys);
        auto p = crypto::merkle_build_parallel(keys);
        REQUIRE(s.levels.size() == p.levels.size());
        for (size_t lvl = 0; lvl < s.levels.size(); ++lvl)
            CHECK(s.levels[lvl] == p.levels[lvl]);
        CHECK(crypto::merkle_build(keys).root() == s.root());
    }
}

TEST_CASE("identical key sets give identical roots across builds") {
    auto keys = random_keys(100, 77);
    CHECK(crypto::merkle_build_serial(keys).root() ==
          crypto::merkle_build_serial(keys).root());
}
