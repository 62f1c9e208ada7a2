#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "apc/protocol.hpp"
#include "apc/rng.hpp"

using namespace apc;
using namespace apc::proto;

#ifndef APC_FIXTURE_DIR
#define APC_FIXTURE_DIR "tests/fixtures/golden"
#endif

// ---------------------------------------------------------------------------
// Deterministic corpus: one message per variant, built from fixed seeds.
// The hex dumps committed under tests/fixtures/golden pin the byte layout;
// any encoding change breaks these on purpose.
// ---------------------------------------------------------------------------

static crypto::KeyPair fixed_kp(uint8_t fill) {
    std::array<uint8_t, 32> seed;
    seed.fill(fill);
    return crypto::keypair_from_seed(seed);
}

struct Corpus {
    std::vector<std::pair<std::string, Message>> entries;
};

static Corpus build_corpus() {
    crypto::init();
    const auto authority = fixed_kp(0xa1);
    const auto rsi = fixed_kp(0xb2);
    const auto vehicle = fixed_kp(0xc3);
    const auto witness = fixed_kp(0xd4);
    const ledger::GeoTag geo{-30.0625, -51.171875};  // exact in binary

    ledger::Blockchain chain = ledger::make_chain(authority, geo, 0);
    ledger::DeviceBlock block =
        ledger::make_block(chain.tip().header, vehicle, geo, 1, 60000, 1000);
    for (int i = 0; i < 2; ++i) {
        ledger::Transaction tx;
        tx.prev_tx_hash = block.tail_digest();
        tx.payload = Bytes{static_cast<uint8_t>(0x10 + i), 0x20, 0x30};
        tx.geotag = geo;
        tx.access_level = 1;
        tx.timestamp = 1500 + i;
        tx.signature = crypto::sign(vehicle.sk, enc::tx_signing_bytes(tx));
        auto rejected = ledger::append_transaction(
            block, std::make_shared<ledger::Transaction>(tx), tx.timestamp);
        if (rejected) std::abort();  // corpus must be valid by construction
    }

    ledger::Transaction unbound =
        ledger::make_genesis_tx(vehicle, geo, 1000, 1);
    Digest offer_hash = ledger::header_hash(block.header);

    std::vector<PublicKey> kui_keys = {vehicle.pk, witness.pk};
    std::sort(kui_keys.begin(), kui_keys.end());
    auto tree = crypto::merkle_build_serial(kui_keys);

    TxPtr tx1 = block.ledger.back();

    Corpus c;
    c.entries = {
        {"join_request", JoinRequest{unbound}},
        {"rsi_credential",
         RsiCredential{rsi.pk, crypto::sign(authority.sk,
                                            enc::credential_signing_bytes(rsi.pk))}},
        {"witness_query", WitnessQuery{vehicle.pk, geo}},
        {"witness_report",
         WitnessReport{vehicle.pk, true, witness.pk,
                       crypto::sign(witness.sk,
                                    enc::witness_signing_bytes(vehicle.pk, true,
                                                               witness.pk))}},
        {"header_offer",
         HeaderOffer{offer_hash, rsi.pk,
                     crypto::sign(rsi.sk, enc::offer_signing_bytes(offer_hash))}},
        {"block_broadcast", BlockBroadcast{block}},
        {"tx_submit", TxSubmit{vehicle.pk, tx1}},
        {"tx_broadcast", TxBroadcast{vehicle.pk, tx1}},
        {"tx_forward", TxForward{vehicle.pk, tx1}},
        {"kui_root", KuiRoot{tree.root(), 3, crypto::merkle_prove(tree, 0)}},
        {"ack", Ack{ledger::tx_digest(*tx1)}},
        {"reject",
         Reject{ledger::RejectReason::BadSignature, ledger::tx_digest(*tx1)}},
    };
    return c;
}

static std::filesystem::path golden_path(const std::string& name) {
    return std::filesystem::path(APC_FIXTURE_DIR) / (name + ".hex");
}

static int regen_goldens() {
    Corpus c = build_corpus();
    std::filesystem::create_directories(APC_FIXTURE_DIR);
    for (auto& [name, msg] : c.entries) {
        std::ofstream out(golden_path(name));
        out << to_hex(ByteSpan(proto::encode(msg))) << "\n";
    }
    std::printf("wrote %zu golden fixtures to %s\n", c.entries.size(),
                APC_FIXTURE_DIR);
    return 0;
}

TEST_CASE("golden fixtures pin the byte layout of every variant") {
    Corpus c = build_corpus();
    REQUIRE(c.entries.size() == proto::kVariantCount);
    for (auto& [name, msg] : c.entries) {
        CAPTURE(name);
        std::ifstream in(golden_path(name));
        REQUIRE_MESSAGE(in.good(), "missing fixture (run --regen-goldens)");
        std::string hex;
        in >> hex;
        auto raw = from_hex(hex);
        REQUIRE(raw.has_value());
        CHECK(to_hex(ByteSpan(proto::encode(msg))) == hex);
        auto decoded = proto::decode(ByteSpan(*raw));
        REQUIRE(decoded.has_value());
        CHECK(*decoded == msg);
    }
}

TEST_CASE("every variant round-trips; encoding deterministic") {
    Corpus c = build_corpus();
    for (auto& [name, msg] : c.entries) {
        CAPTURE(name);
        Bytes bytes = proto::encode(msg);
        CHECK(bytes == proto::encode(msg));
        auto decoded = proto::decode(ByteSpan(bytes));
        REQUIRE(decoded.has_value());
        CHECK(decoded->index() == msg.index());
        CHECK(*decoded == msg);
    }
}

TEST_CASE("truncation, trailing bytes, and unknown tags all fail") {
    Corpus c = build_corpus();
    for (auto& [name, msg] : c.entries) {
        CAPTURE(name);
        Bytes bytes = proto::encode(msg);

        Bytes cut(bytes.begin(), bytes.end() - 1);
        CHECK_FALSE(proto::decode(ByteSpan(cut)).has_value());

        Bytes extended = bytes;
        extended.push_back(0x00);
        CHECK_FALSE(proto::decode(ByteSpan(extended)).has_value());
    }
    Bytes unknown = {255, 0, 0};
    CHECK_FALSE(proto::decode(ByteSpan(unknown)).has_value());
    Bytes zero_tag = {0};
    CHECK_FALSE(proto::decode(ByteSpan(zero_tag)).has_value());
    Bytes empty;
    CHECK_FALSE(proto::decode(ByteSpan(empty)).has_value());
}

// ---------------------------------------------------------------------------
// Randomized round-trip and injectivity sampling.
// ---------------------------------------------------------------------------

static ledger::Transaction random_tx(Rng& rng) {
    ledger::Transaction tx;
    rng.fill(tx.prev_tx_hash.v.data(), tx.prev_tx_hash.v.size());
    tx.payload.resize(rng.range(0, 48));
    rng.fill(tx.payload.data(), tx.payload.size());
    tx.geotag = {rng.uniform() * 180 - 90, rng.uniform() * 360 - 180};
    tx.access_level = static_cast<uint8_t>(rng.range(0, 2));
    tx.timestamp = static_cast<SimTime>(rng.range(0, 1u << 30));
    rng.fill(tx.signature.v.data(), tx.signature.v.size());
    return tx;
}

static Message random_message(Rng& rng) {
    switch (rng.range(0, 11)) {
        case 0: return JoinRequest{random_tx(rng)};
        case 1: {
            RsiCredential v;
            rng.fill(v.rsi_pk.v.data(), 32);
            rng.fill(v.authority_sig.v.data(), 64);
            return v;
        }
        case 2: {
            WitnessQuery v;
            rng.fill(v.subject_pk.v.data(), 32);
            v.claimed = {rng.uniform() * 180 - 90, rng.uniform() * 360 - 180};
            return v;
        }
        case 3: {
            WitnessReport v;
            rng.fill(v.subject_pk.v.data(), 32);
            v.observed = rng.chance(0.5);
            rng.fill(v.witness_pk.v.data(), 32);
            rng.fill(v.witness_sig.v.data(), 64);
            return v;
        }
        case 4: {
            HeaderOffer v;
            rng.fill(v.header_hash.v.data(), 32);
            rng.fill(v.rsi_pk.v.data(), 32);
            rng.fill(v.rsi_sig.v.data(), 64);
            return v;
        }
        case 5: {
            ledger::DeviceBlock b;
            rng.fill(b.header.device_pk.v.data(), 32);
            rng.fill(b.header.prev_header_hash.v.data(), 32);
            b.header.created_at = static_cast<SimTime>(rng.range(0, 1000));
            b.header.expiration = b.header.created_at + 1 +
                                  static_cast<SimTime>(rng.range(0, 100000));
            b.header.access_level = static_cast<uint8_t>(rng.range(0, 2));
            size_t n = rng.range(1, 4);
            for (size_t i = 0; i < n; ++i) {
                auto tx = std::make_shared<ledger::Transaction>(random_tx(rng));
                b.tx_digests.push_back(ledger::tx_digest(*tx));
                b.ledger.push_back(std::move(tx));
            }
            return BlockBroadcast{std::move(b)};
        }
        case 6: {
            TxSubmit v;
            rng.fill(v.device_pk.v.data(), 32);
            v.tx = std::make_shared<ledger::Transaction>(random_tx(rng));
            return v;
        }
        case 7: {
            TxBroadcast v;
            rng.fill(v.device_pk.v.data(), 32);
            v.tx = std::make_shared<ledger::Transaction>(random_tx(rng));
            return v;
        }
        case 8: {
            TxForward v;
            rng.fill(v.device_pk.v.data(), 32);
            v.tx = std::make_shared<ledger::Transaction>(random_tx(rng));
            return v;
        }
        case 9: {
            KuiRoot v;
            rng.fill(v.root.v.data(), 32);
            v.epoch = rng.range(0, 1000);
            if (rng.chance(0.5)) {
                crypto::MembershipProof p;
                p.leaf_index = static_cast<uint32_t>(rng.range(0, 64));
                size_t steps = rng.range(0, 6);
                for (size_t i = 0; i < steps; ++i) {
                    crypto::ProofStep st;
                    rng.fill(st.sibling.v.data(), 32);
                    st.side = rng.chance(0.5) ? crypto::SiblingSide::Left
                                              : crypto::SiblingSide::Right;
                    p.path.push_back(st);
                }
                v.proof = std::move(p);
            }
            return v;
        }
        case 10: {
            Ack v;
            rng.fill(v.subject.v.data(), 32);
            return v;
        }
        default: {
            Reject v;
            v.reason = static_cast<ledger::RejectReason>(rng.range(1, 7));
            rng.fill(v.subject.v.data(), 32);
            return v;
        }
    }
}

TEST_CASE("100 random messages round-trip") {
    Rng rng(2024);
    for (int i = 0; i < 100; ++i) {
        Message m = random_message(rng);
        auto decoded = proto::decode(ByteSpan(proto::encode(m)));
        REQUIRE(decoded.has_value());
        CHECK(*decoded == m);
    }
}

TEST_CASE("injectivity over 10^4 random message pairs") {
    Rng rng(31337);
    int distinct_pairs = 0;
    for (int i = 0; i < 10000; ++i) {
        Message a = random_message(rng);
        Message b = random_message(rng);
        bool same = a.index() == b.index() && a == b;
        if (!same) {
            ++distinct_pairs;
            CHECK(proto::encode(a) != proto::encode(b));
        }
    }
    CHECK(distinct_pairs > 9900);  // collisions of random content are freak events
}

TEST_CASE("transaction signatures survive the wire") {
    Rng rng(88);
    for (int i = 0; i < 20; ++i) {
        auto kp = crypto::keypair_from_seed(rng.seed_bytes());
        ledger::Transaction tx = random_tx(rng);
        tx.signature = crypto::sign(kp.sk, enc::tx_signing_bytes(tx));

        Message m = TxSubmit{kp.pk, std::make_shared<ledger::Transaction>(tx)};
        auto decoded = proto::decode(ByteSpan(proto::encode(m)));
        REQUIRE(decoded.has_value());
        const auto& got = std::get<TxSubmit>(*decoded);
        CHECK(crypto::verify(kp.pk, ByteSpan(enc::tx_signing_bytes(*got.tx)),
                             got.tx->signature));
        CHECK(ledger::tx_digest(*got.tx) == ledger::tx_digest(tx));
    }
}

int main(int argc, char** argv) {
    for (int i = 1; i < argc; ++i)
        if (std::string(argv[i]) == "--regen-goldens") return regen_goldens();
    doctest::Context ctx(argc, argv);
    return ctx.run();
}
