#include "apc/encoding.hpp"

namespace apc::enc {

namespace {
// Domain tags for protocol-level signing inputs.
constexpr uint8_t kTagWitness = 'W';
constexpr uint8_t kTagCredential = 'R';
constexpr uint8_t kTagOffer = 'H';

// Ceiling on decoded collection sizes; a canonical message this large is
// never legitimate and the cap keeps corrupt length prefixes from allocating.
constexpr uint32_t kMaxCount = 1u << 22;
}  // namespace

void put_geotag(wire::Writer& w, const GeoTag& g) {
    w.f64(g.lat_deg);
    w.f64(g.lon_deg);
}

GeoTag get_geotag(wire::Reader& r) {
    GeoTag g;
    g.lat_deg = r.f64();
    g.lon_deg = r.f64();
    return g;
}

void put_header(wire::Writer& w, const BlockHeader& h) {
    w.arr(h.device_pk);
    w.arr(h.prev_header_hash);
    w.i64(h.expiration);
    w.i64(h.created_at);
    w.u8(h.access_level);
}

BlockHeader get_header(wire::Reader& r) {
    BlockHeader h;
    h.device_pk = r.fixed<PublicKey>();
    h.prev_header_hash = r.fixed<Digest>();
    h.expiration = r.i64();
    h.created_at = r.i64();
    h.access_level = r.u8();
    return h;
}

Bytes tx_signing_bytes(const Transaction& tx) {
    wire::Writer w;
    w.arr(tx.prev_tx_hash);
    w.blob(tx.payload);
    put_geotag(w, tx.geotag);
    w.u8(tx.access_level);
    w.i64(tx.timestamp);
    return w.take();
}

void put_tx(wire::Writer& w, const Transaction& tx) {
    w.arr(tx.prev_tx_hash);
    w.blob(tx.payload);
    put_geotag(w, tx.geotag);
    w.u8(tx.access_level);
    w.i64(tx.timestamp);
    w.arr(tx.signature);
}

Transaction get_tx(wire::Reader& r) {
    Transaction tx;
    tx.prev_tx_hash = r.fixed<Digest>();
    tx.payload = r.blob();
    tx.geotag = get_geotag(r);
    tx.access_level = r.u8();
    tx.timestamp = r.i64();
    tx.signature = r.fixed<Signature>();
    return tx;
}

void put_block(wire::Writer& w, const DeviceBlock& b) {
    put_header(w, b.header);
    w.u32(static_cast<uint32_t>(b.ledger.size()));
    for (const auto& tx : b.ledger) put_tx(w, *tx);
}

DeviceBlock get_block(wire::Reader& r) {
    DeviceBlock b;
    b.header = get_header(r);
    uint32_t n = r.u32();
    if (n > kMaxCount) n = 0;
    b.ledger.reserve(n);
    b.tx_digests.reserve(n);
    for (uint32_t i = 0; i < n && r.ok(); ++i) {
        auto tx = std::make_shared<Transaction>(get_tx(r));
        if (!r.ok()) break;
        b.tx_digests.push_back(ledger::tx_digest(*tx));
        b.ledger.push_back(std::move(tx));
    }
    return b;
}

void put_proof(wire::Writer& w, const crypto::MembershipProof& p) {
    w.u32(p.leaf_index);
    w.u32(static_cast<uint32_t>(p.path.size()));
    for (const auto& step : p.path) {
        w.arr(step.sibling);
        w.u8(static_cast<uint8_t>(step.side));
    }
}

crypto::MembershipProof get_proof(wire::Reader& r) {
    crypto::MembershipProof p;
    p.leaf_index = r.u32();
    uint32_t n = r.u32();
    if (n > 64) n = 0;  // a 2^64-leaf tree is already absurd
    p.path.reserve(n);
    for (uint32_t i = 0; i < n && r.ok(); ++i) {
        crypto::ProofStep step;
        step.sibling = r.fixed<Digest>();
        step.side = static_cast<crypto::SiblingSide>(r.u8() & 1);
        p.path.push_back(step);
    }
    return p;
}

Bytes encode_header(const BlockHeader& h) {
    wire::Writer w;
    put_header(w, h);
    return w.take();
}

Bytes encode_tx(const Transaction& tx) {
    wire::Writer w;
    put_tx(w, tx);
    return w.take();
}

Bytes encode_block(const DeviceBlock& b) {
    wire::Writer w;
    put_block(w, b);
    return w.take();
}

Bytes genesis_payload(const PublicKey& pk, const GeoTag& g) {
    wire::Writer w;
    w.arr(pk);
    put_geotag(w, g);
    return w.take();
}

std::optional<std::pair<PublicKey, GeoTag>> parse_genesis_payload(ByteSpan b) {
    wire::Reader r(b);
    PublicKey pk = r.fixed<PublicKey>();
    GeoTag g = get_geotag(r);
    if (!r.complete()) return std::nullopt;
    return std::make_pair(pk, g);
}

Bytes witness_signing_bytes(const PublicKey& subject, bool observed,
                            const PublicKey& witness) {
    wire::Writer w;
    w.u8(kTagWitness);
    w.arr(subject);
    w.u8(observed ? 1 : 0);
    w.arr(witness);
    return w.take();
}

Bytes credential_signing_bytes(const PublicKey& rsi_pk) {
    wire::Writer w;
    w.u8(kTagCredential);
    w.arr(rsi_pk);
    return w.take();
}

Bytes offer_signing_bytes(const Digest& header_hash) {
    wire::Writer w;
    w.u8(kTagOffer);
    w.arr(header_hash);
    return w.take();
}

}  // namespace apc::enc
