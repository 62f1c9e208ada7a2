#pragma once
//
// Canonical byte encodings for every domain object that is hashed, signed,
// stored, or sent. One encoding serves all four uses. Layouts are documented
// in PROTOCOL.md and pinned by golden fixtures under tests/fixtures/golden.
//

#include "apc/ledger.hpp"
#include "apc/merkle.hpp"
#include "apc/wire.hpp"

namespace apc::enc {

using ledger::BlockHeader;
using ledger::Blockchain;
using ledger::DeviceBlock;
using ledger::GeoTag;
using ledger::Transaction;

void put_geotag(wire::Writer& w, const GeoTag& g);
GeoTag get_geotag(wire::Reader& r);

void put_header(wire::Writer& w, const BlockHeader& h);
BlockHeader get_header(wire::Reader& r);

void put_tx(wire::Writer& w, const Transaction& tx);
Transaction get_tx(wire::Reader& r);

void put_block(wire::Writer& w, const DeviceBlock& b);
// Rebuilds the digest memo; fails (reader poisoned) on oversized counts.
DeviceBlock get_block(wire::Reader& r);

void put_proof(wire::Writer& w, const crypto::MembershipProof& p);
crypto::MembershipProof get_proof(wire::Reader& r);

Bytes encode_header(const BlockHeader& h);
Bytes encode_tx(const Transaction& tx);
Bytes encode_block(const DeviceBlock& b);

// Transaction signing input: canonical encoding of every field before the
// signature, exactly in declaration order.
Bytes tx_signing_bytes(const Transaction& tx);

// Genesis payload: canonical (device_pk, geotag).
Bytes genesis_payload(const PublicKey& pk, const GeoTag& g);
std::optional<std::pair<PublicKey, GeoTag>> parse_genesis_payload(ByteSpan b);

// Signing inputs for protocol-level signatures. These are artifact
// extensions, so each carries a one-byte domain tag to keep them from ever
// colliding with one another.
Bytes witness_signing_bytes(const PublicKey& subject, bool observed,
                            const PublicKey& witness);
Bytes credential_signing_bytes(const PublicKey& rsi_pk);
Bytes offer_signing_bytes(const Digest& header_hash);

}  // namespace apc::enc
