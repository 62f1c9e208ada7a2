#include "apc/ledger.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>

#include "apc/encoding.hpp"

namespace apc::ledger {

const char* to_string(RejectReason r) {
    switch (r) {
        case RejectReason::BadSignature: return "bad_signature";
        case RejectReason::BrokenChainLink: return "broken_chain_link";
        case RejectReason::BlockExpired: return "block_expired";
        case RejectReason::UnknownDevice: return "unknown_device";
        case RejectReason::DuplicateKey: return "duplicate_key";
        case RejectReason::NotTrusted: return "not_trusted";
        case RejectReason::Malformed: return "malformed";
    }
    return "unknown";
}

bool operator==(const DeviceBlock& a, const DeviceBlock& b) {
    if (!(a.header == b.header) || a.ledger.size() != b.ledger.size())
        return false;
    for (size_t i = 0; i < a.ledger.size(); ++i)
        if (!(*a.ledger[i] == *b.ledger[i])) return false;
    return true;
}

Digest header_hash(const BlockHeader& h) {
    return crypto::sha256(enc::encode_header(h));
}

Digest tx_digest(const Transaction& tx) {
    return crypto::sha256(enc::encode_tx(tx));
}

Transaction make_genesis_tx(const crypto::KeyPair& kp, const GeoTag& geotag,
                            SimTime now, uint8_t access_level) {
    Transaction tx;
    tx.prev_tx_hash = Digest{};  // unbound until a header exists
    tx.payload = enc::genesis_payload(kp.pk, geotag);
    tx.geotag = geotag;
    tx.access_level = access_level;
    tx.timestamp = now;
    tx.signature = crypto::sign(kp.sk, enc::tx_signing_bytes(tx));
    return tx;
}

BlockHeader propose_header(const BlockHeader& prev, const PublicKey& device_pk,
                           uint8_t access_level, SimTime expiration_window,
                           SimTime now) {
    BlockHeader h;
    h.device_pk = device_pk;
    h.prev_header_hash = header_hash(prev);
    h.expiration = now + expiration_window;
    h.created_at = now;
    h.access_level = access_level;
    return h;
}

Transaction bind_genesis(const Transaction& unbound, const Digest& header_hash,
                         const crypto::KeyPair& kp) {
    Transaction tx = unbound;
    tx.prev_tx_hash = header_hash;
    tx.signature = crypto::sign(kp.sk, enc::tx_signing_bytes(tx));
    return tx;
}

static bool verify_tx_sig(const Transaction& tx, const PublicKey& pk,
                          crypto::SigCache* cache) {
    Bytes msg = enc::tx_signing_bytes(tx);
    if (cache) return cache->verify(pk, msg, tx.signature);
    return crypto::verify(pk, msg, tx.signature);
}

std::variant<DeviceBlock, RejectReason> create_block(
    const BlockHeader& header, const Transaction& bound_genesis,
    crypto::SigCache* cache) {
    if (header.expiration <= header.created_at) return RejectReason::Malformed;
    if (bound_genesis.prev_tx_hash != header_hash(header))
        return RejectReason::BrokenChainLink;
    auto embedded = enc::parse_genesis_payload(bound_genesis.payload);
    if (!embedded || embedded->first != header.device_pk)
        return RejectReason::Malformed;
    if (!verify_tx_sig(bound_genesis, header.device_pk, cache))
        return RejectReason::BadSignature;
    DeviceBlock b;
    b.header = header;
    b.ledger.push_back(std::make_shared<Transaction>(bound_genesis));
    b.tx_digests.push_back(tx_digest(bound_genesis));
    return b;
}

DeviceBlock make_block(const BlockHeader& prev, const crypto::KeyPair& kp,
                       const GeoTag& geotag, uint8_t access_level,
                       SimTime expiration_window, SimTime now) {
    Transaction unbound = make_genesis_tx(kp, geotag, now, access_level);
    BlockHeader h =
        propose_header(prev, kp.pk, access_level, expiration_window, now);
    Transaction bound = bind_genesis(unbound, header_hash(h), kp);
    auto result = create_block(h, bound);
    assert(std::holds_alternative<DeviceBlock>(result));
    return std::get<DeviceBlock>(std::move(result));
}

std::optional<RejectReason> append_transaction(DeviceBlock& block, TxPtr tx,
                                               SimTime now,
                                               crypto::SigCache* cache) {
    // Checks run cheapest-first; the reported reason for a single-fault
    // transaction is the same under any ordering.
    if (now > block.header.expiration || tx->timestamp > block.header.expiration)
        return RejectReason::BlockExpired;
    if (tx->prev_tx_hash != block.tail_digest())
        return RejectReason::BrokenChainLink;
    // Walk the stored ledger to the append point, confirming every link on
    // the way. The ledger behaves as the traversed list it models: insertion
    // re-derives the tail instead of trusting it, so per-append cost grows
    // with ledger length by design and a torn earlier write can never be
    // extended silently.
    for (size_t i = 1; i < block.ledger.size(); ++i)
        if (block.ledger[i]->prev_tx_hash != block.tx_digests[i - 1])
            return RejectReason::BrokenChainLink;
    if (!verify_tx_sig(*tx, block.header.device_pk, cache))
        return RejectReason::BadSignature;
    block.tx_digests.push_back(tx_digest(*tx));
    block.ledger.push_back(std::move(tx));
    return std::nullopt;
}

// Shared invariant checks for both validation kernels. Digests are
// recomputed from content; the memo is never trusted here.
static bool block_shape_ok(const DeviceBlock& block) {
    if (block.ledger.empty()) return false;
    if (block.header.expiration <= block.header.created_at) return false;
    const Transaction& genesis = *block.ledger.front();
    if (genesis.prev_tx_hash != header_hash(block.header)) return false;
    auto embedded = enc::parse_genesis_payload(genesis.payload);
    if (!embedded || embedded->first != block.header.device_pk) return false;
    return true;
}

bool validate_block_serial(const DeviceBlock& block, crypto::SigCache* cache) {
    if (!block_shape_ok(block)) return false;
    Digest prev;
    for (size_t i = 0; i < block.ledger.size(); ++i) {
        const Transaction& tx = *block.ledger[i];
        if (i > 0 && tx.prev_tx_hash != prev) return false;
        if (tx.timestamp > block.header.expiration) return false;
        if (!verify_tx_sig(tx, block.header.device_pk, cache)) return false;
        prev = tx_digest(tx);
    }
    return true;
}

bool validate_block_parallel(const DeviceBlock& block,
                             const crypto::SigCache* cache) {
    if (!block_shape_ok(block)) return false;
    const size_t n = block.ledger.size();
    std::vector<Digest> digests(n);
    bool ok = true;
#if defined(APC_HAVE_OPENMP)
#pragma omp parallel for schedule(static)
#endif
    for (size_t i = 0; i < n; ++i)
        digests[i] = tx_digest(*block.ledger[i]);
#if defined(APC_HAVE_OPENMP)
#pragma omp parallel for schedule(dynamic, 16) reduction(&& : ok)
#endif
    for (size_t i = 0; i < n; ++i) {
        const Transaction& tx = *block.ledger[i];
        bool good = (i == 0 || tx.prev_tx_hash == digests[i - 1]) &&
                    tx.timestamp <= block.header.expiration;
        if (good) {
            Bytes msg = enc::tx_signing_bytes(tx);
            good = cache ? cache->verify_readonly(block.header.device_pk, msg,
                                                  tx.signature)
                         : crypto::verify(block.header.device_pk, msg,
                                          tx.signature);
        }
        ok = ok && good;
    }
    return ok;
}

bool validate_block(const DeviceBlock& block, crypto::SigCache* cache) {
#if defined(APC_HAVE_OPENMP)
    if (block.ledger.size() >= 64 && !cache)
        return validate_block_parallel(block, nullptr);
#endif
    return validate_block_serial(block, cache);
}

// Same-key rule: validity intervals [created_at, expiration] of blocks that
// share a device_pk must be pairwise disjoint, so no instant sees two
// appendable headers for one key.
static bool active_intervals_disjoint(const Blockchain& chain) {
    std::vector<std::pair<PublicKey, std::pair<SimTime, SimTime>>> spans;
    spans.reserve(chain.blocks.size());
    for (const DeviceBlock& b : chain.blocks)
        spans.push_back({b.header.device_pk,
                         {b.header.created_at, b.header.expiration}});
    std::sort(spans.begin(), spans.end());
    for (size_t i = 1; i < spans.size(); ++i) {
        if (spans[i].first != spans[i - 1].first) continue;
        if (spans[i].second.first <= spans[i - 1].second.second) return false;
    }
    return true;
}

static bool chain_links_ok(const Blockchain& chain) {
    if (chain.empty()) return false;
    if (!chain.blocks[0].header.prev_header_hash.is_zero()) return false;
    for (size_t i = 1; i < chain.blocks.size(); ++i) {
        if (chain.blocks[i].header.prev_header_hash !=
            header_hash(chain.blocks[i - 1].header))
            return false;
    }
    return active_intervals_disjoint(chain);
}

bool validate_chain_serial(const Blockchain& chain, crypto::SigCache* cache) {
    if (!chain_links_ok(chain)) return false;
    for (const DeviceBlock& b : chain.blocks)
        if (!validate_block_serial(b, cache)) return false;
    return true;
}

bool validate_chain_parallel(const Blockchain& chain,
                             const crypto::SigCache* cache) {
    if (!chain_links_ok(chain)) return false;
    bool ok = true;
    const size_t n = chain.blocks.size();
#if defined(APC_HAVE_OPENMP)
#pragma omp parallel for schedule(dynamic, 1) reduction(&& : ok)
#endif
    for (size_t i = 0; i < n; ++i)
        ok = ok && validate_block_parallel(chain.blocks[i], cache);
    return ok;
}

bool validate_chain(const Blockchain& chain, crypto::SigCache* cache) {
#if defined(APC_HAVE_OPENMP)
    if (!cache) return validate_chain_parallel(chain, nullptr);
#endif
    return validate_chain_serial(chain, cache);
}

Blockchain make_chain(const crypto::KeyPair& authority, const GeoTag& geotag,
                      SimTime now) {
    BlockHeader h;
    h.device_pk = authority.pk;
    h.prev_header_hash = Digest{};
    h.expiration = kNeverExpires;
    h.created_at = now;
    h.access_level = 0;
    Transaction genesis = make_genesis_tx(authority, geotag, now, 0);
    genesis = bind_genesis(genesis, header_hash(h), authority);
    auto result = create_block(h, genesis);
    assert(std::holds_alternative<DeviceBlock>(result));
    Blockchain chain;
    append_block(chain, std::get<DeviceBlock>(std::move(result)));
    return chain;
}

void append_block(Blockchain& chain, DeviceBlock block) {
    assert(chain.empty()
               ? block.header.prev_header_hash.is_zero()
               : block.header.prev_header_hash ==
                     header_hash(chain.tip().header));
    chain.index[block.header.device_pk] = chain.blocks.size();
    chain.blocks.push_back(std::move(block));
}

static void rebuild_index(Blockchain& chain) {
    chain.index.clear();
    for (size_t i = 0; i < chain.blocks.size(); ++i)
        chain.index[chain.blocks[i].header.device_pk] = i;
}

std::vector<DeviceBlock> truncate_chain(Blockchain& chain, size_t from) {
    std::vector<DeviceBlock> removed;
    if (from >= chain.blocks.size()) return removed;
    removed.assign(std::make_move_iterator(chain.blocks.begin() + from),
                   std::make_move_iterator(chain.blocks.end()));
    chain.blocks.erase(chain.blocks.begin() + from, chain.blocks.end());
    rebuild_index(chain);
    return removed;
}

const DeviceBlock* find_block(const Blockchain& chain, const PublicKey& pk,
                              SimTime now) {
    // Sequential locate by public key: the chain is modeled as the list an
    // RSI walks per transaction, so lookup cost grows with chain length by
    // design. The last non-expired match wins (keys rotate into new blocks).
    const DeviceBlock* hit = nullptr;
    for (const DeviceBlock& b : chain.blocks)
        if (b.header.device_pk == pk && !b.expired(now)) hit = &b;
    return hit;
}

DeviceBlock* find_block_mut(Blockchain& chain, const PublicKey& pk,
                            SimTime now) {
    return const_cast<DeviceBlock*>(
        find_block(static_cast<const Blockchain&>(chain), pk, now));
}

Digest chain_digest(const Blockchain& chain) {
    Bytes acc;
    acc.reserve(chain.blocks.size() * 32);
    for (const DeviceBlock& b : chain.blocks) {
        Digest d = crypto::sha256(enc::encode_block(b));
        acc.insert(acc.end(), d.v.begin(), d.v.end());
    }
    return crypto::sha256(acc);
}

std::string export_chain(const Blockchain& chain) {
    std::string out;
    for (const DeviceBlock& b : chain.blocks) {
        out += to_hex(ByteSpan(enc::encode_block(b)));
        out += '\n';
    }
    return out;
}

std::optional<Blockchain> import_chain(const std::string& text) {
    Blockchain chain;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto raw = from_hex(line);
        if (!raw) return std::nullopt;
        wire::Reader r{ByteSpan(*raw)};
        DeviceBlock b = enc::get_block(r);
        if (!r.complete()) return std::nullopt;
        chain.index[b.header.device_pk] = chain.blocks.size();
        chain.blocks.push_back(std::move(b));
    }
    if (chain.empty()) return std::nullopt;
    return chain;
}

}  // namespace apc::ledger
