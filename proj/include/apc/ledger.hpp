#pragma once
//
// Appendable-block ledger: a per-device immutable header plus a growing
// hash-chained transaction ledger. Headers link block-to-block; transactions
// link header-to-tail inside one block. Only the header is hashed into the
// next block, so appending transactions never disturbs the header chain.
//

#include <map>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "apc/bytes.hpp"
#include "apc/crypto.hpp"

namespace apc::ledger {

// Far-future expiration used by the authority block.
constexpr SimTime kNeverExpires = INT64_MAX;

enum class RejectReason : uint8_t {
    BadSignature = 1,
    BrokenChainLink = 2,
    BlockExpired = 3,
    UnknownDevice = 4,
    DuplicateKey = 5,
    NotTrusted = 6,
    Malformed = 7,
};

const char* to_string(RejectReason r);

struct GeoTag {
    double lat_deg = 0.0;
    double lon_deg = 0.0;
    bool operator==(const GeoTag&) const = default;
};

struct BlockHeader {
    PublicKey device_pk;
    Digest prev_header_hash;
    SimTime expiration = 0;  // absolute; appendable while now <= expiration
    SimTime created_at = 0;
    uint8_t access_level = 0;
    bool operator==(const BlockHeader&) const = default;
};

struct Transaction {
    Digest prev_tx_hash;  // predecessor digest, or header hash at position 0;
                          // zero while a genesis is still unbound
    Bytes payload;
    GeoTag geotag;
    uint8_t access_level = 0;
    SimTime timestamp = 0;
    Signature signature;  // over the canonical encoding of preceding fields
    bool operator==(const Transaction&) const = default;
};

using TxPtr = std::shared_ptr<const Transaction>;

struct DeviceBlock {
    BlockHeader header;
    std::vector<TxPtr> ledger;       // position 0 is the genesis transaction
    std::vector<Digest> tx_digests;  // memo: digest of each ledger entry

    const Digest& tail_digest() const { return tx_digests.back(); }
    bool expired(SimTime now) const { return now > header.expiration; }
};

// Content equality (transactions compared by value, not pointer).
bool operator==(const DeviceBlock& a, const DeviceBlock& b);

struct Blockchain {
    std::vector<DeviceBlock> blocks;          // header-chain order
    std::map<PublicKey, size_t> index;        // device_pk -> block position

    bool empty() const { return blocks.empty(); }
    size_t size() const { return blocks.size(); }
    const DeviceBlock& tip() const { return blocks.back(); }
};

Digest header_hash(const BlockHeader& h);
Digest tx_digest(const Transaction& tx);

// --- genesis / block creation (two-phase binding) ---

// Unbound genesis: prev_tx_hash is zero until a header exists.
Transaction make_genesis_tx(const crypto::KeyPair& kp, const GeoTag& geotag,
                            SimTime now, uint8_t access_level = 0);

// Header an RSI allocates on top of its tip for a joining device.
BlockHeader propose_header(const BlockHeader& prev, const PublicKey& device_pk,
                           uint8_t access_level, SimTime expiration_window,
                           SimTime now);

// Vehicle-side: rebind the genesis to the offered header hash and re-sign.
Transaction bind_genesis(const Transaction& unbound, const Digest& header_hash,
                         const crypto::KeyPair& kp);

// RSI-side: assemble the block once the bound genesis returns. Validates the
// binding, the signature, and the embedded public key.
std::variant<DeviceBlock, RejectReason> create_block(
    const BlockHeader& header, const Transaction& bound_genesis,
    crypto::SigCache* cache = nullptr);

// Convenience for tests/benchmarks: runs the whole two-phase dance locally.
DeviceBlock make_block(const BlockHeader& prev, const crypto::KeyPair& kp,
                       const GeoTag& geotag, uint8_t access_level,
                       SimTime expiration_window, SimTime now);

// --- ledger growth ---

// Appends iff the block is unexpired, the link matches the tail, and the
// signature verifies; returns the first failed check otherwise.
std::optional<RejectReason> append_transaction(DeviceBlock& block, TxPtr tx,
                                               SimTime now,
                                               crypto::SigCache* cache = nullptr);

// --- validation kernels (serial reference + parallel) ---

bool validate_block_serial(const DeviceBlock& block,
                           crypto::SigCache* cache = nullptr);
bool validate_block_parallel(const DeviceBlock& block,
                             const crypto::SigCache* cache = nullptr);
bool validate_block(const DeviceBlock& block, crypto::SigCache* cache = nullptr);

bool validate_chain_serial(const Blockchain& chain,
                           crypto::SigCache* cache = nullptr);
bool validate_chain_parallel(const Blockchain& chain,
                             const crypto::SigCache* cache = nullptr);
bool validate_chain(const Blockchain& chain, crypto::SigCache* cache = nullptr);

// --- chain operations ---

// New chain rooted at an authority block whose key endorses RSI credentials.
Blockchain make_chain(const crypto::KeyPair& authority, const GeoTag& geotag,
                      SimTime now);

// Appends a block and maintains the index. The caller has already validated
// linkage; this asserts it in debug builds.
void append_block(Blockchain& chain, DeviceBlock block);

// Removes blocks from position `from` to the tip (fork resolution) and
// returns them in chain order.
std::vector<DeviceBlock> truncate_chain(Blockchain& chain, size_t from);

// The unique non-expired block for pk, located by a sequential scan of the
// chain (the lookup the measurements exercise); index is kept for invariant
// checks and iteration, not for this hot path.
const DeviceBlock* find_block(const Blockchain& chain, const PublicKey& pk,
                              SimTime now);
DeviceBlock* find_block_mut(Blockchain& chain, const PublicKey& pk,
                            SimTime now);

// Digest over the canonical encoding of every block, in order.
Digest chain_digest(const Blockchain& chain);

// Newline-delimited hex records, one canonical-encoded block per line.
std::string export_chain(const Blockchain& chain);
std::optional<Blockchain> import_chain(const std::string& text);

}  // namespace apc::ledger
