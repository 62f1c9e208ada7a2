#pragma once
//
// Message vocabulary exchanged between nodes, and its canonical codec.
// Layouts are documented in PROTOCOL.md; golden fixtures pin every variant.
//

#include <variant>

#include "apc/encoding.hpp"

namespace apc::proto {

using ledger::DeviceBlock;
using ledger::GeoTag;
using ledger::RejectReason;
using ledger::Transaction;
using ledger::TxPtr;

// Vehicle → RSI. Carries an unbound genesis (zero prev_tx_hash) to open a
// join, then the bound genesis to finish it.
struct JoinRequest {
    Transaction genesis;
    bool operator==(const JoinRequest&) const = default;
};

// RSI → vehicles in range (periodic beacon). Authority-signed identity.
struct RsiCredential {
    PublicKey rsi_pk;
    Signature authority_sig;
    bool operator==(const RsiCredential&) const = default;
};

// RSI → nearby nodes: did you observe `subject_pk` at `claimed`?
struct WitnessQuery {
    PublicKey subject_pk;
    GeoTag claimed;
    bool operator==(const WitnessQuery&) const = default;
};

// Witness → RSI. witness_pk identifies the signer so the report is
// verifiable; the signature covers (subject, observed, witness).
struct WitnessReport {
    PublicKey subject_pk;
    bool observed = false;
    PublicKey witness_pk;
    Signature witness_sig;
    bool operator==(const WitnessReport&) const = default;
};

// RSI → vehicle: the allocated header's hash for genesis binding, signed by
// the RSI so a vehicle only ever binds to an offer from a trusted RSI.
struct HeaderOffer {
    Digest header_hash;
    PublicKey rsi_pk;
    Signature rsi_sig;
    bool operator==(const HeaderOffer&) const = default;
};

// RSI → RSI peers: freshly created block.
struct BlockBroadcast {
    DeviceBlock block;
    bool operator==(const BlockBroadcast&) const = default;
};

struct TxSubmit {
    PublicKey device_pk;
    TxPtr tx;
    bool operator==(const TxSubmit& o) const;
};

struct TxBroadcast {
    PublicKey device_pk;
    TxPtr tx;
    bool operator==(const TxBroadcast& o) const;
};

// Vehicle → vehicle → RSI mule path.
struct TxForward {
    PublicKey device_pk;
    TxPtr tx;
    bool operator==(const TxForward& o) const;
};

// RSI → everyone: current Merkle root of active keys. When the recipient's
// own key is a leaf, the RSI attaches that vehicle's membership proof.
struct KuiRoot {
    Digest root;
    uint64_t epoch = 0;
    std::optional<crypto::MembershipProof> proof;
    bool operator==(const KuiRoot&) const = default;
};

struct Ack {
    Digest subject;  // tx digest or header hash being acknowledged
    bool operator==(const Ack&) const = default;
};

struct Reject {
    RejectReason reason = RejectReason::Malformed;
    Digest subject;
    bool operator==(const Reject&) const = default;
};

using Message =
    std::variant<JoinRequest, RsiCredential, WitnessQuery, WitnessReport,
                 HeaderOffer, BlockBroadcast, TxSubmit, TxBroadcast, TxForward,
                 KuiRoot, Ack, Reject>;

Bytes encode(const Message& m);
std::optional<Message> decode(ByteSpan bytes);

const char* variant_name(const Message& m);
size_t variant_index(const Message& m);
constexpr size_t kVariantCount = std::variant_size_v<Message>;

}  // namespace apc::proto
