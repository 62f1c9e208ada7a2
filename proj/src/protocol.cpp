#include "apc/protocol.hpp"

namespace apc::proto {

namespace {
enum Tag : uint8_t {
    kJoinRequest = 1,
    kRsiCredential = 2,
    kWitnessQuery = 3,
    kWitnessReport = 4,
    kHeaderOffer = 5,
    kBlockBroadcast = 6,
    kTxSubmit = 7,
    kTxBroadcast = 8,
    kTxForward = 9,
    kKuiRoot = 10,
    kAck = 11,
    kReject = 12,
};

void put_txptr(wire::Writer& w, const PublicKey& pk, const TxPtr& tx) {
    w.arr(pk);
    enc::put_tx(w, *tx);
}

template <typename T>
T get_txmsg(wire::Reader& r) {
    T out;
    out.device_pk = r.fixed<PublicKey>();
    out.tx = std::make_shared<Transaction>(enc::get_tx(r));
    return out;
}
}  // namespace

bool TxSubmit::operator==(const TxSubmit& o) const {
    return device_pk == o.device_pk && *tx == *o.tx;
}
bool TxBroadcast::operator==(const TxBroadcast& o) const {
    return device_pk == o.device_pk && *tx == *o.tx;
}
bool TxForward::operator==(const TxForward& o) const {
    return device_pk == o.device_pk && *tx == *o.tx;
}

Bytes encode(const Message& m) {
    wire::Writer w;
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, JoinRequest>) {
                w.u8(kJoinRequest);
                enc::put_tx(w, v.genesis);
            } else if constexpr (std::is_same_v<T, RsiCredential>) {
                w.u8(kRsiCredential);
                w.arr(v.rsi_pk);
                w.arr(v.authority_sig);
            } else if constexpr (std::is_same_v<T, WitnessQuery>) {
                w.u8(kWitnessQuery);
                w.arr(v.subject_pk);
                enc::put_geotag(w, v.claimed);
            } else if constexpr (std::is_same_v<T, WitnessReport>) {
                w.u8(kWitnessReport);
                w.arr(v.subject_pk);
                w.u8(v.observed ? 1 : 0);
                w.arr(v.witness_pk);
                w.arr(v.witness_sig);
            } else if constexpr (std::is_same_v<T, HeaderOffer>) {
                w.u8(kHeaderOffer);
                w.arr(v.header_hash);
                w.arr(v.rsi_pk);
                w.arr(v.rsi_sig);
            } else if constexpr (std::is_same_v<T, BlockBroadcast>) {
                w.u8(kBlockBroadcast);
                enc::put_block(w, v.block);
            } else if constexpr (std::is_same_v<T, TxSubmit>) {
                w.u8(kTxSubmit);
                put_txptr(w, v.device_pk, v.tx);
            } else if constexpr (std::is_same_v<T, TxBroadcast>) {
                w.u8(kTxBroadcast);
                put_txptr(w, v.device_pk, v.tx);
            } else if constexpr (std::is_same_v<T, TxForward>) {
                w.u8(kTxForward);
                put_txptr(w, v.device_pk, v.tx);
            } else if constexpr (std::is_same_v<T, KuiRoot>) {
                w.u8(kKuiRoot);
                w.arr(v.root);
                w.u64(v.epoch);
                w.u8(v.proof ? 1 : 0);
                if (v.proof) enc::put_proof(w, *v.proof);
            } else if constexpr (std::is_same_v<T, Ack>) {
                w.u8(kAck);
                w.arr(v.subject);
            } else if constexpr (std::is_same_v<T, Reject>) {
                w.u8(kReject);
                w.u8(static_cast<uint8_t>(v.reason));
                w.arr(v.subject);
            }
        },
        m);
    return w.take();
}

std::optional<Message> decode(ByteSpan bytes) {
    wire::Reader r(bytes);
    std::optional<Message> out;
    switch (r.u8()) {
        case kJoinRequest:
            out = JoinRequest{enc::get_tx(r)};
            break;
        case kRsiCredential: {
            RsiCredential v;
            v.rsi_pk = r.fixed<PublicKey>();
            v.authority_sig = r.fixed<Signature>();
            out = v;
            break;
        }
        case kWitnessQuery: {
            WitnessQuery v;
            v.subject_pk = r.fixed<PublicKey>();
            v.claimed = enc::get_geotag(r);
            out = v;
            break;
        }
        case kWitnessReport: {
            WitnessReport v;
            v.subject_pk = r.fixed<PublicKey>();
            v.observed = r.u8() != 0;
            v.witness_pk = r.fixed<PublicKey>();
            v.witness_sig = r.fixed<Signature>();
            out = v;
            break;
        }
        case kHeaderOffer: {
            HeaderOffer v;
            v.header_hash = r.fixed<Digest>();
            v.rsi_pk = r.fixed<PublicKey>();
            v.rsi_sig = r.fixed<Signature>();
            out = v;
            break;
        }
        case kBlockBroadcast:
            out = BlockBroadcast{enc::get_block(r)};
            break;
        case kTxSubmit:
            out = get_txmsg<TxSubmit>(r);
            break;
        case kTxBroadcast:
            out = get_txmsg<TxBroadcast>(r);
            break;
        case kTxForward:
            out = get_txmsg<TxForward>(r);
            break;
        case kKuiRoot: {
            KuiRoot v;
            v.root = r.fixed<Digest>();
            v.epoch = r.u64();
            if (r.u8() != 0) v.proof = enc::get_proof(r);
            out = v;
            break;
        }
        case kAck:
            out = Ack{r.fixed<Digest>()};
            break;
        case kReject: {
            Reject v;
            uint8_t code = r.u8();
            if (code < 1 || code > 7) return std::nullopt;
            v.reason = static_cast<RejectReason>(code);
            v.subject = r.fixed<Digest>();
            out = v;
            break;
        }
        default:
            return std::nullopt;
    }
    if (!r.complete()) return std::nullopt;
    return out;
}

const char* variant_name(const Message& m) {
    static const char* names[] = {
        "join_request", "rsi_credential", "witness_query", "witness_report",
        "header_offer", "block_broadcast", "tx_submit",     "tx_broadcast",
        "tx_forward",   "kui_root",       "ack",           "reject"};
    return names[m.index()];
}

size_t variant_index(const Message& m) { return m.index(); }

}  // namespace apc::proto
