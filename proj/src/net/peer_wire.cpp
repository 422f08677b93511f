#include "peersync/net/peer_wire.hpp"

#include "peersync/errors.hpp"

namespace peersync::net {

namespace {

enum class Tag : uint8_t {
    handshake_req = 1,
    handshake_resp = 2,
    block_req = 3,
    block_resp = 4,
    error = 5,
};

} // namespace

Bytes encode_peer_frame(const PeerMessage& msg) {
    wire::Encoder e;
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, HandshakeReq>) {
                e.u8(static_cast<uint8_t>(Tag::handshake_req));
                e.digest(m.layer);
            } else if constexpr (std::is_same_v<T, HandshakeResp>) {
                e.u8(static_cast<uint8_t>(Tag::handshake_resp));
                e.digest(m.merkle_root);
                e.u64(m.block_size);
                e.u32(m.block_count);
            } else if constexpr (std::is_same_v<T, BlockReq>) {
                e.u8(static_cast<uint8_t>(Tag::block_req));
                e.digest(m.layer);
                e.u32(m.block_index);
            } else if constexpr (std::is_same_v<T, BlockResp>) {
                e.u8(static_cast<uint8_t>(Tag::block_resp));
                e.u32(m.block_index);
                e.blob(m.bytes);
            } else if constexpr (std::is_same_v<T, PeerError>) {
                e.u8(static_cast<uint8_t>(Tag::error));
                e.u16(m.code);
                e.str(m.message);
            }
        },
        msg);
    return e.frame();
}

PeerMessage decode_peer_payload(ByteView payload) {
    wire::Decoder d(payload);
    const uint8_t tag = d.u8();
    PeerMessage out;
    switch (static_cast<Tag>(tag)) {
    case Tag::handshake_req:
        out = HandshakeReq{d.digest()};
        break;
    case Tag::handshake_resp: {
        HandshakeResp m;
        m.merkle_root = d.digest();
        m.block_size = d.u64();
        m.block_count = d.u32();
        out = m;
        break;
    }
    case Tag::block_req: {
        BlockReq m;
        m.layer = d.digest();
        m.block_index = d.u32();
        out = m;
        break;
    }
    case Tag::block_resp: {
        BlockResp m;
        m.block_index = d.u32();
        m.bytes = d.blob();
        out = m;
        break;
    }
    case Tag::error: {
        PeerError m;
        m.code = d.u16();
        m.message = d.str();
        out = m;
        break;
    }
    default:
        throw ParseError("peer", "unknown message tag " + std::to_string(tag));
    }
    d.expect_done();
    return out;
}

} // namespace peersync::net
