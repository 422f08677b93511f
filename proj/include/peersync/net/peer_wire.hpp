#pragma once

#include "peersync/wire.hpp"

#include <cstdint>
#include <string>
#include <variant>

namespace peersync::net {

// Block transfer protocol: handshake advertises the layer's block geometry,
// then (layer, block index) requests pull one block each.

struct HandshakeReq {
    Digest layer;
};
struct HandshakeResp {
    Digest merkle_root;
    uint64_t block_size = 0;
    uint32_t block_count = 0;
};
struct BlockReq {
    Digest layer;
    uint32_t block_index = 0;
};
struct BlockResp {
    uint32_t block_index = 0;
    Bytes bytes;
};
struct PeerError {
    static constexpr uint16_t kUnknownLayer = 1;
    static constexpr uint16_t kBadIndex = 2;
    static constexpr uint16_t kInternal = 3;
    uint16_t code = 0;
    std::string message;
};

using PeerMessage = std::variant<HandshakeReq, HandshakeResp, BlockReq, BlockResp, PeerError>;

Bytes encode_peer_frame(const PeerMessage& msg);
PeerMessage decode_peer_payload(ByteView payload);

} // namespace peersync::net
