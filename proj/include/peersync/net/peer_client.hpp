#pragma once

#include "peersync/net/peer_wire.hpp"

#include <optional>
#include <string>

namespace peersync::net {

// Blocking client side of the block transfer protocol. One TCP connection,
// requests answered in order.
class PeerClient {
public:
    PeerClient() = default;
    ~PeerClient();
    PeerClient(const PeerClient&) = delete;
    PeerClient& operator=(const PeerClient&) = delete;

    bool connect(const std::string& host, uint16_t port, double timeout_s = 5.0);
    void close();
    bool connected() const { return fd_ >= 0; }

    std::optional<HandshakeResp> handshake(const Digest& layer);

    struct BlockResult {
        bool ok = false;
        Bytes bytes;
        double elapsed_s = 0;
    };
    BlockResult fetch_block(const Digest& layer, uint32_t block_index);

private:
    std::optional<PeerMessage> round_trip(const PeerMessage& request);
    int fd_ = -1;
    Bytes recv_buffer_;
};

} // namespace peersync::net
