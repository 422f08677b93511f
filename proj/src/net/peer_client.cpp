#include "peersync/net/peer_client.hpp"

#include "peersync/errors.hpp"
#include "peersync/wire.hpp"
#include "socket_util.hpp"

#include <chrono>
#include <cmath>

namespace peersync::net {

PeerClient::~PeerClient() { close(); }

bool PeerClient::connect(const std::string& host, uint16_t port, double timeout_s) {
    close();
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return false;
    timeval tv{};
    tv.tv_sec = static_cast<time_t>(timeout_s);
    tv.tv_usec = static_cast<suseconds_t>((timeout_s - std::floor(timeout_s)) * 1e6);
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
    sockaddr_in addr{};
    if (!make_addr(host, port, addr) ||
        ::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd);
        return false;
    }
    fd_ = fd;
    recv_buffer_.clear();
    return true;
}

void PeerClient::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
    recv_buffer_.clear();
}

std::optional<PeerMessage> PeerClient::round_trip(const PeerMessage& request) {
    if (fd_ < 0) return std::nullopt;
    if (!send_all(fd_, encode_peer_frame(request))) {
        close();
        return std::nullopt;
    }
    Bytes payload;
    try {
        if (!recv_frame(fd_, recv_buffer_, payload)) {
            close();
            return std::nullopt;
        }
        return decode_peer_payload(payload);
    } catch (const ParseError&) {
        close();
        return std::nullopt;
    }
}

std::optional<HandshakeResp> PeerClient::handshake(const Digest& layer) {
    auto reply = round_trip(HandshakeReq{layer});
    if (!reply) return std::nullopt;
    if (const auto* resp = std::get_if<HandshakeResp>(&*reply)) return *resp;
    return std::nullopt;
}

PeerClient::BlockResult PeerClient::fetch_block(const Digest& layer, uint32_t block_index) {
    BlockResult result;
    const auto started = std::chrono::steady_clock::now();
    auto reply = round_trip(BlockReq{layer, block_index});
    result.elapsed_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (!reply) return result;
    if (auto* resp = std::get_if<BlockResp>(&*reply); resp && resp->block_index == block_index) {
        result.ok = true;
        result.bytes = std::move(resp->bytes);
    }
    return result;
}

} // namespace peersync::net
