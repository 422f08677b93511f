#include "peersync/net/peer_server.hpp"

#include "peersync/errors.hpp"
#include "peersync/net/peer_wire.hpp"
#include "peersync/wire.hpp"
#include "socket_util.hpp"

#include <poll.h>

#include <atomic>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace peersync::net {

struct PeerServer::Impl {
    LayerLookup lookup;
    int listen_fd = -1;
    uint16_t port = 0;
    std::atomic<bool> stopping{false};
    std::thread accept_thread;
    std::mutex workers_mutex;
    std::vector<std::thread> workers;
    std::vector<int> live_fds;

    explicit Impl(LayerLookup fn) : lookup(std::move(fn)) {}

    ~Impl() { shutdown(); }

    void shutdown() {
        stopping.store(true);
        if (listen_fd >= 0) {
            ::shutdown(listen_fd, SHUT_RDWR);
            ::close(listen_fd);
            listen_fd = -1;
        }
        if (accept_thread.joinable()) accept_thread.join();
        std::vector<std::thread> to_join;
        {
            std::lock_guard lock(workers_mutex);
            // Wake workers blocked in recv() on connections clients left open.
            for (int fd : live_fds) ::shutdown(fd, SHUT_RDWR);
            to_join.swap(workers);
        }
        for (auto& t : to_join)
            if (t.joinable()) t.join();
        std::lock_guard lock(workers_mutex);
        live_fds.clear();
    }

    PeerMessage answer(const PeerMessage& request) const {
        if (const auto* hs = std::get_if<HandshakeReq>(&request)) {
            auto served = lookup(hs->layer);
            if (!served) return PeerError{PeerError::kUnknownLayer, "layer not served"};
            return HandshakeResp{served->table->merkle_root(),
                                 served->table->block_size_bytes(),
                                 static_cast<uint32_t>(served->table->block_count())};
        }
        if (const auto* req = std::get_if<BlockReq>(&request)) {
            auto served = lookup(req->layer);
            if (!served) return PeerError{PeerError::kUnknownLayer, "layer not served"};
            if (req->block_index >= served->table->block_count())
                return PeerError{PeerError::kBadIndex, "block index out of range"};
            const uint64_t off = served->table->block_offset(req->block_index);
            const uint64_t len = served->table->block_length(req->block_index);
            const auto& payload = *served->payload;
            if (off + len > payload.size())
                return PeerError{PeerError::kInternal, "payload truncated"};
            Bytes block(payload.begin() + static_cast<ptrdiff_t>(off),
                        payload.begin() + static_cast<ptrdiff_t>(off + len));
            return BlockResp{req->block_index, std::move(block)};
        }
        return PeerError{PeerError::kInternal, "unexpected message"};
    }

    void serve_connection(int fd) {
        Bytes buffer;
        Bytes payload;
        while (!stopping.load()) {
            bool got = false;
            try {
                got = recv_frame(fd, buffer, payload);
            } catch (const ParseError&) {
                break; // oversized or malformed frame: drop the connection
            }
            if (!got) break;
            PeerMessage reply;
            try {
                reply = answer(decode_peer_payload(payload));
            } catch (const ParseError&) {
                reply = PeerError{PeerError::kInternal, "bad request"};
            }
            if (!send_all(fd, encode_peer_frame(reply))) break;
        }
        ::close(fd);
        std::lock_guard lock(workers_mutex);
        std::erase(live_fds, fd);
    }

    void accept_loop() {
        while (!stopping.load()) {
            pollfd pfd{listen_fd, POLLIN, 0};
            const int rc = ::poll(&pfd, 1, 200);
            if (rc <= 0) continue;
            const int client = ::accept(listen_fd, nullptr, nullptr);
            if (client < 0) continue;
            std::lock_guard lock(workers_mutex);
            if (stopping.load()) {
                ::close(client);
                continue;
            }
            live_fds.push_back(client);
            workers.emplace_back([this, client] { serve_connection(client); });
        }
    }
};

PeerServer::PeerServer(LayerLookup lookup) : impl_(std::make_unique<Impl>(std::move(lookup))) {}

PeerServer::~PeerServer() { stop(); }

bool PeerServer::start(const std::string& host, uint16_t port) {
    if (impl_->listen_fd >= 0) throw std::logic_error("server already started");
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return false;
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    if (!make_addr(host, port, addr) ||
        ::bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0 ||
        ::listen(fd, 16) != 0) {
        ::close(fd);
        return false;
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
    impl_->listen_fd = fd;
    impl_->port = ntohs(bound.sin_port);
    impl_->stopping.store(false);
    impl_->accept_thread = std::thread([impl = impl_.get()] { impl->accept_loop(); });
    return true;
}

void PeerServer::stop() {
    if (impl_) impl_->shutdown();
}

uint16_t PeerServer::port() const { return impl_->port; }

} // namespace peersync::net
