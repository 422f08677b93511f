#include "peersync/net/discovery.hpp"

#include "peersync/errors.hpp"
#include "peersync/wire.hpp"
#include "socket_util.hpp"

#include <poll.h>

#include <atomic>
#include <chrono>
#include <cstring>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

namespace peersync::net {

namespace {

constexpr uint8_t kTagQuery = 1;
constexpr uint8_t kTagReply = 2;

Bytes encode_query(const Digest& layer) {
    wire::Encoder enc;
    enc.u8(kTagQuery);
    enc.digest(layer);
    return enc.take();
}

Bytes encode_reply(const Digest& layer, const PeerId& self, uint16_t wire_port) {
    wire::Encoder enc;
    enc.u8(kTagReply);
    enc.digest(layer);
    enc.str(self.id);
    enc.str(self.lan_id);
    enc.u16(wire_port);
    return enc.take();
}

} // namespace

struct DiscoveryAgent::Impl {
    PeerId self;
    uint16_t wire_port;
    HoldsLayer holds;

    int fd = -1;
    uint16_t port = 0;
    std::atomic<bool> stopping{false};
    std::thread responder;

    // Replies collected for the probe currently in flight, if any.
    std::mutex probe_mutex;
    const Digest* probe_layer = nullptr;
    std::vector<PeerHint>* probe_out = nullptr;

    Impl(PeerId s, uint16_t wp, HoldsLayer h)
        : self(std::move(s)), wire_port(wp), holds(std::move(h)) {}

    ~Impl() { shutdown(); }

    void shutdown() {
        stopping.store(true);
        if (fd >= 0) {
            ::shutdown(fd, SHUT_RDWR);
            ::close(fd);
            fd = -1;
        }
        if (responder.joinable()) responder.join();
    }

    void handle_datagram(const Bytes& datagram, const sockaddr_in& from) {
        if (datagram.empty()) return;
        wire::Decoder dec(datagram);
        const uint8_t tag = dec.u8();
        if (tag == kTagQuery) {
            const Digest layer = dec.digest();
            dec.expect_done();
            if (!holds || !holds(layer)) return;
            const Bytes reply = encode_reply(layer, self, wire_port);
            ::sendto(fd, reply.data(), reply.size(), 0,
                     reinterpret_cast<const sockaddr*>(&from), sizeof(from));
            return;
        }
        if (tag == kTagReply) {
            const Digest layer = dec.digest();
            PeerHint hint;
            hint.peer.id = dec.str();
            hint.peer.lan_id = dec.str();
            hint.wire_port = dec.u16();
            dec.expect_done();
            char host[INET_ADDRSTRLEN] = {};
            inet_ntop(AF_INET, &from.sin_addr, host, sizeof(host));
            hint.host = host;
            std::lock_guard lock(probe_mutex);
            if (probe_out && probe_layer && layer == *probe_layer)
                probe_out->push_back(std::move(hint));
        }
    }

    void recv_loop() {
        while (!stopping.load()) {
            pollfd pfd{fd, POLLIN, 0};
            const int rc = ::poll(&pfd, 1, 200);
            if (rc <= 0) continue;
            uint8_t buf[2048];
            sockaddr_in from{};
            socklen_t from_len = sizeof(from);
            const ssize_t n = ::recvfrom(fd, buf, sizeof(buf), 0,
                                         reinterpret_cast<sockaddr*>(&from), &from_len);
            if (n <= 0) continue;
            try {
                handle_datagram(Bytes(buf, buf + n), from);
            } catch (const ParseError&) {
                // malformed datagram: ignore
            }
        }
    }
};

DiscoveryAgent::DiscoveryAgent(PeerId self, uint16_t wire_port, HoldsLayer holds)
    : impl_(std::make_unique<Impl>(std::move(self), wire_port, std::move(holds))) {}

DiscoveryAgent::~DiscoveryAgent() { stop(); }

void DiscoveryAgent::start(const std::string& host, uint16_t port) {
    if (impl_->fd >= 0) throw std::logic_error("agent already started");
    const int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd < 0) throw std::runtime_error("socket() failed");
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    if (!make_addr(host, port, addr)) {
        ::close(fd);
        throw std::invalid_argument("bad bind address: " + host);
    }
    if (::bind(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd);
        throw std::runtime_error("bind() failed");
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
    impl_->fd = fd;
    impl_->port = ntohs(bound.sin_port);
    impl_->stopping.store(false);
    impl_->responder = std::thread([impl = impl_.get()] { impl->recv_loop(); });
}

void DiscoveryAgent::stop() {
    if (impl_) impl_->shutdown();
}

uint16_t DiscoveryAgent::port() const { return impl_->port; }

std::vector<PeerHint> DiscoveryAgent::probe(const std::vector<Target>& targets,
                                            const Digest& layer, double timeout_s) {
    std::vector<PeerHint> collected;
    {
        std::lock_guard lock(impl_->probe_mutex);
        impl_->probe_layer = &layer;
        impl_->probe_out = &collected;
    }
    const Bytes query = encode_query(layer);
    for (const auto& target : targets) {
        sockaddr_in addr{};
        if (!make_addr(target.host, target.port, addr)) continue;
        ::sendto(impl_->fd, query.data(), query.size(), 0,
                 reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
    }
    std::this_thread::sleep_for(std::chrono::duration<double>(timeout_s));
    std::vector<PeerHint> result;
    {
        std::lock_guard lock(impl_->probe_mutex);
        impl_->probe_layer = nullptr;
        impl_->probe_out = nullptr;
        result = std::move(collected);
    }
    std::set<std::string> seen;
    std::vector<PeerHint> unique;
    for (auto& hint : result)
        if (seen.insert(hint.peer.id).second) unique.push_back(std::move(hint));
    return unique;
}

} // namespace peersync::net
