#pragma once

#include "peersync/digest.hpp"
#include "peersync/wire.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>
#include <optional>
#include <string>

namespace peersync::net {

inline bool make_addr(const std::string& host, uint16_t port, sockaddr_in& out) {
    std::memset(&out, 0, sizeof(out));
    out.sin_family = AF_INET;
    out.sin_port = htons(port);
    return inet_pton(AF_INET, host.c_str(), &out.sin_addr) == 1;
}

inline bool send_all(int fd, ByteView data) {
    size_t sent = 0;
    while (sent < data.size()) {
        const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n <= 0) return false;
        sent += static_cast<size_t>(n);
    }
    return true;
}

// Reads until one length-prefixed frame is complete. Returns false on EOF or
// error before completion.
inline bool recv_frame(int fd, Bytes& buffer, Bytes& payload) {
    for (;;) {
        if (wire::take_frame(buffer, payload)) return true;
        uint8_t chunk[64 * 1024];
        const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
        if (n <= 0) return false;
        buffer.insert(buffer.end(), chunk, chunk + n);
    }
}

} // namespace peersync::net
