#pragma once

#include "peersync/block_table.hpp"
#include "peersync/digest.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace peersync::net {

// Serves stored layers over the block transfer protocol. One thread accepts;
// each connection gets its own worker. Lookup returns the layer bytes plus
// its block table (shared, immutable) or nothing when the layer is unknown.
class PeerServer {
public:
    struct Served {
        std::shared_ptr<const Bytes> payload;
        std::shared_ptr<const BlockTable> table;
    };
    using LayerLookup = std::function<std::optional<Served>(const Digest&)>;

    explicit PeerServer(LayerLookup lookup);
    ~PeerServer();
    PeerServer(const PeerServer&) = delete;
    PeerServer& operator=(const PeerServer&) = delete;

    bool start(const std::string& host = "127.0.0.1", uint16_t port = 0);
    void stop();
    uint16_t port() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace peersync::net
