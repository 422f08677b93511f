#pragma once

#include "peersync/digest.hpp"
#include "peersync/scoring.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace peersync::net {

// A peer that answered a discovery probe for a layer.
struct PeerHint {
    PeerId peer;
    std::string host;
    uint16_t wire_port = 0;
};

// UDP query/reply agent for finding layer holders on the local segment.
// Responds to probes for layers the registered predicate reports as held.
// Probing sends to an explicit target list, which keeps the exchange
// unicast-testable; the same datagrams work over a broadcast address.
class DiscoveryAgent {
public:
    using HoldsLayer = std::function<bool(const Digest&)>;

    DiscoveryAgent(PeerId self, uint16_t wire_port, HoldsLayer holds);
    ~DiscoveryAgent();

    DiscoveryAgent(const DiscoveryAgent&) = delete;
    DiscoveryAgent& operator=(const DiscoveryAgent&) = delete;

    void start(const std::string& host = "127.0.0.1", uint16_t port = 0);
    void stop();

    uint16_t port() const;

    struct Target {
        std::string host;
        uint16_t port = 0;
    };

    // Sends a query for `layer` to every target, then collects replies until
    // the deadline. Duplicate responders are dropped.
    std::vector<PeerHint> probe(const std::vector<Target>& targets, const Digest& layer,
                                double timeout_s);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace peersync::net
