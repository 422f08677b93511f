#pragma once

#include "peersync/gateway.hpp"

#include <functional>
#include <memory>
#include <string>

namespace peersync {

// HTTP front end for live mode: the /v2/ endpoint subset over a Gateway.
// Binds an ephemeral port unless one is given; serves on a background thread.
class GatewayHttpServer {
public:
    using Clock = std::function<double()>;

    explicit GatewayHttpServer(Gateway& gateway, Clock clock = {});
    ~GatewayHttpServer();
    GatewayHttpServer(const GatewayHttpServer&) = delete;
    GatewayHttpServer& operator=(const GatewayHttpServer&) = delete;

    // Binds and starts serving; returns false when the bind fails.
    bool start(const std::string& host = "127.0.0.1", int port = 0);
    void stop();
    int port() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace peersync
