#include "peersync/gateway_http.hpp"

#include "peersync/errors.hpp"

#include <httplib.h>

#include <chrono>
#include <thread>

namespace peersync {

namespace {

double steady_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

} // namespace

struct GatewayHttpServer::Impl {
    Gateway& gateway;
    Clock clock;
    httplib::Server server;
    std::thread thread;
    int port = -1;

    Impl(Gateway& gw, Clock ck) : gateway(gw), clock(ck ? std::move(ck) : steady_seconds) {
        server.Get("/v2/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content("{}", "application/json");
        });

        auto manifests = [this](const httplib::Request& req, httplib::Response& res) {
            const std::string name = req.matches[1];
            const std::string ref = req.matches[2];
            try {
                const auto result = gateway.get_manifest(name, ref, clock());
                res.set_header("Docker-Content-Digest", result.manifest.digest().oci_string());
                if (result.stale)
                    res.set_header("Warning", "110 - \"Response is Stale\"");
                res.set_content(result.manifest.raw(), ImageManifest::kMediaType);
            } catch (const NotFoundError& e) {
                res.status = 404;
                res.set_content(e.what(), "text/plain");
            } catch (const ParseError& e) {
                res.status = 502;
                res.set_content(e.what(), "text/plain");
            }
        };
        // HEAD requests dispatch through the GET handlers with the body
        // suppressed, covering the HEAD side of the endpoint contract.
        server.Get(R"(/v2/(.+)/manifests/([^/]+))", manifests);

        auto blobs = [this](const httplib::Request& req, httplib::Response& res) {
            const std::string name = req.matches[1];
            const std::string digest_text = req.matches[2];
            try {
                const auto digest = Digest::parse(digest_text);
                auto bytes = gateway.get_blob(name, digest, clock());
                res.set_header("Docker-Content-Digest", digest.oci_string());
                res.set_content(std::string(bytes.begin(), bytes.end()),
                                "application/octet-stream");
            } catch (const std::invalid_argument& e) {
                res.status = 400;
                res.set_content(e.what(), "text/plain");
            } catch (const NotFoundError& e) {
                res.status = 404;
                res.set_content(e.what(), "text/plain");
            } catch (const UpstreamUnavailableError& e) {
                res.status = 502;
                res.set_content(e.what(), "text/plain");
            }
        };
        server.Get(R"(/v2/(.+)/blobs/([^/]+))", blobs);
    }
};

GatewayHttpServer::GatewayHttpServer(Gateway& gateway, Clock clock)
    : impl_(std::make_unique<Impl>(gateway, std::move(clock))) {}

GatewayHttpServer::~GatewayHttpServer() {
    stop();
}

bool GatewayHttpServer::start(const std::string& host, int port) {
    if (port == 0) {
        impl_->port = impl_->server.bind_to_any_port(host);
        if (impl_->port < 0) return false;
    } else {
        if (!impl_->server.bind_to_port(host, port)) return false;
        impl_->port = port;
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return true;
}

void GatewayHttpServer::stop() {
    if (impl_->thread.joinable()) {
        impl_->server.stop();
        impl_->thread.join();
    }
}

int GatewayHttpServer::port() const {
    return impl_->port;
}

} // namespace peersync
