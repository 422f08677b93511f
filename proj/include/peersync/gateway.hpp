#pragma once

#include "peersync/digest.hpp"
#include "peersync/manifest.hpp"

#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

namespace peersync {

struct UpstreamConfig {
    std::string base_url;
    double request_timeout_s = 10.0;
    uint32_t retry_limit = 2;
};

// Upstream registry facade: raw manifest JSON by (name, ref), blob bytes by
// digest. Implementations: HTTP client (live), scripted fake (tests),
// simulated origin store (simulation).
class Upstream {
public:
    virtual ~Upstream() = default;
    virtual std::optional<std::string> fetch_manifest(const std::string& name,
                                                      const std::string& ref) = 0;
    virtual std::optional<Bytes> fetch_blob(const std::string& name, const Digest& digest) = 0;
};

struct ManifestResult {
    ImageManifest manifest;
    bool stale = false; // served past its TTL because the upstream was down
};

// Pull-through cache front end: manifests held in memory with a TTL, blobs
// served from the local store or delegated to a fetcher (the download
// engine). Identical concurrent blob requests coalesce into one fetch.
class Gateway {
public:
    // Fetches one layer's bytes; throws LayerUnavailableError on failure.
    using BlobFetcher = std::function<Bytes(const LayerDescriptor&)>;

    Gateway(Upstream* upstream, BlobFetcher fetcher, double manifest_ttl_s = 60.0);

    ManifestResult get_manifest(const std::string& name, const std::string& ref, double now);
    Bytes get_blob(const std::string& name, const Digest& digest, double now);

    // Local blob store (this node's layer cache). Insertion digest-checks.
    void put_local_blob(const Bytes& bytes);
    bool has_local_blob(const Digest& digest) const;
    void drop_local_blob(const Digest& digest);
    uint64_t local_store_bytes() const;

    uint32_t upstream_manifest_fetches() const { return upstream_manifest_fetches_; }
    uint32_t engine_fetches() const { return engine_fetches_; }

private:
    std::optional<LayerDescriptor> find_layer(const Digest& digest) const;

    Upstream* upstream_;
    BlobFetcher fetcher_;
    double manifest_ttl_s_;

    struct CachedManifest {
        ImageManifest manifest;
        double fetched_at = 0;
    };
    mutable std::mutex mu_;
    std::map<std::pair<std::string, std::string>, CachedManifest> manifests_;
    std::unordered_map<Digest, Bytes> blobs_;
    std::unordered_map<Digest, std::shared_future<Bytes>> inflight_;
    uint32_t upstream_manifest_fetches_ = 0;
    uint32_t engine_fetches_ = 0;
};

} // namespace peersync
