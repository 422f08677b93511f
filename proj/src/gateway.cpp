#include "peersync/gateway.hpp"

#include "peersync/errors.hpp"

namespace peersync {

Gateway::Gateway(Upstream* upstream, BlobFetcher fetcher, double manifest_ttl_s)
    : upstream_(upstream), fetcher_(std::move(fetcher)), manifest_ttl_s_(manifest_ttl_s) {}

ManifestResult Gateway::get_manifest(const std::string& name, const std::string& ref, double now) {
    const auto key = std::make_pair(name, ref);
    {
        std::lock_guard lock(mu_);
        auto it = manifests_.find(key);
        if (it != manifests_.end() && now - it->second.fetched_at < manifest_ttl_s_)
            return {it->second.manifest, false};
    }

    std::optional<std::string> raw;
    if (upstream_) {
        raw = upstream_->fetch_manifest(name, ref);
        std::lock_guard lock(mu_);
        ++upstream_manifest_fetches_;
    }
    if (raw) {
        try {
            auto parsed = ImageManifest::parse(name, ref, *raw);
            std::lock_guard lock(mu_);
            auto [it, _] = manifests_.insert_or_assign(key, CachedManifest{parsed, now});
            return {it->second.manifest, false};
        } catch (const ParseError&) {
            // fall through: an unparsable upstream body is as good as no body
        }
    }

    std::lock_guard lock(mu_);
    auto it = manifests_.find(key);
    if (it != manifests_.end())
        return {it->second.manifest, true}; // expired but the upstream is down
    throw NotFoundError("manifest " + name + ":" + ref + " unknown and upstream unreachable");
}

std::optional<LayerDescriptor> Gateway::find_layer(const Digest& digest) const {
    std::lock_guard lock(mu_);
    for (const auto& [key, cached] : manifests_)
        for (const auto& layer : cached.manifest.layers())
            if (layer.digest == digest) return layer;
    return std::nullopt;
}

Bytes Gateway::get_blob(const std::string& name, const Digest& digest, double now) {
    (void)now;
    {
        std::lock_guard lock(mu_);
        auto it = blobs_.find(digest);
        if (it != blobs_.end()) return it->second;
    }

    // coalesce concurrent requests for the same digest into one fetch
    std::shared_future<Bytes> fut;
    bool leader = false;
    std::promise<Bytes> promise;
    {
        std::lock_guard lock(mu_);
        auto it = inflight_.find(digest);
        if (it != inflight_.end()) {
            fut = it->second;
        } else {
            fut = promise.get_future().share();
            inflight_.emplace(digest, fut);
            leader = true;
        }
    }
    if (!leader) return fut.get(); // rethrows the leader's failure

    auto finish = [&](std::exception_ptr err, Bytes bytes) -> Bytes {
        {
            std::lock_guard lock(mu_);
            inflight_.erase(digest);
        }
        if (err) {
            promise.set_exception(err);
            std::rethrow_exception(err);
        }
        promise.set_value(bytes);
        return bytes;
    };

    try {
        Bytes bytes;
        const auto layer = find_layer(digest);
        if (layer && fetcher_) {
            {
                std::lock_guard lock(mu_);
                ++engine_fetches_;
            }
            bytes = fetcher_(*layer);
        } else if (upstream_) {
            auto fetched = upstream_->fetch_blob(name, digest);
            if (!fetched)
                throw NotFoundError("blob " + digest.oci_string() + " not found");
            bytes = std::move(*fetched);
        } else {
            throw NotFoundError("blob " + digest.oci_string() + " unknown");
        }
        if (sha256(bytes) != digest)
            throw UpstreamUnavailableError("blob bytes do not match " + digest.oci_string());
        {
            std::lock_guard lock(mu_);
            blobs_[digest] = bytes;
        }
        return finish(nullptr, std::move(bytes));
    } catch (const LayerUnavailableError& e) {
        return finish(std::make_exception_ptr(
                          UpstreamUnavailableError(std::string("layer fetch failed: ") + e.what())),
                      {});
    } catch (...) {
        return finish(std::current_exception(), {});
    }
}

void Gateway::put_local_blob(const Bytes& bytes) {
    const auto digest = sha256(bytes);
    std::lock_guard lock(mu_);
    blobs_[digest] = bytes;
}

bool Gateway::has_local_blob(const Digest& digest) const {
    std::lock_guard lock(mu_);
    return blobs_.count(digest) > 0;
}

void Gateway::drop_local_blob(const Digest& digest) {
    std::lock_guard lock(mu_);
    blobs_.erase(digest);
}

uint64_t Gateway::local_store_bytes() const {
    std::lock_guard lock(mu_);
    uint64_t total = 0;
    for (const auto& [d, b] : blobs_) total += b.size();
    return total;
}

} // namespace peersync
