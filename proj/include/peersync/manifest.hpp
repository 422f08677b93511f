#pragma once

#include "peersync/digest.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace peersync {

struct LayerDescriptor {
    Digest digest;
    uint64_t size_bytes = 0;
    std::string media_type = "application/vnd.oci.image.layer.v1.tar";
};

// Immutable after construction; safe to share across threads.
class ImageManifest {
public:
    // Builds a manifest and its canonical JSON body. Throws on empty layers.
    static ImageManifest build(std::string name, std::string tag,
                               std::vector<LayerDescriptor> layers);

    // Parses an OCI-style JSON body, validating structure. `name`/`tag` come
    // from the request path since OCI bodies do not carry them.
    static ImageManifest parse(std::string name, std::string tag, const std::string& raw);

    const std::string& name() const { return name_; }
    const std::string& tag() const { return tag_; }
    const std::vector<LayerDescriptor>& layers() const { return layers_; }
    const std::string& raw() const { return raw_; }

    // sha-256 of raw(); this is the manifest's own content address.
    const Digest& digest() const { return digest_; }

    uint64_t total_layer_bytes() const;
    bool has_layer(const Digest& d) const;

    static constexpr const char* kMediaType = "application/vnd.oci.image.manifest.v1+json";

private:
    std::string name_;
    std::string tag_;
    std::vector<LayerDescriptor> layers_;
    std::string raw_;
    Digest digest_;
};

} // namespace peersync
