#include "peersync/manifest.hpp"

#include "peersync/errors.hpp"

#include <json.hpp>

#include <stdexcept>

namespace peersync {

using nlohmann::json;

ImageManifest ImageManifest::build(std::string name, std::string tag,
                                   std::vector<LayerDescriptor> layers) {
    if (layers.empty())
        throw std::invalid_argument("manifest requires at least one layer");

    json body;
    body["schemaVersion"] = 2;
    body["mediaType"] = kMediaType;
    body["name"] = name;
    body["tag"] = tag;
    body["layers"] = json::array();
    for (const auto& l : layers) {
        body["layers"].push_back({{"mediaType", l.media_type},
                                  {"digest", l.digest.oci_string()},
                                  {"size", l.size_bytes}});
    }

    ImageManifest m;
    m.name_ = std::move(name);
    m.tag_ = std::move(tag);
    m.layers_ = std::move(layers);
    m.raw_ = body.dump(2);
    m.digest_ = sha256(m.raw_);
    return m;
}

ImageManifest ImageManifest::parse(std::string name, std::string tag, const std::string& raw) {
    json body;
    try {
        body = json::parse(raw);
    } catch (const json::parse_error& e) {
        throw ParseError("manifest", e.what());
    }

    if (!body.contains("layers") || !body["layers"].is_array() || body["layers"].empty())
        throw ParseError("manifest", "missing or empty layers array");

    ImageManifest m;
    m.name_ = std::move(name);
    m.tag_ = std::move(tag);
    for (const auto& jl : body["layers"]) {
        LayerDescriptor l;
        try {
            l.digest = Digest::parse(jl.at("digest").get<std::string>());
        } catch (const std::exception& e) {
            throw ParseError("manifest.layers", e.what());
        }
        if (!jl.contains("size") || !jl["size"].is_number_unsigned())
            throw ParseError("manifest.layers", "layer size missing or negative");
        l.size_bytes = jl["size"].get<uint64_t>();
        if (jl.contains("mediaType")) l.media_type = jl["mediaType"].get<std::string>();
        m.layers_.push_back(std::move(l));
    }
    m.raw_ = raw;
    m.digest_ = sha256(raw);
    return m;
}

uint64_t ImageManifest::total_layer_bytes() const {
    uint64_t total = 0;
    for (const auto& l : layers_) total += l.size_bytes;
    return total;
}

bool ImageManifest::has_layer(const Digest& d) const {
    for (const auto& l : layers_)
        if (l.digest == d) return true;
    return false;
}

} // namespace peersync
