#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace peersync {

using Bytes = std::vector<uint8_t>;
using ByteView = std::span<const uint8_t>;

// Content address: sha-256 only, lowercase hex.
class Digest {
public:
    Digest() = default;

    // Accepts "sha256:<hex>" or bare 64-char hex. Throws std::invalid_argument.
    static Digest parse(const std::string& text);

    // Wraps a raw 32-byte hash.
    static Digest from_raw(ByteView raw);

    const std::string& hex() const { return hex_; }
    std::string oci_string() const { return "sha256:" + hex_; }
    Bytes raw() const; // the 32 hash bytes; throws on an empty digest
    bool empty() const { return hex_.empty(); }

    auto operator<=>(const Digest&) const = default;

private:
    std::string hex_; // 64 lowercase hex chars
};

Bytes sha256_raw(ByteView data);
Digest sha256(ByteView data);
Digest sha256(const std::string& data);

// Incremental hashing for streamed payloads.
class Sha256Stream {
public:
    Sha256Stream();
    ~Sha256Stream();
    Sha256Stream(const Sha256Stream&) = delete;
    Sha256Stream& operator=(const Sha256Stream&) = delete;

    void update(ByteView data);
    Digest finish();

private:
    void* ctx_ = nullptr;
};

} // namespace peersync

template <>
struct std::hash<peersync::Digest> {
    size_t operator()(const peersync::Digest& d) const {
        return std::hash<std::string>{}(d.hex());
    }
};
