#include "peersync/digest.hpp"

#include <openssl/evp.h>

#include <stdexcept>
#include <string_view>

namespace peersync {

namespace {

bool is_lower_hex(std::string_view s) {
    for (char c : s) {
        const bool ok = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
        if (!ok) return false;
    }
    return true;
}

std::string to_hex(ByteView raw) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(raw.size() * 2);
    for (uint8_t b : raw) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

} // namespace

Digest Digest::parse(const std::string& text) {
    std::string_view hex = text;
    if (const auto pos = text.find(':'); pos != std::string::npos) {
        if (text.substr(0, pos) != "sha256")
            throw std::invalid_argument("unsupported digest algorithm: " + text.substr(0, pos));
        hex = std::string_view(text).substr(pos + 1);
    }
    if (hex.size() != 64 || !is_lower_hex(hex))
        throw std::invalid_argument("digest must be 64 lowercase hex chars: " + text);
    Digest d;
    d.hex_.assign(hex);
    return d;
}

Bytes Digest::raw() const {
    if (hex_.size() != 64)
        throw std::invalid_argument("cannot take raw bytes of an empty digest");
    Bytes out(32);
    for (size_t i = 0; i < 32; ++i) {
        auto nibble = [&](char c) -> uint8_t {
            return c <= '9' ? static_cast<uint8_t>(c - '0') : static_cast<uint8_t>(c - 'a' + 10);
        };
        out[i] = static_cast<uint8_t>(nibble(hex_[2 * i]) << 4 | nibble(hex_[2 * i + 1]));
    }
    return out;
}

Digest Digest::from_raw(ByteView raw) {
    if (raw.size() != 32)
        throw std::invalid_argument("sha-256 digest must be 32 bytes");
    Digest d;
    d.hex_ = to_hex(raw);
    return d;
}

Bytes sha256_raw(ByteView data) {
    Bytes out(32);
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    EVP_DigestUpdate(ctx, data.data(), data.size());
    EVP_DigestFinal_ex(ctx, out.data(), &len);
    EVP_MD_CTX_free(ctx);
    return out;
}

Digest sha256(ByteView data) {
    return Digest::from_raw(sha256_raw(data));
}

Digest sha256(const std::string& data) {
    return sha256(ByteView(reinterpret_cast<const uint8_t*>(data.data()), data.size()));
}

Sha256Stream::Sha256Stream() {
    auto* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    ctx_ = ctx;
}

Sha256Stream::~Sha256Stream() {
    if (ctx_) EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_));
}

void Sha256Stream::update(ByteView data) {
    EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data.data(), data.size());
}

Digest Sha256Stream::finish() {
    Bytes out(32);
    unsigned int len = 0;
    EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), out.data(), &len);
    return Digest::from_raw(out);
}

} // namespace peersync
