#include "peersync/wire.hpp"

#include "peersync/errors.hpp"

#include <cstring>

namespace peersync::wire {

void Encoder::u8(uint8_t v) {
    out_.push_back(v);
}

void Encoder::u16(uint16_t v) {
    out_.push_back(static_cast<uint8_t>(v >> 8));
    out_.push_back(static_cast<uint8_t>(v));
}

void Encoder::u32(uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8)
        out_.push_back(static_cast<uint8_t>(v >> shift));
}

void Encoder::u64(uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8)
        out_.push_back(static_cast<uint8_t>(v >> shift));
}

void Encoder::str(const std::string& s) {
    if (s.size() > UINT16_MAX)
        throw ParseError("wire", "string field too long");
    u16(static_cast<uint16_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
}

void Encoder::blob(ByteView b) {
    if (b.size() > UINT32_MAX)
        throw ParseError("wire", "blob field too long");
    u32(static_cast<uint32_t>(b.size()));
    out_.insert(out_.end(), b.begin(), b.end());
}

void Encoder::raw(ByteView b) {
    out_.insert(out_.end(), b.begin(), b.end());
}

void Encoder::digest(const Digest& d) {
    raw(d.raw());
}

Bytes Encoder::frame() const {
    if (out_.size() > kMaxFrame)
        throw ParseError("wire", "frame payload too large");
    Bytes framed;
    framed.reserve(4 + out_.size());
    const auto n = static_cast<uint32_t>(out_.size());
    for (int shift = 24; shift >= 0; shift -= 8)
        framed.push_back(static_cast<uint8_t>(n >> shift));
    framed.insert(framed.end(), out_.begin(), out_.end());
    return framed;
}

void Decoder::need(size_t n) const {
    if (pos_ + n > data_.size())
        throw ParseError("wire", "truncated message");
}

uint8_t Decoder::u8() {
    need(1);
    return data_[pos_++];
}

uint16_t Decoder::u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(data_[pos_] << 8 | data_[pos_ + 1]);
    pos_ += 2;
    return v;
}

uint32_t Decoder::u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = v << 8 | data_[pos_ + i];
    pos_ += 4;
    return v;
}

uint64_t Decoder::u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = v << 8 | data_[pos_ + i];
    pos_ += 8;
    return v;
}

std::string Decoder::str() {
    const size_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
}

Bytes Decoder::blob() {
    const size_t n = u32();
    need(n);
    Bytes b(data_.begin() + static_cast<ptrdiff_t>(pos_),
            data_.begin() + static_cast<ptrdiff_t>(pos_ + n));
    pos_ += n;
    return b;
}

Bytes Decoder::raw(size_t n) {
    need(n);
    Bytes b(data_.begin() + static_cast<ptrdiff_t>(pos_),
            data_.begin() + static_cast<ptrdiff_t>(pos_ + n));
    pos_ += n;
    return b;
}

Digest Decoder::digest() {
    return Digest::from_raw(raw(32));
}

void Decoder::expect_done() const {
    if (!done())
        throw ParseError("wire", "trailing bytes after message");
}

bool take_frame(Bytes& buffer, Bytes& payload, size_t max_frame) {
    if (buffer.size() < 4) return false;
    uint32_t n = 0;
    for (int i = 0; i < 4; ++i) n = n << 8 | buffer[static_cast<size_t>(i)];
    if (n > max_frame)
        throw ParseError("wire", "frame length exceeds limit");
    if (buffer.size() < 4 + static_cast<size_t>(n)) return false;
    payload.assign(buffer.begin() + 4, buffer.begin() + 4 + static_cast<ptrdiff_t>(n));
    buffer.erase(buffer.begin(), buffer.begin() + 4 + static_cast<ptrdiff_t>(n));
    return true;
}

} // namespace peersync::wire
