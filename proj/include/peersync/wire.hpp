#pragma once

#include "peersync/digest.hpp"

#include <cstdint>
#include <string>

namespace peersync::wire {

// Byte-level codec for the binary protocols: fixed-width integers in network
// byte order, length-prefixed strings/blobs, raw 32-byte digests. Frames are
// u32 length + payload; the first payload byte is the message type tag.

class Encoder {
public:
    void u8(uint8_t v);
    void u16(uint16_t v);
    void u32(uint32_t v);
    void u64(uint64_t v);
    void str(const std::string& s);  // u16 length prefix
    void blob(ByteView b);           // u32 length prefix
    void raw(ByteView b);            // no prefix
    void digest(const Digest& d);    // 32 raw bytes

    const Bytes& bytes() const { return out_; }
    Bytes take() { return std::move(out_); }

    // Wraps the accumulated payload in a u32 length prefix.
    Bytes frame() const;

private:
    Bytes out_;
};

class Decoder {
public:
    explicit Decoder(ByteView data) : data_(data) {}

    uint8_t u8();
    uint16_t u16();
    uint32_t u32();
    uint64_t u64();
    std::string str();
    Bytes blob();
    Bytes raw(size_t n);
    Digest digest();

    size_t remaining() const { return data_.size() - pos_; }
    bool done() const { return pos_ == data_.size(); }
    // Throws ParseError unless the buffer was consumed exactly.
    void expect_done() const;

private:
    void need(size_t n) const;
    ByteView data_;
    size_t pos_ = 0;
};

// Splits one length-prefixed frame off the front of `buffer`. Returns the
// payload and erases the consumed bytes, or an empty optional when the buffer
// does not yet hold a complete frame. Throws ParseError on an oversized
// length prefix (> max_frame).
constexpr size_t kMaxFrame = 64 * 1024 * 1024;
bool take_frame(Bytes& buffer, Bytes& payload, size_t max_frame = kMaxFrame);

} // namespace peersync::wire
