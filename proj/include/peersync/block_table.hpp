#pragma once

#include "peersync/digest.hpp"

#include <cstdint>
#include <vector>

namespace peersync {

inline constexpr uint64_t KiB = 1024;
inline constexpr uint64_t MiB = 1024 * 1024;

// Block size for a layer of the given size. Four size brackets divide the
// layer by 256, 64, or 16, or keep it whole below 16 MiB; the result is
// rounded down to a whole MiB with a 64 KiB floor. Throws on zero size.
uint64_t compute_block_size(uint64_t layer_size_bytes);

// Per-layer partition into verifiable blocks plus the Merkle tree over the
// block hashes. Immutable after construction.
class BlockTable {
public:
    // Partitions using compute_block_size.
    static BlockTable build(ByteView layer_bytes);
    // Partitions with an explicit block size, e.g. when reconstructing the
    // table a remote peer advertised in its handshake.
    static BlockTable build_with_block_size(ByteView layer_bytes, uint64_t block_size);

    const Digest& layer_digest() const { return layer_digest_; }
    uint64_t layer_size_bytes() const { return layer_size_; }
    uint64_t block_size_bytes() const { return block_size_; }
    uint32_t block_count() const { return static_cast<uint32_t>(block_hashes_.size()); }
    const std::vector<Digest>& block_hashes() const { return block_hashes_; }
    const Digest& merkle_root() const { return merkle_root_; }

    // Byte range [offset, offset+length) of block `index` within the layer.
    uint64_t block_offset(uint32_t index) const;
    uint64_t block_length(uint32_t index) const;

    // True iff the bytes hash to block_hashes[index] and that hash's Merkle
    // path reproduces merkle_root. Throws on out-of-range index.
    bool verify_block(ByteView block_bytes, uint32_t index) const;

private:
    Digest layer_digest_;
    uint64_t layer_size_ = 0;
    uint64_t block_size_ = 0;
    std::vector<Digest> block_hashes_;
    // levels_[0] = leaf hashes (raw 32-byte), levels_.back() has one node.
    std::vector<std::vector<Bytes>> levels_;
    Digest merkle_root_;

    void build_tree();
};

// Download-side lifecycle of one block.
enum class BlockStatus : uint8_t { missing, pending, downloading, verified };

struct BlockState {
    uint32_t index = 0;
    BlockStatus status = BlockStatus::missing;
    uint32_t retries = 0;
};

} // namespace peersync
