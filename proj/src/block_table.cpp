#include "peersync/block_table.hpp"

#include <algorithm>
#include <stdexcept>

namespace peersync {

uint64_t compute_block_size(uint64_t layer_size_bytes) {
    if (layer_size_bytes == 0)
        throw std::invalid_argument("layer size must be positive");

    const uint64_t L = layer_size_bytes;
    uint64_t raw;
    if (L >= 1024 * MiB)
        raw = L / 256;
    else if (L >= 256 * MiB)
        raw = L / 64;
    else if (L >= 16 * MiB)
        raw = L / 16;
    else
        return L; // single block, no rounding

    uint64_t rounded = (raw / MiB) * MiB;
    return std::max(rounded, 64 * KiB);
}

BlockTable BlockTable::build(ByteView layer_bytes) {
    if (layer_bytes.empty())
        throw std::invalid_argument("layer payload must be non-empty");
    return build_with_block_size(layer_bytes, compute_block_size(layer_bytes.size()));
}

BlockTable BlockTable::build_with_block_size(ByteView layer_bytes, uint64_t block_size) {
    if (layer_bytes.empty())
        throw std::invalid_argument("layer payload must be non-empty");
    if (block_size == 0)
        throw std::invalid_argument("block size must be positive");

    BlockTable t;
    t.layer_size_ = layer_bytes.size();
    t.block_size_ = block_size;
    t.layer_digest_ = sha256(layer_bytes);

    const uint64_t count = (t.layer_size_ + block_size - 1) / block_size;
    t.block_hashes_.reserve(count);
    t.levels_.emplace_back();
    t.levels_[0].reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        const uint64_t off = i * block_size;
        const uint64_t len = std::min<uint64_t>(block_size, t.layer_size_ - off);
        Bytes h = sha256_raw(layer_bytes.subspan(off, len));
        t.block_hashes_.push_back(Digest::from_raw(h));
        t.levels_[0].push_back(std::move(h));
    }
    t.build_tree();
    return t;
}

void BlockTable::build_tree() {
    // Binary tree over the leaf hashes; the odd node of a level is paired
    // with itself. A single-leaf table hashes the lone leaf once more so the
    // root never equals a block hash.
    if (levels_[0].size() == 1) {
        merkle_root_ = sha256(levels_[0][0]);
        return;
    }
    while (levels_.back().size() > 1) {
        const auto& cur = levels_.back();
        std::vector<Bytes> next;
        next.reserve((cur.size() + 1) / 2);
        for (size_t i = 0; i < cur.size(); i += 2) {
            const Bytes& left = cur[i];
            const Bytes& right = (i + 1 < cur.size()) ? cur[i + 1] : cur[i];
            Bytes cat;
            cat.reserve(64);
            cat.insert(cat.end(), left.begin(), left.end());
            cat.insert(cat.end(), right.begin(), right.end());
            next.push_back(sha256_raw(cat));
        }
        levels_.push_back(std::move(next));
    }
    merkle_root_ = Digest::from_raw(levels_.back()[0]);
}

uint64_t BlockTable::block_offset(uint32_t index) const {
    if (index >= block_count())
        throw std::invalid_argument("block index out of range");
    return static_cast<uint64_t>(index) * block_size_;
}

uint64_t BlockTable::block_length(uint32_t index) const {
    const uint64_t off = block_offset(index);
    return std::min<uint64_t>(block_size_, layer_size_ - off);
}

bool BlockTable::verify_block(ByteView block_bytes, uint32_t index) const {
    if (index >= block_count())
        throw std::invalid_argument("block index out of range");

    Bytes h = sha256_raw(block_bytes);
    if (Digest::from_raw(h) != block_hashes_[index]) return false;

    // Recompute the root from this leaf and its sibling path.
    if (block_count() == 1)
        return sha256(h) == merkle_root_;

    size_t pos = index;
    for (size_t lvl = 0; lvl + 1 < levels_.size(); ++lvl) {
        const auto& nodes = levels_[lvl];
        const size_t sib = (pos % 2 == 0) ? std::min(pos + 1, nodes.size() - 1) : pos - 1;
        Bytes cat;
        cat.reserve(64);
        if (pos % 2 == 0) {
            cat.insert(cat.end(), h.begin(), h.end());
            cat.insert(cat.end(), nodes[sib].begin(), nodes[sib].end());
        } else {
            cat.insert(cat.end(), nodes[sib].begin(), nodes[sib].end());
            cat.insert(cat.end(), h.begin(), h.end());
        }
        h = sha256_raw(cat);
        pos /= 2;
    }
    return Digest::from_raw(h) == merkle_root_;
}

} // namespace peersync
