#include "peersync/block_table.hpp"
#include "peersync/digest.hpp"
#include "peersync/errors.hpp"
#include "peersync/manifest.hpp"
#include "peersync/rng.hpp"

#include <doctest.h>

#include <cstring>

#include "merkle_oracle.hpp"

using namespace peersync;

namespace {

Bytes random_payload(uint64_t size, uint64_t seed) {
    Bytes out(size);
    Rng rng(seed);
    uint64_t i = 0;
    for (; i + 8 <= size; i += 8) {
        const uint64_t w = rng.next_u64();
        std::memcpy(out.data() + i, &w, 8);
    }
    for (; i < size; ++i) out[i] = static_cast<uint8_t>(rng.next_u64());
    return out;
}

} // namespace

TEST_CASE("digest parsing and formatting") {
    const auto d = sha256(std::string("abc"));
    CHECK(d.hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(Digest::parse(d.oci_string()) == d);
    CHECK(Digest::parse(d.hex()) == d);
    CHECK_THROWS_AS(Digest::parse("md5:abcd"), std::invalid_argument);
    CHECK_THROWS_AS(Digest::parse("zz"), std::invalid_argument);
    CHECK_THROWS_AS(Digest::parse(std::string(64, 'G')), std::invalid_argument);
}

TEST_CASE("block size brackets") {
    // 8194.5 MiB -> 32 MiB blocks, 257 of them
    const uint64_t big = static_cast<uint64_t>(8194.5 * static_cast<double>(MiB));
    CHECK(compute_block_size(big) == 32 * MiB);
    CHECK((big + 32 * MiB - 1) / (32 * MiB) == 257);

    // below 16 MiB: single block at the layer's own size
    CHECK(compute_block_size(10 * MiB) == 10 * MiB);
    CHECK(compute_block_size(1) == 1);
    CHECK(compute_block_size(16 * MiB - 1) == 16 * MiB - 1);

    // divide-by-64 bracket
    CHECK(compute_block_size(512 * MiB) == 8 * MiB);
    CHECK((512 * MiB) / (8 * MiB) == 64);

    // divide-by-16 bracket with floor-to-MiB
    CHECK(compute_block_size(100 * MiB) == 6 * MiB);
    CHECK((100 * MiB + 6 * MiB - 1) / (6 * MiB) == 17);

    CHECK_THROWS_AS(compute_block_size(0), std::invalid_argument);
}

TEST_CASE("block size monotone within each bracket") {
    auto check_range = [](uint64_t lo, uint64_t hi, uint64_t step) {
        uint64_t prev = compute_block_size(lo);
        for (uint64_t s = lo + step; s < hi; s += step) {
            const uint64_t cur = compute_block_size(s);
            CHECK(cur >= prev);
            prev = cur;
        }
    };
    check_range(1, 16 * MiB, 64 * KiB);
    check_range(16 * MiB, 256 * MiB, MiB);
    check_range(256 * MiB, 1024 * MiB, 4 * MiB);
    check_range(1024 * MiB, 8 * 1024 * MiB, 16 * MiB);
}

TEST_CASE("block count envelope for the largest bracket") {
    // Exhaustive over whole-MiB sizes up to 64 GiB. The floor-to-MiB rule
    // keeps the count within [256, 320]; the worst case sits just below a
    // 256 MiB multiple where the floor loses most (first hit: 1277 MiB).
    uint64_t worst = 0, worst_at = 0;
    for (uint64_t mib = 1024; mib <= 64 * 1024; ++mib) {
        const uint64_t size = mib * MiB;
        const uint64_t bs = compute_block_size(size);
        const uint64_t count = (size + bs - 1) / bs;
        CHECK(count >= 256);
        CHECK(count <= 320);
        if (mib % 256 == 0) CHECK(count == 256);
        if (count > worst) {
            worst = count;
            worst_at = mib;
        }
    }
    CHECK(worst == 320);
    CHECK(worst_at == 1277);
}

TEST_CASE("single block merkle root is the hash of the block hash") {
    Bytes payload{0x42};
    const auto t = BlockTable::build(payload);
    CHECK(t.block_count() == 1);
    CHECK(t.merkle_root() == sha256(sha256_raw(payload)));
    CHECK(t.verify_block(payload, 0));
}

TEST_CASE("two identical blocks share a leaf and the root is hash(leaf||leaf)") {
    Bytes payload(2 * KiB, 0xab);
    const auto t = BlockTable::build_with_block_size(payload, KiB);
    REQUIRE(t.block_count() == 2);
    CHECK(t.block_hashes()[0] == t.block_hashes()[1]);
    Bytes leaf = sha256_raw(ByteView(payload).subspan(0, KiB));
    Bytes joined(leaf);
    joined.insert(joined.end(), leaf.begin(), leaf.end());
    CHECK(t.merkle_root() == sha256(joined));
}

TEST_CASE("merkle root matches the independent oracle") {
    // 257 leaves exercises odd levels on the way up.
    const auto payload = random_payload(257 * 64 * KiB - 1234, 7);
    const auto t = BlockTable::build_with_block_size(payload, 64 * KiB);
    REQUIRE(t.block_count() == 257);
    CHECK(t.merkle_root() == oracle::merkle_root(payload, 64 * KiB));

    for (uint64_t blocks = 1; blocks <= 17; ++blocks) {
        const auto p = random_payload(blocks * KiB - (blocks % 3), 100 + blocks);
        const auto table = BlockTable::build_with_block_size(p, KiB);
        CHECK(table.merkle_root() == oracle::merkle_root(p, KiB));
    }
}

TEST_CASE("blocks concatenate back to the payload and all verify") {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const uint64_t size = 1 + rng.next_below(64 * KiB);
        const auto payload = random_payload(size, 1000 + trial);
        const auto t = BlockTable::build_with_block_size(payload, 4 * KiB);

        Bytes joined;
        for (uint32_t i = 0; i < t.block_count(); ++i) {
            const auto off = t.block_offset(i);
            const auto len = t.block_length(i);
            ByteView block(payload.data() + off, len);
            CHECK(t.verify_block(block, i));
            joined.insert(joined.end(), block.begin(), block.end());
        }
        CHECK(joined == payload);
    }
}

TEST_CASE("verify rejects corruption and misplaced blocks") {
    const auto payload = random_payload(16 * KiB, 21);
    const auto t = BlockTable::build_with_block_size(payload, 4 * KiB);
    REQUIRE(t.block_count() == 4);

    Bytes tampered(payload.begin(), payload.begin() + 4 * KiB);
    tampered[100] ^= 0x01;
    CHECK_FALSE(t.verify_block(tampered, 0));

    // correct bytes, wrong index
    ByteView b0(payload.data(), 4 * KiB);
    ByteView b2(payload.data() + 2 * 4 * KiB, 4 * KiB);
    CHECK_FALSE(t.verify_block(b0, 2));
    CHECK_FALSE(t.verify_block(b2, 0));

    CHECK_THROWS_AS(t.verify_block(b0, 4), std::invalid_argument);
    CHECK_THROWS_AS(BlockTable::build(Bytes{}), std::invalid_argument);
}

TEST_CASE("random single-byte corruptions never verify") {
    const auto payload = random_payload(256 * KiB, 33);
    const auto t = BlockTable::build_with_block_size(payload, 16 * KiB);
    Rng rng(34);
    int rejected = 0;
    for (int i = 0; i < 1000; ++i) {
        const uint32_t idx = static_cast<uint32_t>(rng.next_below(t.block_count()));
        Bytes block(payload.begin() + static_cast<ptrdiff_t>(t.block_offset(idx)),
                    payload.begin() + static_cast<ptrdiff_t>(t.block_offset(idx) + t.block_length(idx)));
        block[rng.next_below(block.size())] ^= static_cast<uint8_t>(1 + rng.next_below(255));
        if (!t.verify_block(block, idx)) ++rejected;
    }
    CHECK(rejected == 1000);
}

TEST_CASE("manifest build, serialize, and parse") {
    std::vector<LayerDescriptor> layers{
        {sha256(std::string("layer-a")), 1234, "application/vnd.oci.image.layer.v1.tar"},
        {sha256(std::string("layer-b")), 99, "application/vnd.oci.image.layer.v1.tar"},
    };
    const auto m = ImageManifest::build("ai/model", "latest", layers);
    CHECK(m.digest() == sha256(m.raw()));
    CHECK(m.total_layer_bytes() == 1333);

    const auto parsed = ImageManifest::parse("ai/model", "latest", m.raw());
    CHECK(parsed.digest() == m.digest());
    REQUIRE(parsed.layers().size() == 2);
    CHECK(parsed.layers()[0].digest == layers[0].digest);
    CHECK(parsed.layers()[1].size_bytes == 99);
    CHECK(parsed.has_layer(layers[1].digest));
    CHECK_FALSE(parsed.has_layer(sha256(std::string("other"))));

    CHECK_THROWS_AS(ImageManifest::build("x", "y", {}), std::invalid_argument);
    CHECK_THROWS_AS(ImageManifest::parse("x", "y", "{not json"), ParseError);
    CHECK_THROWS_AS(ImageManifest::parse("x", "y", R"({"layers": []})"), ParseError);
}
