#include "peersync/block_table.hpp"
#include "peersync/digest.hpp"
#include "peersync/net/discovery.hpp"
#include "peersync/net/peer_client.hpp"
#include "peersync/net/peer_server.hpp"
#include "peersync/net/peer_wire.hpp"
#include "peersync/rng.hpp"

#include <doctest.h>

#include <map>
#include <thread>

using namespace peersync;
using namespace peersync::net;

namespace {

Bytes random_payload(size_t n, uint64_t seed) {
    Rng rng(seed);
    Bytes out(n);
    for (auto& b : out) b = static_cast<uint8_t>(rng.next_u64() & 0xff);
    return out;
}

struct ServedLayer {
    std::shared_ptr<const Bytes> payload;
    std::shared_ptr<const BlockTable> table;
    Digest digest;
};

ServedLayer make_layer(size_t bytes, uint64_t seed, uint64_t block_size) {
    ServedLayer layer;
    auto payload = std::make_shared<Bytes>(random_payload(bytes, seed));
    auto table = std::make_shared<BlockTable>(BlockTable::build_with_block_size(*payload, block_size));
    layer.digest = table->layer_digest();
    layer.payload = std::move(payload);
    layer.table = std::move(table);
    return layer;
}

} // namespace

TEST_CASE("peer message codec round trips") {
    const Digest layer = sha256(Bytes{1, 2, 3});

    auto round_trip = [](const PeerMessage& msg) {
        Bytes framed = encode_peer_frame(msg);
        Bytes buffer = framed;
        Bytes payload;
        REQUIRE(wire::take_frame(buffer, payload));
        CHECK(buffer.empty());
        return decode_peer_payload(payload);
    };

    auto hs = round_trip(HandshakeReq{layer});
    REQUIRE(std::holds_alternative<HandshakeReq>(hs));
    CHECK(std::get<HandshakeReq>(hs).layer == layer);

    auto resp = round_trip(HandshakeResp{layer, 4 * MiB, 7});
    REQUIRE(std::holds_alternative<HandshakeResp>(resp));
    CHECK(std::get<HandshakeResp>(resp).block_size == 4 * MiB);
    CHECK(std::get<HandshakeResp>(resp).block_count == 7);

    auto block = round_trip(BlockResp{3, Bytes{9, 8, 7}});
    REQUIRE(std::holds_alternative<BlockResp>(block));
    CHECK(std::get<BlockResp>(block).bytes == Bytes{9, 8, 7});

    auto err = round_trip(PeerError{PeerError::kBadIndex, "nope"});
    REQUIRE(std::holds_alternative<PeerError>(err));
    CHECK(std::get<PeerError>(err).code == PeerError::kBadIndex);
    CHECK(std::get<PeerError>(err).message == "nope");
}

TEST_CASE("server answers handshake and serves verifiable blocks") {
    auto layer = make_layer(3 * MiB + 123, 42, MiB);
    std::map<Digest, PeerServer::Served> store;
    store.emplace(layer.digest, PeerServer::Served{layer.payload, layer.table});

    PeerServer server([&store](const Digest& d) -> std::optional<PeerServer::Served> {
        auto it = store.find(d);
        if (it == store.end()) return std::nullopt;
        return it->second;
    });
    REQUIRE(server.start());
    REQUIRE(server.port() != 0);

    PeerClient client;
    REQUIRE(client.connect("127.0.0.1", server.port()));

    auto hs = client.handshake(layer.digest);
    REQUIRE(hs.has_value());
    CHECK(hs->merkle_root == layer.table->merkle_root());
    CHECK(hs->block_size == MiB);
    CHECK(hs->block_count == layer.table->block_count());

    // Fetch every block, verify against the table, reassemble.
    Bytes assembled;
    for (uint32_t i = 0; i < layer.table->block_count(); ++i) {
        auto result = client.fetch_block(layer.digest, i);
        REQUIRE(result.ok);
        CHECK(result.elapsed_s >= 0);
        CHECK(layer.table->verify_block(result.bytes, i));
        assembled.insert(assembled.end(), result.bytes.begin(), result.bytes.end());
    }
    CHECK(sha256(assembled) == layer.digest);

    // Unknown layer: handshake refused.
    CHECK_FALSE(client.handshake(sha256(Bytes{0xff})).has_value());
    // Out-of-range block: error, connection stays usable.
    CHECK_FALSE(client.fetch_block(layer.digest, 9999).ok);
    CHECK(client.fetch_block(layer.digest, 0).ok);

    server.stop();
}

TEST_CASE("two clients download concurrently from one server") {
    auto layer = make_layer(2 * MiB, 7, MiB / 2);
    PeerServer server([&layer](const Digest& d) -> std::optional<PeerServer::Served> {
        if (d == layer.digest) return PeerServer::Served{layer.payload, layer.table};
        return std::nullopt;
    });
    REQUIRE(server.start());

    auto fetch_all = [&] {
        PeerClient client;
        REQUIRE(client.connect("127.0.0.1", server.port()));
        Bytes assembled;
        for (uint32_t i = 0; i < layer.table->block_count(); ++i) {
            auto result = client.fetch_block(layer.digest, i);
            REQUIRE(result.ok);
            assembled.insert(assembled.end(), result.bytes.begin(), result.bytes.end());
        }
        CHECK(sha256(assembled) == layer.digest);
    };
    std::thread a(fetch_all), b(fetch_all);
    a.join();
    b.join();
    server.stop();
}

TEST_CASE("discovery probe finds holders over loopback") {
    const Digest held = sha256(Bytes{1});
    const Digest absent = sha256(Bytes{2});

    DiscoveryAgent holder({"node-b", "lan1"}, 7001, [&](const Digest& d) { return d == held; });
    DiscoveryAgent bystander({"node-c", "lan1"}, 7002, [&](const Digest&) { return false; });
    DiscoveryAgent prober({"node-a", "lan1"}, 7000, nullptr);
    holder.start();
    bystander.start();
    prober.start();

    std::vector<DiscoveryAgent::Target> targets{
        {"127.0.0.1", holder.port()}, {"127.0.0.1", bystander.port()}};

    auto hints = prober.probe(targets, held, 0.3);
    REQUIRE(hints.size() == 1);
    CHECK(hints[0].peer.id == "node-b");
    CHECK(hints[0].peer.lan_id == "lan1");
    CHECK(hints[0].wire_port == 7001);
    CHECK(hints[0].host == "127.0.0.1");

    CHECK(prober.probe(targets, absent, 0.2).empty());

    prober.stop();
    bystander.stop();
    holder.stop();
}
