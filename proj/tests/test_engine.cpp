#include "peersync/engine.hpp"

#include "peersync/errors.hpp"

#include <doctest.h>

#include <map>
#include <set>

using namespace peersync;

namespace {

Bytes make_payload(size_t n, uint64_t seed) {
    Bytes out(n);
    Rng rng(seed);
    for (auto& b : out) b = static_cast<uint8_t>(rng.next_below(256));
    return out;
}

LayerDescriptor descriptor_for(const Bytes& payload) {
    LayerDescriptor d;
    d.digest = sha256(payload);
    d.size_bytes = payload.size();
    d.media_type = "application/octet-stream";
    return d;
}

// Transport serving the true payload, with per-peer scripted misbehavior.
class FakeTransport : public Transport {
public:
    explicit FakeTransport(Bytes payload) : payload_(std::move(payload)) {}

    // Every fetch from `peer` returns flipped bytes (corruption).
    void corrupt_from(const PeerId& peer) { corrupt_.insert(peer); }
    // Every fetch from `peer` fails outright.
    void kill(const PeerId& peer) { dead_.insert(peer); }
    // The registry fails when false.
    void set_registry_up(bool up) { registry_up_ = up; }

    FetchOutcome fetch(const FetchCommand& cmd, const Digest&) override {
        ++fetches_;
        if (cmd.peer) ++per_peer_[*cmd.peer];
        FetchOutcome out;
        if (!cmd.peer && !registry_up_) return out;
        if (cmd.peer && dead_.count(*cmd.peer)) return out;
        out.bytes.assign(payload_.begin() + static_cast<ptrdiff_t>(cmd.offset),
                         payload_.begin() + static_cast<ptrdiff_t>(cmd.offset + cmd.length));
        if (cmd.peer && corrupt_.count(*cmd.peer)) out.bytes[0] ^= 0xff;
        out.ok = true;
        out.elapsed_s = 0.01;
        return out;
    }

    uint32_t fetches() const { return fetches_; }
    uint32_t fetches_from(const PeerId& p) const {
        auto it = per_peer_.find(p);
        return it == per_peer_.end() ? 0 : it->second;
    }

private:
    Bytes payload_;
    std::set<PeerId> corrupt_;
    std::set<PeerId> dead_;
    bool registry_up_ = true;
    uint32_t fetches_ = 0;
    std::map<PeerId, uint32_t> per_peer_;
};

EngineConfig small_config() {
    EngineConfig cfg;
    cfg.batch_size = 4;
    cfg.inflight_per_peer = 2;
    return cfg;
}

DiscoveryFn fixed_discovery(std::vector<PeerId> holders, bool facade_ok = true) {
    return [holders = std::move(holders), facade_ok](const Digest&, double, bool local_only) {
        DiscoverySample s;
        s.facade_ok = facade_ok;
        s.holders = holders;
        (void)local_only;
        return s;
    };
}

} // namespace

TEST_CASE("strategy: small layer with a local holder goes partial") {
    LayerDescriptor layer;
    layer.digest = sha256(std::string("small"));
    layer.size_bytes = static_cast<uint64_t>(1.03 * 1024 * 1024);
    EngineConfig cfg;

    auto with_local = fixed_discovery({PeerId{"p", "lan1"}});
    CHECK(choose_strategy(layer, "lan1", with_local, cfg) == StrategyKind::partial_p2p);
    // same holder is remote from lan2's perspective: fall back to registry
    CHECK(choose_strategy(layer, "lan2", with_local, cfg) == StrategyKind::registry_direct);
    CHECK(choose_strategy(layer, "lan1", fixed_discovery({}), cfg) ==
          StrategyKind::registry_direct);
}

TEST_CASE("strategy: big layer with any confirmed holder goes full p2p") {
    LayerDescriptor layer;
    layer.digest = sha256(std::string("big"));
    layer.size_bytes = 5ull * 1024 * MiB;
    EngineConfig cfg;

    CHECK(choose_strategy(layer, "lan1", fixed_discovery({PeerId{"p", "lan9"}}), cfg) ==
          StrategyKind::full_p2p);
    CHECK(choose_strategy(layer, "lan1", fixed_discovery({}), cfg) ==
          StrategyKind::registry_direct);
    // facade down: degraded fallback
    CHECK(choose_strategy(layer, "lan1", fixed_discovery({PeerId{"p", "lan1"}}, false), cfg) ==
          StrategyKind::registry_direct);
    CHECK(choose_strategy(layer, "lan1", DiscoveryFn{}, cfg) == StrategyKind::registry_direct);
}

TEST_CASE("threshold boundary: exactly 16 MiB runs full discovery") {
    LayerDescriptor layer;
    layer.digest = sha256(std::string("edge"));
    layer.size_bytes = 16 * MiB;
    EngineConfig cfg;
    bool asked_local_only = true;
    DiscoveryFn probe = [&](const Digest&, double, bool local_only) {
        asked_local_only = local_only;
        return DiscoverySample{{PeerId{"p", "lan2"}}, true};
    };
    CHECK(choose_strategy(layer, "lan1", probe, cfg) == StrategyKind::full_p2p);
    CHECK_FALSE(asked_local_only);
}

TEST_CASE("batch scheduling is lowest-index-first over missing and requeued") {
    std::vector<BlockState> states;
    for (uint32_t i = 0; i < 10; ++i) states.push_back({i, BlockStatus::missing, 0});

    auto batch = schedule_batch(states, 4);
    CHECK(batch == std::vector<uint32_t>{0, 1, 2, 3});
    for (uint32_t i : batch) CHECK(states[i].status == BlockStatus::pending);

    states.clear();
    for (uint32_t i = 0; i < 2; ++i) states.push_back({i, BlockStatus::missing, 0});
    batch = schedule_batch(states, 4);
    CHECK(batch.size() == 2);

    // a requeued block precedes higher missing indexes
    states.clear();
    for (uint32_t i = 0; i < 10; ++i)
        states.push_back({i, i < 7 ? BlockStatus::verified : BlockStatus::missing, 0});
    states[7].status = BlockStatus::pending; // requeued after a failure
    batch = schedule_batch(states, 2);
    CHECK(batch == std::vector<uint32_t>{7, 8});
}

TEST_CASE("assignment: single candidate takes every block") {
    Rng rng(1);
    std::vector<Candidate> one{{PeerId{"only", "lan1"}, 70.0}};
    auto a = assign_peers({0, 1, 2}, one, 3, 1, 20, rng);
    REQUIRE(a.size() == 3);
    for (const auto& x : a) {
        REQUIRE(x.peer.has_value());
        CHECK(x.peer->id == "only");
    }
}

TEST_CASE("assignment: k = all candidates is pure argmax") {
    Rng rng(2);
    std::vector<Candidate> c{{PeerId{"a", "l"}, 10}, {PeerId{"b", "l"}, 90}, {PeerId{"c", "l"}, 40}};
    for (int i = 0; i < 50; ++i) {
        auto a = assign_peers({0}, c, 3, 1, 20, rng);
        CHECK(a[0].peer->id == "b");
    }
}

TEST_CASE("assignment: local peer dominates at low temperature, k=1") {
    // utilities 100 vs 40, tau = 10/sqrt(1): softmax picks local > 95%
    Rng rng(3);
    std::vector<Candidate> c{{PeerId{"local", "lan1"}, 100}, {PeerId{"remote", "lan2"}, 40}};
    int local = 0;
    const int draws = 2000;
    for (int i = 0; i < draws; ++i) {
        auto a = assign_peers({0}, c, 1, 1, 10, rng);
        if (a[0].peer->id == "local") ++local;
    }
    CHECK(local / static_cast<double>(draws) > 0.95);
}

TEST_CASE("assignment without candidates leaves blocks for the registry") {
    Rng rng(4);
    auto a = assign_peers({0, 1}, {}, 3, 1, 20, rng);
    REQUIRE(a.size() == 2);
    CHECK_FALSE(a[0].peer.has_value());
}

TEST_CASE("session downloads a layer from one seeder") {
    const auto payload = make_payload(256 * KiB + 17, 11);
    FakeTransport transport(payload);
    const PeerId seeder{"s", "lan1"};

    DownloadSession session(descriptor_for(payload), BlockTable::build_with_block_size(payload, 64 * KiB),
                            small_config(), StrategyKind::full_p2p, "lan1",
                            [&] { return std::vector<Candidate>{{seeder, 80.0}}; }, true, 42);
    const auto bytes = run_session(session, transport);
    CHECK(sha256(bytes) == sha256(payload));
    CHECK(session.stats().local_bytes == payload.size());
    CHECK(session.stats().cross_bytes == 0);
    CHECK(session.stats().registry_bytes == 0);
    // no duplicate fetches without failures
    CHECK(session.stats().transfers == session.table().block_count());
    CHECK(transport.fetches() == session.table().block_count());
}

TEST_CASE("session with no peers pulls everything from the registry") {
    const auto payload = make_payload(100 * KiB, 12);
    FakeTransport transport(payload);
    DownloadSession session(descriptor_for(payload), BlockTable::build_with_block_size(payload, 32 * KiB),
                            small_config(), StrategyKind::registry_direct, "lan1",
                            [] { return std::vector<Candidate>{}; }, true, 43);
    const auto bytes = run_session(session, transport);
    CHECK(bytes == payload);
    CHECK(session.stats().registry_bytes == payload.size());
    CHECK(session.stats().local_bytes == 0);
}

TEST_CASE("cross-lan bytes are attributed to the remote source") {
    const auto payload = make_payload(64 * KiB, 13);
    FakeTransport transport(payload);
    const PeerId remote{"r", "lan2"};
    DownloadSession session(descriptor_for(payload), BlockTable::build_with_block_size(payload, 16 * KiB),
                            small_config(), StrategyKind::full_p2p, "lan1",
                            [&] { return std::vector<Candidate>{{remote, 60.0}}; }, true, 44);
    run_session(session, transport);
    CHECK(session.stats().cross_bytes == payload.size());
    CHECK(session.stats().local_bytes == 0);
}

TEST_CASE("prefilled session completes with zero transfers") {
    const auto payload = make_payload(90 * KiB, 14);
    FakeTransport transport(payload);
    DownloadSession session(descriptor_for(payload), BlockTable::build_with_block_size(payload, 32 * KiB),
                            small_config(), StrategyKind::full_p2p, "lan1",
                            [] { return std::vector<Candidate>{}; }, true, 45);
    session.prefill(payload);
    CHECK(session.complete());
    const auto bytes = run_session(session, transport);
    CHECK(bytes == payload);
    CHECK(transport.fetches() == 0);
    CHECK(session.stats().delivered_bytes() == 0);
}

TEST_CASE("corrupting peer is excluded after two strikes; layer still completes") {
    const auto payload = make_payload(128 * KiB, 15);
    FakeTransport transport(payload);
    const PeerId bad{"bad", "lan1"}, good{"good", "lan2"};
    transport.corrupt_from(bad);

    DownloadSession session(
        descriptor_for(payload), BlockTable::build_with_block_size(payload, 16 * KiB),
        small_config(), StrategyKind::full_p2p, "lan1",
        [&] { return std::vector<Candidate>{{bad, 100.0}, {good, 5.0}}; }, false, 46);
    const auto bytes = run_session(session, transport);
    CHECK(bytes == payload);
    CHECK(session.excluded_peers().count(bad) == 1);
    CHECK(session.stats().corruptions >= 2);
    // after exclusion every remaining block came from the honest peer
    CHECK(transport.fetches_from(good) >= session.table().block_count());
    CHECK(session.stats().wasted_bytes > 0);
    // delivered bytes still add up exactly
    CHECK(session.stats().delivered_bytes() == payload.size());
}

TEST_CASE("dead peer mid-swarm: blocks fail over to the live one") {
    const auto payload = make_payload(96 * KiB, 16);
    FakeTransport transport(payload);
    const PeerId dead{"dead", "lan1"}, live{"live", "lan1"};
    transport.kill(dead);

    DownloadSession session(
        descriptor_for(payload), BlockTable::build_with_block_size(payload, 16 * KiB),
        small_config(), StrategyKind::full_p2p, "lan1",
        [&] { return std::vector<Candidate>{{dead, 90.0}, {live, 80.0}}; }, false, 47);
    const auto bytes = run_session(session, transport);
    CHECK(bytes == payload);
    CHECK(session.stats().failures > 0);
    CHECK(session.stats().delivered_bytes() == payload.size());
}

TEST_CASE("no peers and no registry raises layer-unavailable") {
    const auto payload = make_payload(32 * KiB, 17);
    FakeTransport transport(payload);
    DownloadSession session(descriptor_for(payload), BlockTable::build_with_block_size(payload, 16 * KiB),
                            small_config(), StrategyKind::registry_direct, "lan1",
                            [] { return std::vector<Candidate>{}; }, false, 48);
    CHECK_THROWS_AS(run_session(session, transport), LayerUnavailableError);
    CHECK(session.failed());
}

TEST_CASE("all peers corrupt and registry down exhausts retries") {
    const auto payload = make_payload(32 * KiB, 18);
    FakeTransport transport(payload);
    const PeerId bad{"bad", "lan1"};
    transport.corrupt_from(bad);
    auto cfg = small_config();
    cfg.max_retries_per_block = 3;
    DownloadSession session(descriptor_for(payload), BlockTable::build_with_block_size(payload, 16 * KiB),
                            cfg, StrategyKind::full_p2p, "lan1",
                            [&] { return std::vector<Candidate>{{bad, 50.0}}; }, false, 49);
    CHECK_THROWS_AS(run_session(session, transport), LayerUnavailableError);
}

TEST_CASE("speed observer sees verified peer transfers") {
    const auto payload = make_payload(64 * KiB, 19);
    FakeTransport transport(payload);
    const PeerId seeder{"s", "lan2"};
    DownloadSession session(descriptor_for(payload), BlockTable::build_with_block_size(payload, 16 * KiB),
                            small_config(), StrategyKind::full_p2p, "lan1",
                            [&] { return std::vector<Candidate>{{seeder, 70.0}}; }, true, 50);
    uint64_t observed_bytes = 0;
    uint32_t observed_calls = 0;
    session.set_transfer_observer([&](const PeerId& p, uint64_t bytes, double elapsed) {
        CHECK(p == seeder);
        CHECK(elapsed > 0);
        observed_bytes += bytes;
        ++observed_calls;
    });
    run_session(session, transport);
    CHECK(observed_bytes == payload.size());
    CHECK(observed_calls == session.table().block_count());
}

TEST_CASE("selection observer feeds a regret ledger") {
    const auto payload = make_payload(64 * KiB, 20);
    FakeTransport transport(payload);
    std::vector<Candidate> c{{PeerId{"a", "lan1"}, 100.0}, {PeerId{"b", "lan2"}, 60.0}};
    DownloadSession session(descriptor_for(payload), BlockTable::build_with_block_size(payload, 16 * KiB),
                            small_config(), StrategyKind::full_p2p, "lan1", [&] { return c; },
                            true, 51);
    RegretLedger ledger;
    session.set_selection_observer(
        [&](double chosen, double best) { ledger.record_round(chosen, best); });
    run_session(session, transport);
    CHECK(ledger.rounds().size() == session.table().block_count());
    CHECK(ledger.cumulative() >= 0);
}

TEST_CASE("identical seeds give identical transfer schedules") {
    const auto payload = make_payload(128 * KiB, 21);
    std::vector<Candidate> c{{PeerId{"a", "lan1"}, 80.0}, {PeerId{"b", "lan1"}, 78.0},
                             {PeerId{"c", "lan2"}, 50.0}};
    auto run_once = [&] {
        FakeTransport transport(payload);
        DownloadSession session(descriptor_for(payload),
                                BlockTable::build_with_block_size(payload, 16 * KiB),
                                small_config(), StrategyKind::full_p2p, "lan1",
                                [&] { return c; }, true, 777);
        std::vector<std::pair<uint32_t, std::string>> schedule;
        while (!session.complete() && !session.failed()) {
            for (const auto& cmd : session.next_commands()) {
                schedule.emplace_back(cmd.block_index, cmd.peer ? cmd.peer->id : "<registry>");
                const auto out = transport.fetch(cmd, session.layer().digest);
                session.on_result(cmd.id, out.ok, out.bytes, out.elapsed_s);
            }
        }
        return schedule;
    };
    CHECK(run_once() == run_once());
}
