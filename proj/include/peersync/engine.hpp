#pragma once

#include "peersync/block_table.hpp"
#include "peersync/manifest.hpp"
#include "peersync/rng.hpp"
#include "peersync/scoring.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace peersync {

enum class StrategyKind : uint8_t { registry_direct, full_p2p, partial_p2p };

const char* strategy_name(StrategyKind k);

struct EngineConfig {
    uint32_t batch_size = 16;
    uint32_t inflight_per_peer = 4;
    uint32_t subset_k = 3; // candidate subset sampled per block; argmax within
    uint64_t partial_threshold_bytes = 16 * MiB;
    double aggregation_deadline_s = 2.0;
    uint32_t max_retries_per_block = 8;
    ScoringWeights weights;

    void validate() const;
};

// Peer-aggregation answer: who confirmed holding the layer within the
// deadline. facade_ok = false models an unreachable discovery service.
struct DiscoverySample {
    std::vector<PeerId> holders;
    bool facade_ok = true;
};
using DiscoveryFn =
    std::function<DiscoverySample(const Digest& layer, double deadline_s, bool local_only)>;

// Small layers try only fast local discovery before falling back to the
// registry; big layers aggregate peers everywhere.
StrategyKind choose_strategy(const LayerDescriptor& layer, const LanId& requester_lan,
                             const DiscoveryFn& discover, const EngineConfig& cfg);

// Picks up to batch_size blocks that need downloading (missing or requeued),
// lowest index first, and marks them pending.
std::vector<uint32_t> schedule_batch(std::vector<BlockState>& states, uint32_t batch_size);

struct Assignment {
    uint32_t block_index = 0;
    std::optional<PeerId> peer; // nullopt -> registry fallback
};

// For each block, softmax-samples a k-subset of the candidates and assigns
// the highest-utility member. Blocks get no peer when candidates are empty.
std::vector<Assignment> assign_peers(const std::vector<uint32_t>& batch,
                                     const std::vector<Candidate>& candidates, uint32_t subset_k,
                                     int64_t round, double tau0, Rng& rng);

struct SessionStats {
    StrategyKind strategy = StrategyKind::registry_direct;
    uint64_t local_bytes = 0;
    uint64_t cross_bytes = 0;
    uint64_t registry_bytes = 0;
    uint64_t wasted_bytes = 0; // corrupted or duplicate deliveries
    uint32_t transfers = 0;
    uint32_t failures = 0;
    uint32_t corruptions = 0;
    uint32_t requeues = 0;
    double total_s = 0;

    uint64_t delivered_bytes() const { return local_bytes + cross_bytes + registry_bytes; }
};

struct FetchCommand {
    uint64_t id = 0;
    uint32_t block_index = 0;
    std::optional<PeerId> peer; // nullopt -> registry
    uint64_t offset = 0;
    uint64_t length = 0;
};

// One layer's download: schedule -> assign -> transfer -> verify -> requeue,
// repeated until every block verifies. The session is a passive state
// machine; a driver (blocking, simulated, ...) pulls commands from
// next_commands() and pushes outcomes into on_result(). All selection
// randomness comes from the seeded generator, so runs are reproducible.
class DownloadSession {
public:
    using CandidateProvider = std::function<std::vector<Candidate>()>;
    // Observer of verified peer transfers, for speed-sample recording.
    using TransferObserver = std::function<void(const PeerId&, uint64_t bytes, double elapsed_s)>;
    // Observer of per-block selections (chosen utility, best eligible utility).
    using SelectionObserver = std::function<void(double chosen_u, double best_u)>;

    DownloadSession(LayerDescriptor layer, BlockTable table, EngineConfig cfg,
                    StrategyKind strategy, LanId requester_lan, CandidateProvider candidates,
                    bool registry_available, uint64_t seed);

    // Marks blocks already held locally as verified with their bytes.
    void prefill(ByteView payload);

    std::vector<FetchCommand> next_commands();
    void on_result(uint64_t command_id, bool ok, ByteView bytes, double elapsed_s);

    bool complete() const;
    bool failed() const { return failed_; }
    const std::string& failure_reason() const { return failure_reason_; }

    // Assembled layer, digest-checked. Throws unless complete.
    Bytes assemble() const;

    const SessionStats& stats() const { return stats_; }
    SessionStats& stats() { return stats_; }
    const LayerDescriptor& layer() const { return layer_; }
    const BlockTable& table() const { return table_; }
    const std::set<PeerId>& excluded_peers() const { return excluded_; }

    void set_transfer_observer(TransferObserver obs) { on_transfer_ = std::move(obs); }
    void set_selection_observer(SelectionObserver obs) { on_selection_ = std::move(obs); }

private:
    void start_batch();
    void issue_from_queue(std::vector<FetchCommand>& issued);
    void fail(const std::string& reason);

    LayerDescriptor layer_;
    BlockTable table_;
    EngineConfig cfg_;
    CandidateProvider provider_;
    bool registry_available_;
    Rng rng_;

    std::vector<BlockState> states_;
    std::vector<Bytes> payload_; // verified block bytes
    LanId requester_lan_;

    struct InFlight {
        uint32_t block_index;
        std::optional<PeerId> peer;
    };
    std::vector<Assignment> queue_; // assigned, not yet issued (index order)
    std::map<uint64_t, InFlight> inflight_;
    std::map<PeerId, uint32_t> inflight_per_source_;
    uint32_t registry_inflight_ = 0;
    uint64_t next_command_id_ = 1;
    int64_t round_ = 0;

    std::map<PeerId, uint32_t> corruption_count_;
    std::map<PeerId, uint32_t> failure_count_; // consecutive, reset on success
    std::set<PeerId> excluded_;

    SessionStats stats_;
    bool failed_ = false;
    std::string failure_reason_;
    TransferObserver on_transfer_;
    SelectionObserver on_selection_;
};

// Blocking outcome of one fetch against a transport.
struct FetchOutcome {
    bool ok = false;
    Bytes bytes;
    double elapsed_s = 0;
};

// Synchronous transport facade for the blocking driver; must be safe to call
// from the driver's loop (which issues fetches one at a time here).
class Transport {
public:
    virtual ~Transport() = default;
    virtual FetchOutcome fetch(const FetchCommand& cmd, const Digest& layer) = 0;
};

// Runs a session to completion against a blocking transport. Sets the
// requester LAN for byte provenance via the session's strategy/candidates.
// Throws LayerUnavailableError when the session fails.
Bytes run_session(DownloadSession& session, Transport& transport);

} // namespace peersync
