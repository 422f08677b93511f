#pragma once

#include "peersync/digest.hpp"
#include "peersync/scoring.hpp"
#include "peersync/wire.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <variant>
#include <vector>

namespace peersync {

// Election candidate value: uptime first, node id as the tiebreaker
// (lexicographically greater id wins equal uptimes).
struct StabilityMetric {
    uint64_t uptime_ms = 0;
    PeerId node;

    friend bool operator==(const StabilityMetric& a, const StabilityMetric& b) {
        return a.uptime_ms == b.uptime_ms && a.node.id == b.node.id;
    }
    friend bool operator<(const StabilityMetric& a, const StabilityMetric& b) {
        if (a.uptime_ms != b.uptime_ms) return a.uptime_ms < b.uptime_ms;
        return a.node.id < b.node.id;
    }
};

enum class Role : uint8_t { follower, candidate, tracker };

struct ElectionMessage {
    StabilityMetric candidate;
    uint32_t origin_round = 1;
};

// One node's flood-max election state. Driven by synchronous rounds: the
// harness (simulated or timer-based) calls round_message() once per round and
// delivers the results to neighbors via receive() before the next round.
// With pruning on, a node forwards only when its best-seen value improved
// since it last spoke; with pruning off it forwards every round.
class ElectionNode {
public:
    ElectionNode(StabilityMetric self, uint32_t diameter_bound, bool pruning = true);

    void start_election();
    void receive(const ElectionMessage& msg);
    // The broadcast for the upcoming round, or nullopt when pruned away.
    // Advances the round counter.
    std::optional<ElectionMessage> round_message();
    // True once diameter_bound rounds have been taken.
    bool complete() const { return round_ > diameter_bound_; }
    // Settles role/known_tracker from best_seen; call after complete().
    void finalize();

    Role role() const { return role_; }
    const StabilityMetric& best_seen() const { return best_seen_; }
    const StabilityMetric& self() const { return self_; }
    const std::optional<PeerId>& known_tracker() const { return known_tracker_; }
    uint32_t round() const { return round_; }

    void set_known_tracker(std::optional<PeerId> t);

private:
    StabilityMetric self_;
    uint32_t diameter_bound_;
    bool pruning_;
    StabilityMetric best_seen_;
    bool improved_ = false; // since the last forwarded message
    uint32_t round_ = 0;
    Role role_ = Role::follower;
    std::optional<PeerId> known_tracker_;
};

// Runs a full synchronous election over an undirected adjacency list and
// reports the winner plus the total messages sent (for the pruning-efficacy
// measurements). Nodes are indexed 0..n-1.
struct ElectionOutcome {
    std::vector<Role> roles;
    std::vector<std::optional<PeerId>> known_tracker;
    uint64_t messages_sent = 0;
    uint32_t rounds = 0;
};
ElectionOutcome run_synchronous_election(const std::vector<StabilityMetric>& metrics,
                                         const std::vector<std::vector<uint32_t>>& adjacency,
                                         uint32_t diameter_bound, bool pruning);

// Tracker-loss detection from heartbeat timestamps.
class HeartbeatMonitor {
public:
    HeartbeatMonitor(double interval_s = 1.0, uint32_t miss_threshold = 3)
        : interval_s_(interval_s), miss_threshold_(miss_threshold) {}

    void set_tracker(std::optional<PeerId> tracker, double now);
    void on_heartbeat(const PeerId& from, double now);
    // True when no tracker is known, or miss_threshold consecutive intervals
    // have elapsed with no heartbeat from it.
    bool tracker_lost(double now) const;
    const std::optional<PeerId>& tracker() const { return tracker_; }
    double interval_s() const { return interval_s_; }

private:
    double interval_s_;
    uint32_t miss_threshold_;
    std::optional<PeerId> tracker_;
    double last_beat_ = 0;
};

// The tracker's content directory: digest -> holders, per-holder TTL.
class TrackerRegistry {
public:
    explicit TrackerRegistry(double ttl_s = 60.0) : ttl_s_(ttl_s) {}

    void announce(const Digest& content, const PeerId& holder, double now);
    std::vector<PeerId> query(const Digest& content, double now) const;
    void remove_peer(const PeerId& peer);
    void clear() { entries_.clear(); }
    size_t content_count() const { return entries_.size(); }
    double ttl_s() const { return ttl_s_; }

private:
    double ttl_s_;
    std::map<Digest, std::map<PeerId, double>> entries_; // digest -> holder -> last refresh
};

// --- Tracker wire messages -------------------------------------------------

struct HeartbeatMsg {
    PeerId from;
};
struct NewTrackerMsg {
    PeerId tracker;
};
struct AnnounceMsg {
    Digest content;
    PeerId holder;
};
struct QueryMsg {
    Digest content;
};
struct QueryReplyMsg {
    Digest content;
    std::vector<PeerId> holders;
};
struct RedirectMsg {
    PeerId target;
};

using TrackerMessage = std::variant<ElectionMessage, HeartbeatMsg, NewTrackerMsg, AnnounceMsg,
                                    QueryMsg, QueryReplyMsg, RedirectMsg>;

// Length-prefixed binary frames: 1-byte type tag then fields in network
// byte order.
Bytes encode_tracker_frame(const TrackerMessage& msg);
TrackerMessage decode_tracker_payload(ByteView payload);

// A node's announce/query service role: the tracker answers queries from its
// registry; a follower answers with a redirect to its known tracker.
class TrackerService {
public:
    TrackerService(PeerId self, double ttl_s = 60.0) : self_(std::move(self)), registry_(ttl_s) {}

    void set_role(Role role, std::optional<PeerId> known_tracker);
    Role role() const { return role_; }
    TrackerRegistry& registry() { return registry_; }
    const TrackerRegistry& registry() const { return registry_; }

    // Handles announce/query messages; returns the reply, if any.
    std::optional<TrackerMessage> handle(const TrackerMessage& msg, double now);

private:
    PeerId self_;
    Role role_ = Role::follower;
    std::optional<PeerId> known_tracker_;
    TrackerRegistry registry_;
};

} // namespace peersync
