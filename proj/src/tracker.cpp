#include "peersync/tracker.hpp"

#include "peersync/errors.hpp"

#include <algorithm>

namespace peersync {

ElectionNode::ElectionNode(StabilityMetric self, uint32_t diameter_bound, bool pruning)
    : self_(std::move(self)), diameter_bound_(diameter_bound), pruning_(pruning),
      best_seen_(self_) {}

void ElectionNode::start_election() {
    best_seen_ = self_;
    improved_ = true; // own candidacy counts as news for round 1
    round_ = 0;
    role_ = Role::candidate;
    known_tracker_.reset();
}

void ElectionNode::receive(const ElectionMessage& msg) {
    if (best_seen_ < msg.candidate) {
        best_seen_ = msg.candidate;
        improved_ = true;
    }
}

std::optional<ElectionMessage> ElectionNode::round_message() {
    ++round_;
    if (pruning_ && !improved_) return std::nullopt;
    improved_ = false;
    return ElectionMessage{best_seen_, round_};
}

void ElectionNode::finalize() {
    if (best_seen_ == self_) {
        role_ = Role::tracker;
        known_tracker_ = self_.node;
    } else {
        role_ = Role::follower;
        known_tracker_ = best_seen_.node;
    }
}

void ElectionNode::set_known_tracker(std::optional<PeerId> t) {
    known_tracker_ = std::move(t);
    if (role_ == Role::tracker && (!known_tracker_ || !(*known_tracker_ == self_.node)))
        role_ = Role::follower;
}

ElectionOutcome run_synchronous_election(const std::vector<StabilityMetric>& metrics,
                                         const std::vector<std::vector<uint32_t>>& adjacency,
                                         uint32_t diameter_bound, bool pruning) {
    const size_t n = metrics.size();
    if (adjacency.size() != n)
        throw std::invalid_argument("metrics and adjacency disagree on node count");

    std::vector<ElectionNode> nodes;
    nodes.reserve(n);
    for (const auto& m : metrics) {
        nodes.emplace_back(m, diameter_bound, pruning);
        nodes.back().start_election();
    }

    ElectionOutcome out;
    for (uint32_t r = 1; r <= diameter_bound; ++r) {
        std::vector<std::optional<ElectionMessage>> outbox(n);
        for (size_t i = 0; i < n; ++i) outbox[i] = nodes[i].round_message();
        for (size_t i = 0; i < n; ++i) {
            if (!outbox[i]) continue;
            out.messages_sent += adjacency[i].size();
            for (uint32_t nb : adjacency[i]) nodes[nb].receive(*outbox[i]);
        }
    }
    out.rounds = diameter_bound;
    out.roles.resize(n);
    out.known_tracker.resize(n);
    for (size_t i = 0; i < n; ++i) {
        nodes[i].finalize();
        out.roles[i] = nodes[i].role();
        out.known_tracker[i] = nodes[i].known_tracker();
    }
    return out;
}

void HeartbeatMonitor::set_tracker(std::optional<PeerId> tracker, double now) {
    tracker_ = std::move(tracker);
    last_beat_ = now;
}

void HeartbeatMonitor::on_heartbeat(const PeerId& from, double now) {
    if (tracker_ && from == *tracker_) last_beat_ = now;
}

bool HeartbeatMonitor::tracker_lost(double now) const {
    if (!tracker_) return true;
    return now - last_beat_ >= interval_s_ * static_cast<double>(miss_threshold_);
}

void TrackerRegistry::announce(const Digest& content, const PeerId& holder, double now) {
    entries_[content][holder] = now;
}

std::vector<PeerId> TrackerRegistry::query(const Digest& content, double now) const {
    std::vector<PeerId> holders;
    auto it = entries_.find(content);
    if (it == entries_.end()) return holders;
    for (const auto& [peer, refreshed] : it->second)
        if (now - refreshed < ttl_s_) holders.push_back(peer);
    return holders;
}

void TrackerRegistry::remove_peer(const PeerId& peer) {
    for (auto it = entries_.begin(); it != entries_.end();) {
        it->second.erase(peer);
        it = it->second.empty() ? entries_.erase(it) : std::next(it);
    }
}

namespace {

enum class Tag : uint8_t {
    election = 1,
    heartbeat = 2,
    new_tracker = 3,
    announce = 4,
    query = 5,
    query_reply = 6,
    redirect = 7,
};

void put_peer(wire::Encoder& e, const PeerId& p) {
    e.str(p.id);
    e.str(p.lan_id);
}

PeerId get_peer(wire::Decoder& d) {
    PeerId p;
    p.id = d.str();
    p.lan_id = d.str();
    return p;
}

} // namespace

Bytes encode_tracker_frame(const TrackerMessage& msg) {
    wire::Encoder e;
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ElectionMessage>) {
                e.u8(static_cast<uint8_t>(Tag::election));
                e.u64(m.candidate.uptime_ms);
                put_peer(e, m.candidate.node);
                e.u32(m.origin_round);
            } else if constexpr (std::is_same_v<T, HeartbeatMsg>) {
                e.u8(static_cast<uint8_t>(Tag::heartbeat));
                put_peer(e, m.from);
            } else if constexpr (std::is_same_v<T, NewTrackerMsg>) {
                e.u8(static_cast<uint8_t>(Tag::new_tracker));
                put_peer(e, m.tracker);
            } else if constexpr (std::is_same_v<T, AnnounceMsg>) {
                e.u8(static_cast<uint8_t>(Tag::announce));
                e.digest(m.content);
                put_peer(e, m.holder);
            } else if constexpr (std::is_same_v<T, QueryMsg>) {
                e.u8(static_cast<uint8_t>(Tag::query));
                e.digest(m.content);
            } else if constexpr (std::is_same_v<T, QueryReplyMsg>) {
                e.u8(static_cast<uint8_t>(Tag::query_reply));
                e.digest(m.content);
                e.u16(static_cast<uint16_t>(m.holders.size()));
                for (const auto& h : m.holders) put_peer(e, h);
            } else if constexpr (std::is_same_v<T, RedirectMsg>) {
                e.u8(static_cast<uint8_t>(Tag::redirect));
                put_peer(e, m.target);
            }
        },
        msg);
    return e.frame();
}

TrackerMessage decode_tracker_payload(ByteView payload) {
    wire::Decoder d(payload);
    const uint8_t tag_byte = d.u8();
    TrackerMessage out;
    switch (static_cast<Tag>(tag_byte)) {
    case Tag::election: {
        ElectionMessage m;
        m.candidate.uptime_ms = d.u64();
        m.candidate.node = get_peer(d);
        m.origin_round = d.u32();
        out = m;
        break;
    }
    case Tag::heartbeat:
        out = HeartbeatMsg{get_peer(d)};
        break;
    case Tag::new_tracker:
        out = NewTrackerMsg{get_peer(d)};
        break;
    case Tag::announce: {
        AnnounceMsg m;
        m.content = d.digest();
        m.holder = get_peer(d);
        out = m;
        break;
    }
    case Tag::query:
        out = QueryMsg{d.digest()};
        break;
    case Tag::query_reply: {
        QueryReplyMsg m;
        m.content = d.digest();
        const size_t count = d.u16();
        m.holders.reserve(count);
        for (size_t i = 0; i < count; ++i) m.holders.push_back(get_peer(d));
        out = m;
        break;
    }
    case Tag::redirect:
        out = RedirectMsg{get_peer(d)};
        break;
    default:
        throw ParseError("tracker", "unknown message tag " + std::to_string(tag_byte));
    }
    d.expect_done();
    return out;
}

void TrackerService::set_role(Role role, std::optional<PeerId> known_tracker) {
    role_ = role;
    known_tracker_ = std::move(known_tracker);
    if (role_ != Role::tracker) registry_.clear();
}

std::optional<TrackerMessage> TrackerService::handle(const TrackerMessage& msg, double now) {
    if (const auto* a = std::get_if<AnnounceMsg>(&msg)) {
        if (role_ != Role::tracker)
            return known_tracker_ ? std::optional<TrackerMessage>(RedirectMsg{*known_tracker_})
                                  : std::nullopt;
        registry_.announce(a->content, a->holder, now);
        return std::nullopt;
    }
    if (const auto* q = std::get_if<QueryMsg>(&msg)) {
        if (role_ != Role::tracker)
            return known_tracker_ ? std::optional<TrackerMessage>(RedirectMsg{*known_tracker_})
                                  : std::nullopt;
        return QueryReplyMsg{q->content, registry_.query(q->content, now)};
    }
    return std::nullopt;
}

} // namespace peersync
