#include "peersync/engine.hpp"

#include "peersync/errors.hpp"

#include <algorithm>

namespace peersync {

const char* strategy_name(StrategyKind k) {
    switch (k) {
    case StrategyKind::registry_direct: return "registry_direct";
    case StrategyKind::full_p2p: return "full_p2p";
    case StrategyKind::partial_p2p: return "partial_p2p";
    }
    return "?";
}

void EngineConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    if (inflight_per_peer == 0) throw std::invalid_argument("in-flight cap must be positive");
    if (subset_k == 0) throw std::invalid_argument("subset size must be positive");
    if (aggregation_deadline_s <= 0)
        throw std::invalid_argument("aggregation deadline must be positive");
    if (max_retries_per_block == 0) throw std::invalid_argument("retry limit must be positive");
    weights.validate();
}

StrategyKind choose_strategy(const LayerDescriptor& layer, const LanId& requester_lan,
                             const DiscoveryFn& discover, const EngineConfig& cfg) {
    if (!discover) return StrategyKind::registry_direct;

    if (layer.size_bytes < cfg.partial_threshold_bytes) {
        const auto sample = discover(layer.digest, cfg.aggregation_deadline_s, /*local_only=*/true);
        if (!sample.facade_ok) return StrategyKind::registry_direct;
        for (const auto& h : sample.holders)
            if (h.lan_id == requester_lan) return StrategyKind::partial_p2p;
        return StrategyKind::registry_direct;
    }

    const auto sample = discover(layer.digest, cfg.aggregation_deadline_s, /*local_only=*/false);
    if (!sample.facade_ok) return StrategyKind::registry_direct;
    return sample.holders.empty() ? StrategyKind::registry_direct : StrategyKind::full_p2p;
}

std::vector<uint32_t> schedule_batch(std::vector<BlockState>& states, uint32_t batch_size) {
    std::vector<uint32_t> batch;
    for (auto& s : states) {
        if (batch.size() >= batch_size) break;
        if (s.status == BlockStatus::missing || s.status == BlockStatus::pending) {
            s.status = BlockStatus::pending;
            batch.push_back(s.index);
        }
    }
    return batch;
}

std::vector<Assignment> assign_peers(const std::vector<uint32_t>& batch,
                                     const std::vector<Candidate>& candidates, uint32_t subset_k,
                                     int64_t round, double tau0, Rng& rng) {
    std::vector<Assignment> out;
    out.reserve(batch.size());
    for (uint32_t block : batch) {
        Assignment a;
        a.block_index = block;
        if (!candidates.empty()) {
            const auto subset = sample_subset(candidates, subset_k, round, tau0, rng);
            size_t best = subset[0];
            for (size_t idx : subset)
                if (candidates[idx].utility > candidates[best].utility) best = idx;
            a.peer = candidates[best].peer;
        }
        out.push_back(std::move(a));
    }
    return out;
}

DownloadSession::DownloadSession(LayerDescriptor layer, BlockTable table, EngineConfig cfg,
                                 StrategyKind strategy, LanId requester_lan,
                                 CandidateProvider candidates, bool registry_available,
                                 uint64_t seed)
    : layer_(std::move(layer)), table_(std::move(table)), cfg_(cfg),
      provider_(std::move(candidates)), registry_available_(registry_available),
      rng_(stream_seed(seed, "engine:" + layer_.digest.hex())),
      requester_lan_(std::move(requester_lan)) {
    cfg_.validate();
    stats_.strategy = strategy;
    states_.reserve(table_.block_count());
    for (uint32_t i = 0; i < table_.block_count(); ++i)
        states_.push_back(BlockState{i, BlockStatus::missing, 0});
    payload_.resize(table_.block_count());
}

void DownloadSession::prefill(ByteView payload) {
    if (payload.size() != table_.layer_size_bytes())
        throw std::invalid_argument("prefill payload size mismatch");
    for (uint32_t i = 0; i < table_.block_count(); ++i) {
        const auto off = table_.block_offset(i);
        const auto len = table_.block_length(i);
        ByteView view = payload.subspan(off, len);
        if (!table_.verify_block(view, i))
            throw std::invalid_argument("prefill payload fails verification");
        payload_[i].assign(view.begin(), view.end());
        states_[i].status = BlockStatus::verified;
    }
}

void DownloadSession::fail(const std::string& reason) {
    failed_ = true;
    failure_reason_ = reason;
    queue_.clear();
}

void DownloadSession::start_batch() {
    auto batch = schedule_batch(states_, cfg_.batch_size);
    if (batch.empty()) return;

    ++round_;
    std::vector<Candidate> candidates = provider_ ? provider_() : std::vector<Candidate>{};
    std::erase_if(candidates, [&](const Candidate& c) { return excluded_.count(c.peer) > 0; });

    auto assignments =
        assign_peers(batch, candidates, cfg_.subset_k, round_, cfg_.weights.tau0, rng_);

    double best_u = 0;
    if (!candidates.empty())
        best_u = std::max_element(candidates.begin(), candidates.end(),
                                  [](const Candidate& a, const Candidate& b) {
                                      return a.utility < b.utility;
                                  })
                     ->utility;

    for (auto& a : assignments) {
        if (a.peer) {
            if (on_selection_) {
                double chosen_u = 0;
                for (const auto& c : candidates)
                    if (c.peer == *a.peer) chosen_u = c.utility;
                on_selection_(chosen_u, best_u);
            }
        } else if (!registry_available_) {
            fail("no peers hold the layer and the registry is unreachable");
            return;
        }
        queue_.push_back(std::move(a));
    }
}

std::vector<FetchCommand> DownloadSession::next_commands() {
    std::vector<FetchCommand> issued;
    // A batch can evaporate without issuing anything (all of its blocks were
    // assigned to a peer excluded in the meantime), so retry batch formation
    // until something issues, results are pending, or the session settles.
    while (issued.empty() && !failed_ && !complete()) {
        if (queue_.empty() && inflight_.empty()) start_batch();
        if (failed_ || queue_.empty()) break;
        issue_from_queue(issued);
        if (issued.empty() && !inflight_.empty()) break; // wait for results
    }
    return issued;
}

void DownloadSession::issue_from_queue(std::vector<FetchCommand>& issued) {
    for (auto it = queue_.begin(); it != queue_.end();) {
        bool can_issue;
        if (it->peer) {
            if (excluded_.count(*it->peer)) {
                // peer was knocked out mid-batch: requeue its blocks
                states_[it->block_index].status = BlockStatus::pending;
                ++stats_.requeues;
                it = queue_.erase(it);
                continue;
            }
            can_issue = inflight_per_source_[*it->peer] < cfg_.inflight_per_peer;
        } else {
            can_issue = registry_inflight_ < cfg_.inflight_per_peer;
        }
        if (!can_issue) {
            ++it;
            continue;
        }

        FetchCommand cmd;
        cmd.id = next_command_id_++;
        cmd.block_index = it->block_index;
        cmd.peer = it->peer;
        cmd.offset = table_.block_offset(it->block_index);
        cmd.length = table_.block_length(it->block_index);
        states_[it->block_index].status = BlockStatus::downloading;
        inflight_[cmd.id] = InFlight{it->block_index, it->peer};
        if (it->peer)
            ++inflight_per_source_[*it->peer];
        else
            ++registry_inflight_;
        issued.push_back(cmd);
        it = queue_.erase(it);
    }
}

void DownloadSession::on_result(uint64_t command_id, bool ok, ByteView bytes, double elapsed_s) {
    auto it = inflight_.find(command_id);
    if (it == inflight_.end())
        throw std::invalid_argument("unknown command id");
    const InFlight flight = it->second;
    inflight_.erase(it);
    if (flight.peer)
        --inflight_per_source_[*flight.peer];
    else
        --registry_inflight_;

    auto& state = states_[flight.block_index];
    const bool verified = ok && table_.verify_block(bytes, flight.block_index);

    if (verified) {
        if (state.status == BlockStatus::verified) {
            stats_.wasted_bytes += bytes.size(); // duplicate delivery
            return;
        }
        state.status = BlockStatus::verified;
        payload_[flight.block_index].assign(bytes.begin(), bytes.end());
        ++stats_.transfers;
        if (flight.peer) {
            failure_count_.erase(*flight.peer);
            if (flight.peer->lan_id == requester_lan_)
                stats_.local_bytes += bytes.size();
            else
                stats_.cross_bytes += bytes.size();
            if (on_transfer_ && elapsed_s > 0)
                on_transfer_(*flight.peer, bytes.size(), elapsed_s);
        } else {
            stats_.registry_bytes += bytes.size();
        }
        return;
    }

    // failed transfer or corrupted bytes: back to pending for re-download
    if (ok) {
        ++stats_.corruptions;
        stats_.wasted_bytes += bytes.size();
        if (flight.peer) {
            const uint32_t strikes = ++corruption_count_[*flight.peer];
            if (strikes >= 2) excluded_.insert(*flight.peer);
        }
    } else {
        ++stats_.failures;
        // three consecutive transport failures read as a dead peer; shed it
        // for this layer so a stale candidate list cannot stall the session
        if (flight.peer && ++failure_count_[*flight.peer] >= 3)
            excluded_.insert(*flight.peer);
    }
    ++state.retries;
    ++stats_.requeues;
    state.status = BlockStatus::pending;
    if (state.retries > cfg_.max_retries_per_block)
        fail("block " + std::to_string(flight.block_index) + " exhausted its retries");
}

bool DownloadSession::complete() const {
    return std::all_of(states_.begin(), states_.end(), [](const BlockState& s) {
        return s.status == BlockStatus::verified;
    });
}

Bytes DownloadSession::assemble() const {
    if (!complete())
        throw LayerUnavailableError("layer incomplete: " + layer_.digest.hex());
    Bytes out;
    out.reserve(table_.layer_size_bytes());
    for (const auto& b : payload_) out.insert(out.end(), b.begin(), b.end());
    if (sha256(out) != layer_.digest)
        throw LayerUnavailableError("assembled layer digest mismatch");
    return out;
}

Bytes run_session(DownloadSession& session, Transport& transport) {
    while (!session.complete() && !session.failed()) {
        auto commands = session.next_commands();
        if (commands.empty()) {
            if (!session.complete() && !session.failed())
                throw LayerUnavailableError("session stalled with no commands");
            break;
        }
        for (const auto& cmd : commands) {
            const auto outcome = transport.fetch(cmd, session.layer().digest);
            session.on_result(cmd.id, outcome.ok, outcome.bytes, outcome.elapsed_s);
            if (session.failed()) break;
        }
    }
    if (session.failed())
        throw LayerUnavailableError(session.failure_reason());
    return session.assemble();
}

} // namespace peersync
