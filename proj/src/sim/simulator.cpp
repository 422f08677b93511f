#include "peersync/sim/simulator.hpp"

#include "peersync/block_table.hpp"
#include "peersync/digest.hpp"
#include "peersync/engine.hpp"
#include "peersync/errors.hpp"
#include "peersync/rng.hpp"
#include "peersync/scoring.hpp"
#include "peersync/sim/flownet.hpp"
#include "peersync/sim/workload.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <queue>
#include <set>
#include <stdexcept>

namespace peersync::sim {

namespace {

// Discovery cost charged before a layer download starts issuing requests:
// full aggregation waits out the deadline, the fast local-multicast round is
// a fraction of it, a direct registry fetch starts immediately.
constexpr double kLocalDiscoveryS = 0.2;

struct LayerInfo {
    std::string image;
    size_t index = 0;
    LayerDescriptor desc;
    std::shared_ptr<const Bytes> payload;
    std::shared_ptr<const BlockTable> table;
};

struct CachedLayer {
    double last_access = 0;
    double stored_at = 0;
};

struct NodeState {
    std::string name;
    std::string lan;
    int up_link = -1;
    int down_link = -1;
    bool alive = true;
    std::map<Digest, CachedLayer> cache;
    std::unique_ptr<SpeedState> speeds;
};

// One block request riding the network.
struct FlowCtx {
    uint64_t pull_id = 0;
    size_t job_index = 0;
    uint64_t command_id = 0;  // engine command (peersync)
    uint32_t block_index = 0; // naive / baseline bookkeeping
    std::string source;       // node name or "registry"
    uint64_t bytes = 0;
    double issued_at = 0;
};

struct NaiveBlock {
    enum class St : uint8_t { missing, inflight, done } st = St::missing;
    uint32_t retries = 0;
};

struct LayerJob {
    const LayerInfo* info = nullptr;
    StrategyKind strategy = StrategyKind::registry_direct;
    bool started = false;
    bool done = false;
    bool prefilled = false;
    double started_s = 0;
    double finished_s = 0;
    SessionStats stats; // naive/baseline provenance; peersync uses session stats

    std::unique_ptr<DownloadSession> session; // peersync only

    // naive state
    std::vector<NaiveBlock> naive_blocks;
    std::map<std::string, uint32_t> naive_inflight; // per-source
    uint32_t naive_total_inflight = 0;
    std::unique_ptr<Rng> naive_rng;

    bool baseline_issued = false;
};

struct Pull {
    uint64_t id = 0;
    std::string node;
    std::string image;
    double started_s = 0;
    std::vector<LayerJob> jobs;
    std::vector<uint64_t> request_ids;
    bool dead = false;

    bool all_done() const {
        for (const auto& job : jobs)
            if (!job.done) return false;
        return true;
    }
};

struct PendingRequest {
    uint64_t id = 0;
    std::string image;
    std::string node;
    double arrival_s = 0;
    uint64_t pull_id = 0;
    bool resolved = false;
};

enum class EventKind : uint8_t {
    request_arrival,
    net_poll,
    job_kick,
    request_timeout,
    churn_apply,
    link_change
};

struct Event {
    double at = 0;
    uint64_t seq = 0;
    EventKind kind = EventKind::net_poll;
    uint64_t a = 0; // request id / pull id / churn index / change index / generation
    uint64_t b = 0; // job index
};

struct EventLater {
    bool operator()(const Event& x, const Event& y) const {
        if (x.at != y.at) return x.at > y.at;
        return x.seq > y.seq;
    }
};

struct LinkChange {
    double at_s = 0;
    std::vector<int> links;
    ScheduleEntry entry;
};

class Simulation {
public:
    Simulation(const Scenario& scenario, const std::string& policy, uint64_t seed)
        : scenario_(scenario), policy_(policy), seed_(seed) {}

    SimResult run();

private:
    // --- construction -----------------------------------------------------
    void build_content();
    void build_network();
    void build_schedule();

    // --- event handlers ---------------------------------------------------
    void on_request_arrival(uint64_t req_id);
    void on_job_kick(uint64_t pull_id, size_t job_index);
    void on_request_timeout(uint64_t req_id);
    void on_churn(size_t index);
    void on_link_change(size_t index);
    void on_net_poll();

    // --- mechanics --------------------------------------------------------
    void push_event(double at, EventKind kind, uint64_t a = 0, uint64_t b = 0);
    void schedule_net_poll();
    void start_pull(PendingRequest& req);
    void pump_engine(Pull& pull, size_t job_index);
    void pump_naive(Pull& pull, size_t job_index);
    void issue_baseline(Pull& pull, size_t job_index);
    void deliver_flow(int flow_id, FlowCtx ctx);
    void finish_job(Pull& pull, size_t job_index);
    void finish_pull(Pull& pull);
    void resolve_request(PendingRequest& req, bool completed, double duration);
    void store_layer(const std::string& node_name, const LayerInfo& info);
    void drop_holder(const std::string& node_name, const Digest& digest);
    void run_cache_cleaner(const std::string& node_name);
    void fail_source_flows(const std::string& node_name);
    void teardown_pulls_owned_by(const std::string& node_name);

    std::vector<int> path_between(const NodeState& src, const NodeState& dst) const;
    const NodeState& node(const std::string& name) const { return nodes_.at(name); }
    NodeState& node(const std::string& name) { return nodes_.at(name); }

    std::vector<Candidate> candidates_for(const std::string& node_name, const Digest& digest,
                                          StrategyKind strategy);
    const ContentIndex& content_index();
    std::vector<std::string> holder_names(const Digest& digest, const std::string& exclude,
                                          bool local_only, const std::string& lan) const;

    // --- wiring -----------------------------------------------------------
    const Scenario& scenario_;
    std::string policy_;
    uint64_t seed_;

    std::map<std::string, LayerInfo> layer_by_image_index_; // "image#i"
    std::map<Digest, const LayerInfo*> layer_by_digest_;
    std::map<Digest, std::set<std::string>> holders_;

    FlowNet net_;
    std::map<std::string, NodeState> nodes_;
    std::map<std::string, std::pair<int, int>> lan_uplinks_; // lan -> (up, down)
    std::set<int> transit_links_;
    std::vector<LinkChange> link_changes_;

    std::priority_queue<Event, std::vector<Event>, EventLater> events_;
    uint64_t next_seq_ = 1;
    double now_ = 0;
    uint64_t net_poll_generation_ = 0;

    std::map<uint64_t, PendingRequest> requests_;
    std::map<uint64_t, Pull> pulls_;
    std::map<std::string, uint64_t> active_pull_by_key_; // "node|image"
    uint64_t next_pull_id_ = 1;
    size_t unresolved_ = 0;

    std::map<int, FlowCtx> flows_;

    ContentIndex content_index_;
    bool content_index_dirty_ = true;

    RegretLedger regret_;
    std::vector<EvictionEvent> evictions_;
    std::string layers_csv_;
    uint64_t integrity_checks_ = 0;

    MetricsReport report_;
};

void Simulation::push_event(double at, EventKind kind, uint64_t a, uint64_t b) {
    events_.push(Event{at, next_seq_++, kind, a, b});
}

void Simulation::build_content() {
    for (const auto& image : scenario_.catalog) {
        for (size_t i = 0; i < image.layers_mib.size(); ++i) {
            const auto bytes = static_cast<uint64_t>(image.layers_mib[i] * 1024 * 1024);
            // Payload seeded by content identity, not run seed: the same
            // scenario yields the same digests for every (policy, seed).
            Rng rng(stream_seed(0x7061796c6f6164ULL, image.name + "#" + std::to_string(i)));
            auto payload = std::make_shared<Bytes>(bytes);
            for (auto& b : *payload) b = static_cast<uint8_t>(rng.next_u64() & 0xff);
            auto table = std::make_shared<BlockTable>(BlockTable::build(*payload));
            LayerInfo info;
            info.image = image.name;
            info.index = i;
            info.desc.digest = table->layer_digest();
            info.desc.size_bytes = bytes;
            info.payload = std::move(payload);
            info.table = std::move(table);
            const std::string key = image.name + "#" + std::to_string(i);
            auto [it, inserted] = layer_by_image_index_.emplace(key, std::move(info));
            if (inserted) layer_by_digest_[it->second.desc.digest] = &it->second;
        }
    }
}

void Simulation::build_network() {
    for (const auto& lan : scenario_.lans) {
        const auto& up_spec = scenario_.uplink_for(lan.id);
        const int up = net_.add_link(up_spec.bits_per_s(), up_spec.latency_s(), up_spec.loss);
        const int down = net_.add_link(up_spec.bits_per_s(), up_spec.latency_s(), up_spec.loss);
        lan_uplinks_[lan.id] = {up, down};
        // Cross-LAN bytes are counted once, on the sender's uplink.
        net_.account_link(up);
        transit_links_.insert(up);

        auto add_node = [&](const std::string& name) {
            NodeState ns;
            ns.name = name;
            ns.lan = lan.id;
            ns.up_link = net_.add_link(lan.intra.bits_per_s(), lan.intra.latency_s(), lan.intra.loss);
            ns.down_link =
                net_.add_link(lan.intra.bits_per_s(), lan.intra.latency_s(), lan.intra.loss);
            ns.speeds = std::make_unique<SpeedState>(scenario_.engine.weights.window_len);
            nodes_.emplace(name, std::move(ns));
        };
        for (int i = 0; i < lan.nodes; ++i) add_node(lan.id + ":" + std::to_string(i));
        if (lan.id == scenario_.registry_lan) add_node("registry");

        // Schedules: the uplink pair follows its own spec's schedule; node
        // access links follow the intra schedule.
        for (const auto& entry : up_spec.schedule)
            link_changes_.push_back({entry.at_s, {up, down}, entry});
        if (!lan.intra.schedule.empty()) {
            std::vector<int> access;
            for (const auto& [name, ns] : nodes_)
                if (ns.lan == lan.id) {
                    access.push_back(ns.up_link);
                    access.push_back(ns.down_link);
                }
            for (const auto& entry : lan.intra.schedule)
                link_changes_.push_back({entry.at_s, access, entry});
        }
    }
    std::stable_sort(link_changes_.begin(), link_changes_.end(),
                     [](const LinkChange& a, const LinkChange& b) { return a.at_s < b.at_s; });

    net_.set_accountant([this](int link, double t0, double t1, double bytes) {
        if (transit_links_.count(link)) report_.cross_traffic.add(t0, t1, bytes);
    });

    // Seed placements.
    for (const auto& seed : scenario_.seeds) {
        const auto* image = scenario_.find_image(seed.image);
        for (size_t i = 0; i < image->layers_mib.size(); ++i) {
            const auto& info = layer_by_image_index_.at(seed.image + "#" + std::to_string(i));
            for (const auto& node_name : seed.nodes) {
                if (node_name == "registry") continue; // registry holds everything anyway
                nodes_.at(node_name).cache[info.desc.digest] = CachedLayer{0, 0};
                holders_[info.desc.digest].insert(node_name);
            }
        }
    }
}

void Simulation::build_schedule() {
    const auto schedule = build_request_schedule(scenario_, seed_);
    uint64_t req_id = 1;
    for (const auto& gen : schedule) {
        PendingRequest req;
        req.id = req_id++;
        req.image = gen.image;
        req.node = gen.node;
        req.arrival_s = gen.at_s;
        requests_.emplace(req.id, req);
        push_event(gen.at_s, EventKind::request_arrival, req.id);
        push_event(gen.at_s + scenario_.time_limit_s, EventKind::request_timeout, req.id);
    }
    unresolved_ = requests_.size();
    for (size_t i = 0; i < scenario_.churn.size(); ++i)
        push_event(scenario_.churn[i].at_s, EventKind::churn_apply, i);
    for (size_t i = 0; i < link_changes_.size(); ++i)
        push_event(link_changes_[i].at_s, EventKind::link_change, i);
}

const ContentIndex& Simulation::content_index() {
    if (!content_index_dirty_) return content_index_;
    content_index_ = ContentIndex{};
    for (const auto& image : scenario_.catalog)
        for (size_t i = 0; i < image.layers_mib.size(); ++i)
            content_index_.layers_of[image.name].insert(
                layer_by_image_index_.at(image.name + "#" + std::to_string(i)).desc.digest);
    for (const auto& [name, ns] : nodes_) {
        if (!ns.alive || name == "registry" || ns.cache.empty()) continue;
        const PeerId peer{name, ns.lan};
        for (const auto& image : scenario_.catalog) {
            bool any = false;
            for (size_t i = 0; i < image.layers_mib.size(); ++i)
                if (ns.cache.count(
                        layer_by_image_index_.at(image.name + "#" + std::to_string(i)).desc.digest))
                    any = true;
            if (any) {
                content_index_.peers.insert(peer);
                content_index_.images_of[peer].insert(image.name);
            }
        }
    }
    content_index_dirty_ = false;
    return content_index_;
}

std::vector<std::string> Simulation::holder_names(const Digest& digest, const std::string& exclude,
                                                  bool local_only, const std::string& lan) const {
    std::vector<std::string> out;
    auto it = holders_.find(digest);
    if (it == holders_.end()) return out;
    for (const auto& name : it->second) {
        if (name == exclude) continue;
        const auto& ns = nodes_.at(name);
        if (!ns.alive) continue;
        if (local_only && ns.lan != lan) continue;
        out.push_back(name);
    }
    return out;
}

std::vector<Candidate> Simulation::candidates_for(const std::string& node_name,
                                                  const Digest& digest, StrategyKind strategy) {
    auto& self = node(node_name);
    if (strategy == StrategyKind::registry_direct) return {};
    const bool local_only = strategy == StrategyKind::partial_p2p;
    const auto names = holder_names(digest, node_name, local_only, self.lan);
    std::vector<Candidate> out;
    if (names.empty()) return out;

    const auto& index = content_index();
    // Network scores: same-LAN peers are pinned at 100 by the scoring rule;
    // remote peers with history are min-max rescaled among themselves; remote
    // peers never sampled yet get a neutral 50 (cold start).
    std::vector<PeerId> scored;  // local + sampled-remote, module-scored
    std::vector<size_t> scored_pos;
    std::vector<double> net_score(names.size(), 50.0);
    for (size_t i = 0; i < names.size(); ++i) {
        const PeerId peer{names[i], nodes_.at(names[i]).lan};
        if (peer.lan_id == self.lan || self.speeds->has_samples(peer)) {
            scored.push_back(peer);
            scored_pos.push_back(i);
        }
    }
    if (!scored.empty()) {
        const auto values = network_scores(scored, self.lan, *self.speeds);
        for (size_t k = 0; k < scored.size(); ++k) net_score[scored_pos[k]] = values[k];
    }

    for (size_t i = 0; i < names.size(); ++i) {
        const PeerId peer{names[i], nodes_.at(names[i]).lan};
        double pop = 0;
        try {
            pop = popularity_score(peer, index, scenario_.engine.weights.lambda);
        } catch (const NoDataError&) {
            pop = 0;
        }
        const double u = utility(scenario_.engine.weights, net_score[i], pop, 0.0);
        out.push_back(Candidate{peer, u});
    }
    return out;
}

std::vector<int> Simulation::path_between(const NodeState& src, const NodeState& dst) const {
    if (src.lan == dst.lan) return {src.up_link, dst.down_link};
    const auto& [src_up, src_down] = lan_uplinks_.at(src.lan);
    const auto& [dst_up, dst_down] = lan_uplinks_.at(dst.lan);
    (void)src_down;
    (void)dst_up;
    return {src.up_link, src_up, dst_down, dst.down_link};
}

void Simulation::schedule_net_poll() {
    double soonest = FlowNet::kInfinity;
    for (const auto& [id, at] : net_.projected_completions()) {
        (void)id;
        soonest = std::min(soonest, at);
    }
    if (!std::isfinite(soonest)) return;
    ++net_poll_generation_;
    push_event(std::max(soonest, now_), EventKind::net_poll, net_poll_generation_);
}

void Simulation::on_request_arrival(uint64_t req_id) {
    auto& req = requests_.at(req_id);
    auto& ns = node(req.node);
    if (!ns.alive) return; // resolves at its timeout

    const std::string key = req.node + "|" + req.image;
    if (auto it = active_pull_by_key_.find(key); it != active_pull_by_key_.end()) {
        auto& pull = pulls_.at(it->second);
        if (!pull.dead) { // coalesce with the in-flight pull
            pull.request_ids.push_back(req_id);
            req.pull_id = pull.id;
            return;
        }
    }

    const auto* image = scenario_.find_image(req.image);
    if (scenario_.request_mode == "cached") {
        bool all_held = true;
        for (size_t i = 0; i < image->layers_mib.size(); ++i) {
            const auto& info = layer_by_image_index_.at(req.image + "#" + std::to_string(i));
            if (!ns.cache.count(info.desc.digest)) all_held = false;
        }
        if (all_held) {
            for (size_t i = 0; i < image->layers_mib.size(); ++i) {
                const auto& info = layer_by_image_index_.at(req.image + "#" + std::to_string(i));
                ns.cache[info.desc.digest].last_access = now_;
            }
            resolve_request(req, true, 0.0);
            return;
        }
    } else {
        // Benchmark semantics: a request re-downloads from scratch.
        for (size_t i = 0; i < image->layers_mib.size(); ++i) {
            const auto& info = layer_by_image_index_.at(req.image + "#" + std::to_string(i));
            if (ns.cache.erase(info.desc.digest)) drop_holder(req.node, info.desc.digest);
        }
    }
    start_pull(req);
}

void Simulation::start_pull(PendingRequest& req) {
    Pull pull;
    pull.id = next_pull_id_++;
    pull.node = req.node;
    pull.image = req.image;
    pull.started_s = now_;
    pull.request_ids.push_back(req.id);
    req.pull_id = pull.id;

    auto& ns = node(req.node);
    const auto* image = scenario_.find_image(req.image);
    for (size_t i = 0; i < image->layers_mib.size(); ++i) {
        const auto& info = layer_by_image_index_.at(req.image + "#" + std::to_string(i));
        LayerJob job;
        job.info = &info;
        job.started_s = now_;
        if (ns.cache.count(info.desc.digest)) {
            job.done = true;
            job.prefilled = true;
            job.finished_s = now_;
            ns.cache[info.desc.digest].last_access = now_;
            pull.jobs.push_back(std::move(job));
            continue;
        }
        double delay = 0;
        if (policy_ == "baseline") {
            job.strategy = StrategyKind::registry_direct;
        } else if (policy_ == "naive") {
            // Global uniform peer choice needs the full aggregation round.
            job.strategy = StrategyKind::full_p2p;
            delay = scenario_.engine.aggregation_deadline_s;
        } else {
            DiscoveryFn discover = [this, &ns](const Digest& digest, double deadline_s,
                                               bool local_only) {
                (void)deadline_s;
                DiscoverySample sample;
                for (const auto& name : holder_names(digest, ns.name, local_only, ns.lan))
                    sample.holders.push_back(PeerId{name, nodes_.at(name).lan});
                sample.facade_ok = true;
                return sample;
            };
            job.strategy = choose_strategy(info.desc, ns.lan, discover, scenario_.engine);
            if (job.strategy == StrategyKind::full_p2p)
                delay = scenario_.engine.aggregation_deadline_s;
            else if (job.strategy == StrategyKind::partial_p2p)
                delay = kLocalDiscoveryS;
        }
        pull.jobs.push_back(std::move(job));
        push_event(now_ + delay, EventKind::job_kick, pull.id, pull.jobs.size() - 1);
    }

    const std::string key = req.node + "|" + req.image;
    active_pull_by_key_[key] = pull.id;
    const bool done = pull.all_done();
    auto& stored = pulls_.emplace(pull.id, std::move(pull)).first->second;
    if (done) finish_pull(stored);
}

void Simulation::on_job_kick(uint64_t pull_id, size_t job_index) {
    auto it = pulls_.find(pull_id);
    if (it == pulls_.end() || it->second.dead) return;
    auto& pull = it->second;
    auto& job = pull.jobs[job_index];
    if (job.done || job.started) return;
    job.started = true;
    job.started_s = now_;

    if (policy_ == "peersync") {
        const auto& info = *job.info;
        auto& ns = node(pull.node);
        auto provider = [this, node_name = pull.node, digest = info.desc.digest,
                         strategy = job.strategy]() {
            return candidates_for(node_name, digest, strategy);
        };
        job.session = std::make_unique<DownloadSession>(
            info.desc, *info.table, scenario_.engine, job.strategy, ns.lan, provider,
            node("registry").alive,
            stream_seed(seed_, pull.node + "#" + std::to_string(pull.id)));
        job.session->set_transfer_observer(
            [this, node_name = pull.node](const PeerId& peer, uint64_t bytes, double elapsed_s) {
                if (elapsed_s > 0)
                    node(node_name).speeds->record_speed(
                        peer, static_cast<double>(bytes) / elapsed_s,
                        static_cast<int64_t>(std::floor(now_)));
            });
        job.session->set_selection_observer(
            [this](double chosen_u, double best_u) { regret_.record_round(chosen_u, best_u); });
        pump_engine(pull, job_index);
    } else if (policy_ == "naive") {
        job.naive_blocks.assign(job.info->table->block_count(), NaiveBlock{});
        job.naive_rng = std::make_unique<Rng>(stream_seed(
            seed_, "naive:" + pull.node + "#" + std::to_string(pull.id) + "#" +
                       std::to_string(job_index)));
        pump_naive(pull, job_index);
    } else {
        issue_baseline(pull, job_index);
    }
    schedule_net_poll();
}

void Simulation::pump_engine(Pull& pull, size_t job_index) {
    auto& job = pull.jobs[job_index];
    auto& session = *job.session;
    for (const auto& cmd : session.next_commands()) {
        const auto& src_name = cmd.peer ? cmd.peer->id : std::string("registry");
        auto& src = node(src_name);
        auto& dst = node(pull.node);
        if (cmd.peer) {
            auto cached = src.cache.find(job.info->desc.digest);
            if (cached != src.cache.end()) cached->second.last_access = now_;
        }
        const int flow =
            net_.start_flow(path_between(src, dst), static_cast<double>(cmd.length), now_);
        FlowCtx ctx;
        ctx.pull_id = pull.id;
        ctx.job_index = job_index;
        ctx.command_id = cmd.id;
        ctx.block_index = cmd.block_index;
        ctx.source = src_name;
        ctx.bytes = cmd.length;
        ctx.issued_at = now_;
        flows_.emplace(flow, std::move(ctx));
    }
    if (session.complete() || session.failed()) finish_job(pull, job_index);
}

void Simulation::pump_naive(Pull& pull, size_t job_index) {
    auto& job = pull.jobs[job_index];
    const auto& info = *job.info;
    const auto holders = holder_names(info.desc.digest, pull.node, false, "");
    auto& dst = node(pull.node);

    for (uint32_t i = 0; i < job.naive_blocks.size(); ++i) {
        if (job.naive_total_inflight >= scenario_.engine.batch_size) break;
        auto& block = job.naive_blocks[i];
        if (block.st != NaiveBlock::St::missing) continue;

        // Uniform choice over every holder, locality-blind; capped per source.
        std::vector<std::string> open;
        for (const auto& name : holders)
            if (job.naive_inflight[name] < scenario_.engine.inflight_per_peer)
                open.push_back(name);
        std::string src_name;
        if (!open.empty()) {
            src_name = open[job.naive_rng->next_below(open.size())];
        } else if (holders.empty() &&
                   job.naive_inflight["registry"] < scenario_.engine.inflight_per_peer) {
            src_name = "registry";
        } else {
            break; // every source is saturated; wait for a completion
        }

        block.st = NaiveBlock::St::inflight;
        ++job.naive_inflight[src_name];
        ++job.naive_total_inflight;
        auto& src = node(src_name);
        const uint64_t bytes = info.table->block_length(i);
        const int flow =
            net_.start_flow(path_between(src, dst), static_cast<double>(bytes), now_);
        FlowCtx ctx;
        ctx.pull_id = pull.id;
        ctx.job_index = job_index;
        ctx.block_index = i;
        ctx.source = src_name;
        ctx.bytes = bytes;
        ctx.issued_at = now_;
        flows_.emplace(flow, std::move(ctx));
    }
}

void Simulation::issue_baseline(Pull& pull, size_t job_index) {
    auto& job = pull.jobs[job_index];
    if (job.baseline_issued) return;
    job.baseline_issued = true;
    auto& src = node("registry");
    auto& dst = node(pull.node);
    const uint64_t bytes = job.info->desc.size_bytes;
    const int flow = net_.start_flow(path_between(src, dst), static_cast<double>(bytes), now_);
    FlowCtx ctx;
    ctx.pull_id = pull.id;
    ctx.job_index = job_index;
    ctx.source = "registry";
    ctx.bytes = bytes;
    ctx.issued_at = now_;
    flows_.emplace(flow, std::move(ctx));
}

void Simulation::deliver_flow(int flow_id, FlowCtx ctx) {
    auto it = pulls_.find(ctx.pull_id);
    (void)flow_id;
    if (it == pulls_.end() || it->second.dead) return;
    auto& pull = it->second;
    auto& job = pull.jobs[ctx.job_index];
    if (job.done) return;
    const double elapsed = now_ - ctx.issued_at;
    const auto& info = *job.info;

    if (policy_ == "peersync") {
        const uint64_t offset = info.table->block_offset(ctx.block_index);
        ByteView slice(info.payload->data() + offset, ctx.bytes);
        job.session->on_result(ctx.command_id, true, slice, elapsed);
        pump_engine(pull, ctx.job_index);
        return;
    }
    if (policy_ == "naive") {
        auto& block = job.naive_blocks[ctx.block_index];
        block.st = NaiveBlock::St::done;
        --job.naive_inflight[ctx.source];
        --job.naive_total_inflight;
        const uint64_t offset = info.table->block_offset(ctx.block_index);
        ByteView slice(info.payload->data() + offset, ctx.bytes);
        if (!info.table->verify_block(slice, ctx.block_index))
            throw std::logic_error("simulated block failed verification");
        if (ctx.source == "registry")
            job.stats.registry_bytes += ctx.bytes;
        else if (nodes_.at(ctx.source).lan == node(pull.node).lan)
            job.stats.local_bytes += ctx.bytes;
        else
            job.stats.cross_bytes += ctx.bytes;
        ++job.stats.transfers;
        bool all_done = true;
        for (const auto& b : job.naive_blocks)
            if (b.st != NaiveBlock::St::done) all_done = false;
        if (all_done)
            finish_job(pull, ctx.job_index);
        else
            pump_naive(pull, ctx.job_index);
        return;
    }
    // baseline
    job.stats.registry_bytes += ctx.bytes;
    ++job.stats.transfers;
    finish_job(pull, ctx.job_index);
}

void Simulation::finish_job(Pull& pull, size_t job_index) {
    auto& job = pull.jobs[job_index];
    if (job.done) return;
    const auto& info = *job.info;

    if (policy_ == "peersync" && job.session) {
        if (job.session->failed()) {
            pull.dead = true; // requests resolve at their time limits
            return;
        }
        const Bytes assembled = job.session->assemble(); // digest-checked
        if (sha256(assembled) != info.desc.digest)
            throw std::logic_error("assembled layer digest mismatch");
        ++integrity_checks_;
        job.stats = job.session->stats();
        job.session.reset();
    } else if (!job.prefilled) {
        // naive / baseline: whole-payload digest check stands in for the
        // engine's assemble-time verification.
        if (sha256(*info.payload) != info.desc.digest)
            throw std::logic_error("payload digest mismatch");
        ++integrity_checks_;
    }

    job.done = true;
    job.finished_s = now_;
    if (!job.prefilled) {
        layers_csv_ += fmt::format("{},{},{},{},{:.6f},{},{},{}\n", info.desc.digest.hex(),
                                   info.image, pull.node, strategy_name(job.strategy),
                                   job.finished_s - job.started_s, job.stats.local_bytes,
                                   job.stats.cross_bytes, job.stats.registry_bytes);
        store_layer(pull.node, info);
    }
    if (pull.all_done()) finish_pull(pull);
}

void Simulation::finish_pull(Pull& pull) {
    uint64_t local = 0, cross = 0, registry = 0, wasted = 0;
    std::string strategies;
    for (const auto& job : pull.jobs) {
        local += job.stats.local_bytes;
        cross += job.stats.cross_bytes;
        registry += job.stats.registry_bytes;
        wasted += job.stats.wasted_bytes;
        const std::string name = job.prefilled ? "cached" : strategy_name(job.strategy);
        if (strategies.find(name) == std::string::npos)
            strategies += (strategies.empty() ? "" : "+") + name;
    }
    for (uint64_t req_id : pull.request_ids) {
        auto& req = requests_.at(req_id);
        if (req.resolved) continue;
        auto& record = report_.requests.emplace_back();
        record.id = req.id;
        record.image = req.image;
        record.node = req.node;
        record.arrival_s = req.arrival_s;
        record.duration_s = now_ - req.arrival_s;
        record.completed = true;
        record.local_bytes = local;
        record.cross_bytes = cross;
        record.registry_bytes = registry;
        record.wasted_bytes = wasted;
        record.strategy = strategies;
        req.resolved = true;
        --unresolved_;
    }
    active_pull_by_key_.erase(pull.node + "|" + pull.image);
}

void Simulation::resolve_request(PendingRequest& req, bool completed, double duration) {
    if (req.resolved) return;
    auto& record = report_.requests.emplace_back();
    record.id = req.id;
    record.image = req.image;
    record.node = req.node;
    record.arrival_s = req.arrival_s;
    record.duration_s = duration;
    record.completed = completed;
    record.strategy = completed ? "cached" : "timeout";
    if (!completed && req.pull_id) {
        if (auto it = pulls_.find(req.pull_id); it != pulls_.end()) {
            for (const auto& job : it->second.jobs) {
                const auto& stats = job.session ? job.session->stats() : job.stats;
                record.local_bytes += stats.local_bytes;
                record.cross_bytes += stats.cross_bytes;
                record.registry_bytes += stats.registry_bytes;
                record.wasted_bytes += stats.wasted_bytes;
            }
        }
    }
    req.resolved = true;
    --unresolved_;
}

void Simulation::on_request_timeout(uint64_t req_id) {
    auto& req = requests_.at(req_id);
    if (req.resolved) return;
    resolve_request(req, false, scenario_.time_limit_s);
    // Detach: the pull keeps running for any later-attached requests and to
    // seed the swarm, matching a client that gives up while the transfer
    // daemon finishes its fetch.
}

void Simulation::store_layer(const std::string& node_name, const LayerInfo& info) {
    auto& ns = node(node_name);
    ns.cache[info.desc.digest] = CachedLayer{now_, now_};
    if (policy_ != "baseline") {
        // Baseline clients do not participate in the swarm.
        holders_[info.desc.digest].insert(node_name);
    }
    content_index_dirty_ = true;
    run_cache_cleaner(node_name);
}

void Simulation::drop_holder(const std::string& node_name, const Digest& digest) {
    auto it = holders_.find(digest);
    if (it != holders_.end()) {
        it->second.erase(node_name);
        if (it->second.empty()) holders_.erase(it);
    }
    content_index_dirty_ = true;
}

void Simulation::run_cache_cleaner(const std::string& node_name) {
    if (scenario_.cache.capacity_mib <= 0) return;
    auto& ns = node(node_name);
    const auto policy = scenario_.cache_policy();
    uint64_t used = 0;
    for (const auto& [digest, item] : ns.cache) {
        (void)item;
        used += layer_by_digest_.at(digest)->desc.size_bytes;
    }
    // A just-stored layer can push the node transiently over capacity, which
    // needs_cleaning treats as a precondition violation; over-full is
    // unconditionally dirty.
    if (used <= policy.total_bytes && !needs_cleaning(policy, used)) return;

    // Pin layers any active pull on this node still needs.
    std::set<Digest> pinned;
    for (const auto& [id, pull] : pulls_) {
        (void)id;
        if (pull.node != node_name || pull.dead) continue;
        if (pull.all_done()) continue;
        for (const auto& job : pull.jobs) pinned.insert(job.info->desc.digest);
    }

    std::vector<CacheEntry> entries;
    for (const auto& [digest, item] : ns.cache) {
        CacheEntry entry;
        entry.content = digest;
        entry.size_bytes = layer_by_digest_.at(digest)->desc.size_bytes;
        entry.last_access = item.last_access;
        entry.pinned = pinned.count(digest) != 0;
        entry.replicas_refreshed_at = now_;
        auto holder_it = holders_.find(digest);
        if (holder_it != holders_.end())
            for (const auto& other : holder_it->second) {
                if (other == node_name || !nodes_.at(other).alive) continue;
                if (nodes_.at(other).lan == ns.lan)
                    ++entry.local_replicas;
                else
                    ++entry.external_replicas;
            }
        entries.push_back(std::move(entry));
    }

    const auto plan = scenario_.cache.planner == "lru" ? plan_eviction_lru(entries, policy, now_)
                                                       : plan_eviction(entries, policy, now_);
    for (const auto& victim : plan.victims) {
        ns.cache.erase(victim.content);
        drop_holder(node_name, victim.content);
        evictions_.push_back(EvictionEvent{now_, victim.content, victim.size_bytes,
                                           eviction_tier(victim, policy, now_), "capacity"});
    }
}

void Simulation::fail_source_flows(const std::string& node_name) {
    // A departed node abandons the transfers it was serving or receiving.
    std::vector<std::pair<int, FlowCtx>> affected;
    for (const auto& [flow_id, ctx] : flows_) {
        const auto pull_it = pulls_.find(ctx.pull_id);
        const bool to_node = pull_it != pulls_.end() && pull_it->second.node == node_name;
        if (ctx.source == node_name || to_node) affected.push_back({flow_id, ctx});
    }
    for (const auto& [flow_id, ctx] : affected) {
        net_.cancel_flow(flow_id, now_);
        flows_.erase(flow_id);
        auto it = pulls_.find(ctx.pull_id);
        if (it == pulls_.end() || it->second.dead) continue;
        auto& pull = it->second;
        if (pull.node == node_name) continue; // torn down separately
        auto& job = pull.jobs[ctx.job_index];
        if (job.done) continue;
        if (policy_ == "peersync" && job.session) {
            job.session->on_result(ctx.command_id, false, {}, now_ - ctx.issued_at);
            pump_engine(pull, ctx.job_index);
        } else if (policy_ == "naive") {
            auto& block = job.naive_blocks[ctx.block_index];
            block.st = NaiveBlock::St::missing;
            ++block.retries;
            --job.naive_inflight[ctx.source];
            --job.naive_total_inflight;
            if (block.retries > scenario_.engine.max_retries_per_block)
                pull.dead = true;
            else
                pump_naive(pull, ctx.job_index);
        }
        // baseline flows only involve the registry, which does not churn
    }
}

void Simulation::teardown_pulls_owned_by(const std::string& node_name) {
    for (auto& [id, pull] : pulls_) {
        (void)id;
        if (pull.node != node_name || pull.dead || pull.all_done()) continue;
        pull.dead = true;
        std::vector<int> owned;
        for (const auto& [flow_id, ctx] : flows_)
            if (ctx.pull_id == pull.id) owned.push_back(flow_id);
        for (int flow_id : owned) {
            net_.cancel_flow(flow_id, now_);
            flows_.erase(flow_id);
        }
    }
}

void Simulation::on_churn(size_t index) {
    const auto& ev = scenario_.churn[index];
    auto& ns = node(ev.node);
    if (ev.leave) {
        if (!ns.alive) return;
        ns.alive = false;
        fail_source_flows(ev.node);
        teardown_pulls_owned_by(ev.node);
        for (const auto& [digest, item] : ns.cache) {
            (void)item;
            drop_holder(ev.node, digest);
        }
    } else {
        if (ns.alive) return;
        ns.alive = true;
        for (const auto& [digest, item] : ns.cache) {
            (void)item;
            holders_[digest].insert(ev.node);
        }
        content_index_dirty_ = true;
    }
}

void Simulation::on_link_change(size_t index) {
    const auto& change = link_changes_[index];
    for (int link : change.links)
        net_.set_link(link, change.entry.mbps * 1e6, change.entry.latency_ms / 1e3,
                      change.entry.loss);
}

void Simulation::on_net_poll() {
    // Deliver every flow whose projected completion has arrived, lowest id
    // first. Completion time, not a residual-byte epsilon, is the doneness
    // test: a fast flow's last sliver can be smaller than one time ulp, and
    // waiting for the residual to drain would spin at a frozen clock.
    std::vector<int> done;
    for (const auto& [flow_id, at] : net_.projected_completions())
        if (at <= now_ && flows_.count(flow_id)) done.push_back(flow_id);
    for (int flow_id : done) {
        auto ctx = flows_.at(flow_id);
        net_.cancel_flow(flow_id, now_);
        flows_.erase(flow_id);
        deliver_flow(flow_id, std::move(ctx));
    }
}

SimResult Simulation::run() {
    build_content();
    build_network();
    build_schedule();

    layers_csv_ = "layer,image,node,strategy,total_s,local_bytes,cross_bytes,registry_bytes\n";
    report_.scenario = scenario_.name;
    report_.policy = policy_;
    report_.seed = seed_;
    report_.time_limit_s = scenario_.time_limit_s;

    while (!events_.empty() && unresolved_ > 0) {
        const Event ev = events_.top();
        events_.pop();
        if (ev.kind == EventKind::net_poll && ev.a != net_poll_generation_) continue;
        net_.advance_to(ev.at);
        now_ = ev.at;
        switch (ev.kind) {
        case EventKind::request_arrival: on_request_arrival(ev.a); break;
        case EventKind::net_poll: on_net_poll(); break;
        case EventKind::job_kick: on_job_kick(ev.a, ev.b); break;
        case EventKind::request_timeout: on_request_timeout(ev.a); break;
        case EventKind::churn_apply: on_churn(ev.a); break;
        case EventKind::link_change: on_link_change(ev.a); break;
        }
        if (unresolved_ == 0) break;
        schedule_net_poll();
    }

    report_.makespan_s = now_;
    std::stable_sort(report_.requests.begin(), report_.requests.end(),
                     [](const RequestRecord& a, const RequestRecord& b) { return a.id < b.id; });

    SimResult result;
    result.report = std::move(report_);
    result.evictions = std::move(evictions_);
    result.regret_csv = policy_ == "peersync" ? regret_.to_csv() : std::string();
    result.layers_csv = std::move(layers_csv_);
    result.integrity_checks = integrity_checks_;
    return result;
}

} // namespace

SimResult run_simulation(const Scenario& scenario, const std::string& policy, uint64_t seed) {
    if (policy != "peersync" && policy != "baseline" && policy != "naive")
        throw std::invalid_argument("unknown policy: " + policy);
    Simulation sim(scenario, policy, seed);
    return sim.run();
}

std::vector<PolicyAggregate> aggregate_comparison(const std::vector<SimResult>& runs) {
    std::map<std::string, std::vector<const SimResult*>> by_policy;
    for (const auto& run : runs) by_policy[run.report.policy].push_back(&run);

    std::vector<PolicyAggregate> rows;
    double baseline_mean = 0;
    for (const auto& [policy, group] : by_policy) {
        PolicyAggregate agg;
        agg.policy = policy;
        std::vector<double> pooled;
        double avg_sum = 0;
        for (const auto* run : group) {
            const auto durations = run->report.durations();
            pooled.insert(pooled.end(), durations.begin(), durations.end());
            agg.timeouts += run->report.timeout_count();
            const double horizon = run->report.makespan_s > 0 ? run->report.makespan_s : 1.0;
            agg.cross_max_gbps =
                std::max(agg.cross_max_gbps, run->report.cross_traffic.max_window_gbps());
            avg_sum += run->report.cross_traffic.average_gbps(horizon);
        }
        agg.requests = pooled.size();
        if (!pooled.empty()) {
            double total = 0;
            for (double d : pooled) total += d;
            agg.mean_s = total / static_cast<double>(pooled.size());
            agg.p90_s = percentile_nearest_rank(pooled, 90);
            agg.p99_s = percentile_nearest_rank(pooled, 99);
        }
        agg.cross_avg_gbps = group.empty() ? 0 : avg_sum / static_cast<double>(group.size());
        if (policy == "baseline") baseline_mean = agg.mean_s;
        rows.push_back(std::move(agg));
    }
    for (auto& row : rows)
        row.vs_baseline_pct = baseline_mean > 0 ? 100.0 * row.mean_s / baseline_mean : 0.0;
    return rows;
}

std::string aggregate_csv(const std::vector<PolicyAggregate>& rows) {
    std::string out =
        "policy,requests,timeouts,mean_s,vs_baseline_pct,p90_s,p99_s,cross_max_gbps,"
        "cross_avg_gbps\n";
    for (const auto& row : rows)
        out += fmt::format("{},{},{},{:.6f},{:.2f},{:.6f},{:.6f},{:.6f},{:.6f}\n", row.policy,
                           row.requests, row.timeouts, row.mean_s, row.vs_baseline_pct, row.p90_s,
                           row.p99_s, row.cross_max_gbps, row.cross_avg_gbps);
    return out;
}

} // namespace peersync::sim
