#pragma once

#include "peersync/digest.hpp"
#include "peersync/rng.hpp"

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace peersync {

using LanId = std::string;

struct PeerId {
    std::string id;
    LanId lan_id;

    auto operator<=>(const PeerId&) const = default;
};

// Sliding window of (slot, speed) samples, newest last. At most `capacity`
// samples; slots strictly increasing. Multiple samples recorded in the same
// slot collapse into that slot's running mean.
class SpeedWindow {
public:
    explicit SpeedWindow(uint32_t capacity) : capacity_(capacity) {}

    void record(int64_t slot, double speed);
    // Overwrites the value for `slot` when it is already the newest entry,
    // otherwise appends. Used for derived series (recomputed means) where a
    // same-slot update supersedes the previous value instead of averaging in.
    void set_latest(int64_t slot, double value);
    bool empty() const { return samples_.empty(); }
    size_t size() const { return samples_.size(); }
    uint32_t capacity() const { return capacity_; }
    int64_t oldest_slot() const { return samples_.front().slot; }

    // Exponentially weighted mean with position weights e^(L - t'), slots
    // relabeled 1..n oldest to newest. Throws NoDataError when empty.
    double smoothed() const;

private:
    struct Sample {
        int64_t slot;
        double speed;
        uint32_t count; // samples merged into this slot
    };
    uint32_t capacity_;
    std::deque<Sample> samples_;
};

// Who holds what, from the requesting client's point of view.
struct ContentIndex {
    std::set<PeerId> peers;
    std::map<PeerId, std::set<std::string>> images_of;       // peer -> image ids
    std::map<std::string, std::set<Digest>> layers_of;       // image id -> layer digests

    bool empty() const;
};

struct ScoringWeights {
    double alpha = 0.5;
    double beta = 0.3;
    double gamma = 0.2;
    double lambda = 1.0;
    uint32_t window_len = 16;
    double tau0 = 20.0;

    // Throws std::invalid_argument when the invariants fail.
    void validate() const;
};

struct PeerScore {
    PeerId peer;
    double net = 0;
    double pop = 0;
    double cst = 0;
    double utility = 0;
};

// Per-client speed bookkeeping: one window per peer plus the global window
// of all-peer means.
class SpeedState {
public:
    explicit SpeedState(uint32_t window_len) : window_len_(window_len) {}

    // Appends to the peer's window (auto-registering unknown peers), then
    // refreshes the global window with the mean of all peers' smoothed
    // speeds at this slot.
    void record_speed(const PeerId& peer, double speed, int64_t slot);

    bool has_samples(const PeerId& peer) const;
    const SpeedWindow* window(const PeerId& peer) const;
    const SpeedWindow& global_window() const { return global_; }

    // Smoothed speed of one peer; throws NoDataError if never sampled.
    double smoothed_speed(const PeerId& peer) const;
    // Smoothed global average; throws NoDataError when nothing recorded.
    double global_average() const;

private:
    uint32_t window_len_;
    std::map<PeerId, SpeedWindow> windows_;
    SpeedWindow global_{16};
    bool global_sized_ = false;
};

// Fraction of (peer, image) pairs whose image contains the layer.
// Throws NoDataError on an empty index.
double layer_popularity(const Digest& layer, const ContentIndex& index);

// 100 * (1 - mean over the peer's (image, layer) pairs of e^(-lambda * rho)).
// Throws NoDataError when the peer holds nothing.
double popularity_score(const PeerId& peer, const ContentIndex& index, double lambda);

// Same-LAN peers score 100. Remote peers score s_p - s_bar rescaled to
// [0,100] by min-max over the remote candidates' raw values; a singleton or
// all-equal set maps to 50. Remote peers with no speed history throw
// NoDataError. Results returned per candidate in input order.
std::vector<double> network_scores(const std::vector<PeerId>& candidates,
                                   const LanId& client_lan, const SpeedState& speeds);

double utility(const ScoringWeights& w, double net, double pop, double cst);

// Softmax probabilities at temperature tau with max-subtraction.
std::vector<double> softmax_probs(const std::vector<double>& utilities, double tau);

struct Candidate {
    PeerId peer;
    double utility = 0;
};

// Samples one candidate with probability exp(U/tau_t)/sum, tau_t = tau0/sqrt(t).
// Throws NoCandidatesError on an empty list.
const Candidate& select_peer(const std::vector<Candidate>& candidates, int64_t t,
                             double tau0, Rng& rng);

// Softmax-samples `k` distinct candidates (without replacement) at tau_t.
std::vector<size_t> sample_subset(const std::vector<Candidate>& candidates, size_t k,
                                  int64_t t, double tau0, Rng& rng);

class RegretLedger {
public:
    struct Round {
        int64_t t;
        double chosen;
        double best;
        double cumulative;
    };

    // Appends best - chosen; throws std::invalid_argument when best < chosen.
    void record_round(double chosen_u, double best_u);

    double cumulative() const { return cumulative_; }
    const std::vector<Round>& rounds() const { return rounds_; }
    std::string to_csv() const; // header: t,chosen_u,best_u,cumulative

private:
    std::vector<Round> rounds_;
    double cumulative_ = 0;
};

} // namespace peersync
