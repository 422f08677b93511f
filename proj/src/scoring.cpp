#include "peersync/scoring.hpp"

#include "peersync/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace peersync {

void SpeedWindow::record(int64_t slot, double speed) {
    if (speed < 0)
        throw std::invalid_argument("speed must be non-negative");
    if (!samples_.empty() && slot < samples_.back().slot)
        throw std::invalid_argument("slots must be non-decreasing");

    if (!samples_.empty() && samples_.back().slot == slot) {
        auto& s = samples_.back();
        s.count += 1;
        s.speed += (speed - s.speed) / s.count;
        return;
    }
    samples_.push_back({slot, speed, 1});
    while (samples_.size() > capacity_) samples_.pop_front();
}

void SpeedWindow::set_latest(int64_t slot, double value) {
    if (value < 0)
        throw std::invalid_argument("speed must be non-negative");
    if (!samples_.empty() && slot < samples_.back().slot)
        throw std::invalid_argument("slots must be non-decreasing");

    if (!samples_.empty() && samples_.back().slot == slot) {
        samples_.back().speed = value;
        return;
    }
    samples_.push_back({slot, value, 1});
    while (samples_.size() > capacity_) samples_.pop_front();
}

double SpeedWindow::smoothed() const {
    if (samples_.empty())
        throw NoDataError("speed window is empty");

    // Position weights e^(L - t') with t' = 1..n oldest to newest. Shifting
    // the exponent by a constant cancels in the ratio, so weights are
    // computed relative to the newest sample to stay in range.
    const size_t n = samples_.size();
    double num = 0, den = 0;
    for (size_t i = 0; i < n; ++i) {
        const double w = std::exp(static_cast<double>(n - 1 - i));
        num += samples_[i].speed * w;
        den += w;
    }
    return num / den;
}

bool ContentIndex::empty() const {
    for (const auto& [peer, images] : images_of)
        if (!images.empty()) return false;
    return true;
}

void ScoringWeights::validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0)
        throw std::invalid_argument("score weights must be non-negative");
    if (alpha + beta + gamma <= 0)
        throw std::invalid_argument("at least one score weight must be positive");
    if (lambda <= 0)
        throw std::invalid_argument("lambda must be positive");
    if (tau0 <= 0)
        throw std::invalid_argument("tau0 must be positive");
    if (window_len == 0)
        throw std::invalid_argument("window length must be positive");
}

void SpeedState::record_speed(const PeerId& peer, double speed, int64_t slot) {
    if (!global_sized_) {
        global_ = SpeedWindow(window_len_);
        global_sized_ = true;
    }
    auto [it, inserted] = windows_.try_emplace(peer, SpeedWindow(window_len_));
    it->second.record(slot, speed);

    double sum = 0;
    size_t n = 0;
    for (const auto& [p, w] : windows_) {
        if (w.empty()) continue;
        sum += w.smoothed();
        ++n;
    }
    global_.set_latest(slot, sum / static_cast<double>(n));
}

bool SpeedState::has_samples(const PeerId& peer) const {
    auto it = windows_.find(peer);
    return it != windows_.end() && !it->second.empty();
}

const SpeedWindow* SpeedState::window(const PeerId& peer) const {
    auto it = windows_.find(peer);
    return it == windows_.end() ? nullptr : &it->second;
}

double SpeedState::smoothed_speed(const PeerId& peer) const {
    auto it = windows_.find(peer);
    if (it == windows_.end())
        throw NoDataError("no speed samples for peer " + peer.id);
    return it->second.smoothed();
}

double SpeedState::global_average() const {
    return global_.smoothed();
}

double layer_popularity(const Digest& layer, const ContentIndex& index) {
    uint64_t holding = 0, total = 0;
    for (const auto& [peer, images] : index.images_of) {
        for (const auto& image : images) {
            auto it = index.layers_of.find(image);
            if (it == index.layers_of.end()) continue;
            ++total;
            if (it->second.count(layer)) ++holding;
        }
    }
    if (total == 0)
        throw NoDataError("content index is empty");
    return static_cast<double>(holding) / static_cast<double>(total);
}

double popularity_score(const PeerId& peer, const ContentIndex& index, double lambda) {
    auto pit = index.images_of.find(peer);
    if (pit == index.images_of.end() || pit->second.empty())
        throw NoDataError("peer holds no content: " + peer.id);

    double sum = 0;
    uint64_t pairs = 0;
    for (const auto& image : pit->second) {
        auto lit = index.layers_of.find(image);
        if (lit == index.layers_of.end()) continue;
        for (const auto& layer : lit->second) {
            sum += std::exp(-lambda * layer_popularity(layer, index));
            ++pairs;
        }
    }
    if (pairs == 0)
        throw NoDataError("peer holds no layers: " + peer.id);
    return 100.0 * (1.0 - sum / static_cast<double>(pairs));
}

std::vector<double> network_scores(const std::vector<PeerId>& candidates,
                                   const LanId& client_lan, const SpeedState& speeds) {
    std::vector<double> out(candidates.size(), 0);
    std::vector<size_t> remote;
    std::vector<double> raw;

    double global = 0;
    bool global_known = false;
    try {
        global = speeds.global_average();
        global_known = true;
    } catch (const NoDataError&) {
    }

    for (size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i].lan_id == client_lan) {
            out[i] = 100.0;
            continue;
        }
        if (!speeds.has_samples(candidates[i]) || !global_known)
            throw NoDataError("no speed samples for remote peer " + candidates[i].id);
        remote.push_back(i);
        raw.push_back(speeds.smoothed_speed(candidates[i]) - global);
    }

    if (remote.empty()) return out;

    const double lo = *std::min_element(raw.begin(), raw.end());
    const double hi = *std::max_element(raw.begin(), raw.end());
    for (size_t j = 0; j < remote.size(); ++j) {
        out[remote[j]] = (hi - lo) <= 0 ? 50.0 : 100.0 * (raw[j] - lo) / (hi - lo);
    }
    return out;
}

double utility(const ScoringWeights& w, double net, double pop, double cst) {
    return w.alpha * net + w.beta * pop + w.gamma * cst;
}

std::vector<double> softmax_probs(const std::vector<double>& utilities, double tau) {
    if (utilities.empty())
        throw NoCandidatesError("softmax over empty utility set");
    if (tau <= 0)
        throw std::invalid_argument("temperature must be positive");

    const double u_max = *std::max_element(utilities.begin(), utilities.end());
    std::vector<double> probs(utilities.size());
    double sum = 0;
    for (size_t i = 0; i < utilities.size(); ++i) {
        probs[i] = std::exp((utilities[i] - u_max) / tau);
        sum += probs[i];
    }
    for (auto& p : probs) p /= sum;
    return probs;
}

namespace {

size_t sample_index(const std::vector<double>& probs, Rng& rng) {
    const double u = rng.next_double();
    double acc = 0;
    for (size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

} // namespace

const Candidate& select_peer(const std::vector<Candidate>& candidates, int64_t t,
                             double tau0, Rng& rng) {
    if (candidates.empty())
        throw NoCandidatesError("no candidates to select from");
    if (t < 1)
        throw std::invalid_argument("selection round must be >= 1");

    const double tau = tau0 / std::sqrt(static_cast<double>(t));
    std::vector<double> utilities;
    utilities.reserve(candidates.size());
    for (const auto& c : candidates) utilities.push_back(c.utility);
    return candidates[sample_index(softmax_probs(utilities, tau), rng)];
}

std::vector<size_t> sample_subset(const std::vector<Candidate>& candidates, size_t k,
                                  int64_t t, double tau0, Rng& rng) {
    if (candidates.empty())
        throw NoCandidatesError("no candidates to sample from");
    if (t < 1)
        throw std::invalid_argument("selection round must be >= 1");

    k = std::min(k, candidates.size());
    const double tau = tau0 / std::sqrt(static_cast<double>(t));

    std::vector<size_t> alive(candidates.size());
    for (size_t i = 0; i < alive.size(); ++i) alive[i] = i;
    std::vector<size_t> picked;
    picked.reserve(k);

    while (picked.size() < k) {
        std::vector<double> utilities;
        utilities.reserve(alive.size());
        for (size_t idx : alive) utilities.push_back(candidates[idx].utility);
        const size_t j = sample_index(softmax_probs(utilities, tau), rng);
        picked.push_back(alive[j]);
        alive.erase(alive.begin() + static_cast<ptrdiff_t>(j));
    }
    return picked;
}

void RegretLedger::record_round(double chosen_u, double best_u) {
    if (best_u < chosen_u)
        throw std::invalid_argument("best utility below chosen utility");
    cumulative_ += best_u - chosen_u;
    rounds_.push_back({static_cast<int64_t>(rounds_.size()) + 1, chosen_u, best_u, cumulative_});
}

std::string RegretLedger::to_csv() const {
    std::ostringstream os;
    os << "t,chosen_u,best_u,cumulative\n";
    os.precision(9);
    for (const auto& r : rounds_)
        os << r.t << ',' << r.chosen << ',' << r.best << ',' << r.cumulative << '\n';
    return os.str();
}

} // namespace peersync
