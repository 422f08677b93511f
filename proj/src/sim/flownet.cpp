#include "peersync/sim/flownet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace peersync::sim {

double loss_capped_rate(double rtt_s, double loss) {
    if (loss <= 0) return FlowNet::kInfinity;
    if (rtt_s <= 0) rtt_s = 1e-4;
    constexpr double kMssBits = 1460.0 * 8;
    const double c = std::sqrt(1.5);
    return c * kMssBits / (rtt_s * std::sqrt(loss));
}

int FlowNet::add_link(double bits_per_s, double latency_s, double loss) {
    if (bits_per_s <= 0) throw std::invalid_argument("link bandwidth must be positive");
    if (loss < 0 || loss > 1) throw std::invalid_argument("loss must be in [0,1]");
    links_.push_back(Link{bits_per_s, latency_s, loss, false});
    return static_cast<int>(links_.size()) - 1;
}

void FlowNet::set_link(int link, double bits_per_s, double latency_s, double loss) {
    if (bits_per_s <= 0) throw std::invalid_argument("link bandwidth must be positive");
    if (loss < 0 || loss > 1) throw std::invalid_argument("loss must be in [0,1]");
    auto& l = links_.at(static_cast<size_t>(link));
    l.bits_per_s = bits_per_s;
    l.latency_s = latency_s;
    l.loss = loss;
    // Refresh loss caps: a profile change affects every flow crossing it.
    for (auto& [id, flow] : flows_) {
        (void)id;
        double rtt = 0, joint_pass = 1;
        for (int li : flow.path) {
            rtt += 2 * links_[static_cast<size_t>(li)].latency_s;
            joint_pass *= 1 - links_[static_cast<size_t>(li)].loss;
        }
        flow.loss_cap_bits_s = loss_capped_rate(rtt, 1 - joint_pass);
    }
    reallocate();
}

double FlowNet::link_bits_per_s(int link) const {
    return links_.at(static_cast<size_t>(link)).bits_per_s;
}

int FlowNet::start_flow(const std::vector<int>& path, double bytes, double now) {
    if (path.empty()) throw std::invalid_argument("flow path is empty");
    Flow flow;
    flow.path = path;
    flow.remaining_bytes = bytes;
    double latency = 0, joint_pass = 1;
    for (int li : path) {
        const auto& l = links_.at(static_cast<size_t>(li));
        latency += l.latency_s;
        joint_pass *= 1 - l.loss;
    }
    flow.ready_at = now + latency;
    flow.loss_cap_bits_s = loss_capped_rate(2 * latency, 1 - joint_pass);
    const int id = next_flow_id_++;
    flows_.emplace(id, std::move(flow));
    reallocate();
    return id;
}

void FlowNet::cancel_flow(int flow, double now) {
    (void)now;
    flows_.erase(flow);
    reallocate();
}

void FlowNet::advance_to(double now) {
    const double dt = now - clock_;
    if (dt > 0) {
        // Per-link transferred bytes for the accounted set.
        std::map<int, double> link_bytes;
        for (auto& [id, flow] : flows_) {
            (void)id;
            if (flow.rate_bits_s <= 0) continue;
            const double active_from = std::max(clock_, flow.ready_at);
            const double span = now - active_from;
            if (span <= 0) continue;
            double moved = flow.rate_bits_s / 8 * span;
            moved = std::min(moved, flow.remaining_bytes);
            flow.remaining_bytes -= moved;
            if (accountant_ && moved > 0)
                for (int li : flow.path)
                    if (links_[static_cast<size_t>(li)].accounted) link_bytes[li] += moved;
        }
        if (accountant_)
            for (const auto& [li, bytes] : link_bytes) accountant_(li, clock_, now, bytes);
    }
    clock_ = std::max(clock_, now);
    // Zero-width advances change nothing: flows and links only mutate through
    // start/cancel/set_link, each of which reallocates on its own.
    if (dt > 0) reallocate();
}

void FlowNet::reallocate() {
    // Max-min fair water-filling with per-flow rate caps. Flows not yet past
    // their latency ramp still occupy capacity (they are about to), which
    // keeps the allocation conservative.
    std::vector<double> cap(links_.size());
    for (size_t i = 0; i < links_.size(); ++i) cap[i] = links_[i].bits_per_s;
    std::vector<int> unfixed;
    for (auto& [id, flow] : flows_) {
        flow.rate_bits_s = 0;
        if (flow.remaining_bytes > 0) unfixed.push_back(id);
    }
    std::vector<int> load(links_.size(), 0);
    for (int id : unfixed)
        for (int li : flows_[id].path) ++load[static_cast<size_t>(li)];

    while (!unfixed.empty()) {
        // Candidate rate per flow: its cap or its tightest link's fair share.
        double lowest = kInfinity;
        for (int id : unfixed) {
            const Flow& flow = flows_[id];
            double r = flow.loss_cap_bits_s;
            for (int li : flow.path)
                r = std::min(r, cap[static_cast<size_t>(li)] / load[static_cast<size_t>(li)]);
            lowest = std::min(lowest, r);
        }
        if (!std::isfinite(lowest)) {
            for (int id : unfixed) flows_[id].rate_bits_s = kInfinity;
            break;
        }
        std::vector<int> still;
        for (int id : unfixed) {
            Flow& flow = flows_[id];
            double r = flow.loss_cap_bits_s;
            for (int li : flow.path)
                r = std::min(r, cap[static_cast<size_t>(li)] / load[static_cast<size_t>(li)]);
            if (r <= lowest * (1 + 1e-12)) {
                flow.rate_bits_s = lowest;
                for (int li : flow.path) {
                    cap[static_cast<size_t>(li)] -= lowest;
                    if (cap[static_cast<size_t>(li)] < 0) cap[static_cast<size_t>(li)] = 0;
                    --load[static_cast<size_t>(li)];
                }
            } else {
                still.push_back(id);
            }
        }
        if (still.size() == unfixed.size()) break; // numeric safety: no progress
        unfixed.swap(still);
    }
}

std::vector<std::pair<int, double>> FlowNet::projected_completions() const {
    std::vector<std::pair<int, double>> out;
    out.reserve(flows_.size());
    for (const auto& [id, flow] : flows_) {
        if (flow.remaining_bytes <= 0) {
            out.emplace_back(id, std::max(clock_, flow.ready_at));
            continue;
        }
        if (flow.rate_bits_s <= 0) {
            out.emplace_back(id, kInfinity);
            continue;
        }
        const double start = std::max(clock_, flow.ready_at);
        out.emplace_back(id, start + flow.remaining_bytes * 8 / flow.rate_bits_s);
    }
    return out;
}

double FlowNet::flow_remaining(int flow) const {
    auto it = flows_.find(flow);
    if (it == flows_.end()) throw std::invalid_argument("unknown flow");
    return it->second.remaining_bytes;
}

double FlowNet::flow_rate(int flow) const {
    auto it = flows_.find(flow);
    if (it == flows_.end()) throw std::invalid_argument("unknown flow");
    return it->second.rate_bits_s;
}

} // namespace peersync::sim
