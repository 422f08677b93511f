#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <vector>

namespace peersync::sim {

// Flow-level network model: directed links with a capacity pool, flows that
// traverse a path of links, and max-min fair sharing among concurrent flows.
// Loss degrades a flow's attainable rate through the standard loss-penalized
// throughput cap (MSS * C / (rtt * sqrt(loss))) instead of per-packet events;
// latency delays a flow's first byte by the path's one-way latency.
//
// The caller owns time: it calls advance_to(now) before changing anything,
// then queries projected completions to schedule its next event.
class FlowNet {
public:
    static constexpr double kInfinity = std::numeric_limits<double>::infinity();

    // bytes transferred over an accounted link during [t0, t1)
    using ByteAccountant = std::function<void(int link, double t0, double t1, double bytes)>;

    int add_link(double bits_per_s, double latency_s, double loss);
    void set_link(int link, double bits_per_s, double latency_s, double loss);
    double link_bits_per_s(int link) const;

    // Registers the callback receiving per-link byte accounting; only links
    // marked accounted report.
    void set_accountant(ByteAccountant fn) { accountant_ = std::move(fn); }
    void account_link(int link) { links_.at(static_cast<size_t>(link)).accounted = true; }

    // Starts a flow of `bytes` across `path` at `now`. The first byte moves
    // after the path's summed one-way latency.
    int start_flow(const std::vector<int>& path, double bytes, double now);
    void cancel_flow(int flow, double now);
    bool flow_active(int flow) const { return flows_.count(flow) != 0; }

    // Moves transferred bytes forward to `now` at current rates (reporting
    // accounted links), then recomputes the max-min fair allocation.
    void advance_to(double now);

    // Projected completion instant of every active flow at current rates
    // (+inf when the flow is rate-starved). Valid until the next mutation.
    std::vector<std::pair<int, double>> projected_completions() const;

    double flow_remaining(int flow) const;
    size_t active_flows() const { return flows_.size(); }
    double flow_rate(int flow) const; // bits/s, post-allocation

private:
    struct Link {
        double bits_per_s = 0;
        double latency_s = 0;
        double loss = 0;
        bool accounted = false;
    };
    struct Flow {
        std::vector<int> path;
        double remaining_bytes = 0;
        double ready_at = 0;      // start + path latency
        double rate_bits_s = 0;   // current allocation
        double loss_cap_bits_s = kInfinity;
    };

    void reallocate();

    std::vector<Link> links_;
    std::map<int, Flow> flows_;
    int next_flow_id_ = 1;
    double clock_ = 0;
    ByteAccountant accountant_;
};

// Loss-penalized throughput ceiling in bits/s for a path with round-trip time
// `rtt_s` and end-to-end loss probability `loss` (MSS 1460 bytes, C=sqrt(3/2)).
double loss_capped_rate(double rtt_s, double loss);

} // namespace peersync::sim
