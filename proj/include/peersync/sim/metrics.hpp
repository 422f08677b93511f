#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace peersync::sim {

struct RequestRecord {
    uint64_t id = 0;
    std::string image;
    std::string node;
    double arrival_s = 0;
    double duration_s = 0;
    bool completed = false; // false = recorded at the time limit
    uint64_t local_bytes = 0;
    uint64_t cross_bytes = 0;
    uint64_t registry_bytes = 0;
    uint64_t wasted_bytes = 0;
    std::string strategy;
};

// Bytes binned into fixed windows, for the cross-network traffic series.
class TrafficSeries {
public:
    explicit TrafficSeries(double window_s = 1.0) : window_s_(window_s) {}

    // Spreads `bytes` transferred during [t0, t1) across the windows it
    // overlaps, proportionally.
    void add(double t0, double t1, double bytes);

    double total_bytes() const;
    double max_window_gbps() const;
    double average_gbps(double horizon_s) const;
    double window_s() const { return window_s_; }
    const std::vector<double>& windows() const { return bytes_; }

private:
    double window_s_;
    std::vector<double> bytes_;
};

// Nearest-rank percentile: the ceil(p/100 * n)-th smallest value.
// Throws std::invalid_argument on an empty set or p outside (0, 100].
double percentile_nearest_rank(std::vector<double> values, double p);

struct MetricsReport {
    std::string scenario;
    std::string policy;
    uint64_t seed = 0;
    double time_limit_s = 1200;
    std::vector<RequestRecord> requests;
    TrafficSeries cross_traffic{1.0};
    double makespan_s = 0; // instant the last request resolved

    size_t completed_count() const;
    size_t timeout_count() const { return requests.size() - completed_count(); }
    // Durations with timeouts recorded at the time-limit value.
    std::vector<double> durations() const;
    double mean_duration_s() const;
    double p90_s() const;
    double p99_s() const;

    std::string per_request_csv() const;
    std::string summary_csv() const;
};

// Per-policy comparison normalized to the baseline policy's mean (= 100%).
std::string comparison_csv(const std::vector<MetricsReport>& per_policy);

// One (x = A, y = mean duration) row per run, for rate sweeps.
struct SweepPoint {
    double a = 0;
    std::string policy;
    uint64_t seed = 0;
    double mean_duration_s = 0;
    double timeout_fraction = 0;
};
std::string sweep_csv(const std::vector<SweepPoint>& points);

} // namespace peersync::sim
