#include "peersync/sim/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace peersync::sim {

void TrafficSeries::add(double t0, double t1, double bytes) {
    if (bytes <= 0 || t1 <= t0) return;
    const size_t last = static_cast<size_t>(t1 / window_s_) + 1;
    if (bytes_.size() < last) bytes_.resize(last, 0.0);
    const double span = t1 - t0;
    for (size_t w = static_cast<size_t>(t0 / window_s_); w < last; ++w) {
        const double lo = std::max(t0, static_cast<double>(w) * window_s_);
        const double hi = std::min(t1, static_cast<double>(w + 1) * window_s_);
        if (hi > lo) bytes_[w] += bytes * (hi - lo) / span;
    }
}

double TrafficSeries::total_bytes() const {
    return std::accumulate(bytes_.begin(), bytes_.end(), 0.0);
}

double TrafficSeries::max_window_gbps() const {
    double peak = 0;
    for (double b : bytes_) peak = std::max(peak, b);
    return peak * 8 / window_s_ / 1e9;
}

double TrafficSeries::average_gbps(double horizon_s) const {
    if (horizon_s <= 0) return 0;
    return total_bytes() * 8 / horizon_s / 1e9;
}

double percentile_nearest_rank(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("percentile of empty set");
    if (!(p > 0) || p > 100) throw std::invalid_argument("percentile must be in (0,100]");
    std::sort(values.begin(), values.end());
    const size_t rank = static_cast<size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
    return values[rank - 1];
}

size_t MetricsReport::completed_count() const {
    size_t n = 0;
    for (const auto& r : requests) n += r.completed ? 1 : 0;
    return n;
}

std::vector<double> MetricsReport::durations() const {
    std::vector<double> out;
    out.reserve(requests.size());
    for (const auto& r : requests) out.push_back(r.completed ? r.duration_s : time_limit_s);
    return out;
}

double MetricsReport::mean_duration_s() const {
    const auto d = durations();
    if (d.empty()) return 0;
    return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

double MetricsReport::p90_s() const { return percentile_nearest_rank(durations(), 90); }
double MetricsReport::p99_s() const { return percentile_nearest_rank(durations(), 99); }

std::string MetricsReport::per_request_csv() const {
    std::string out =
        "request_id,image,node,arrival_s,duration_s,completed,local_bytes,cross_bytes,"
        "registry_bytes,wasted_bytes,strategy\n";
    for (const auto& r : requests)
        out += fmt::format("{},{},{},{:.6f},{:.6f},{},{},{},{},{},{}\n", r.id, r.image, r.node,
                           r.arrival_s, r.completed ? r.duration_s : time_limit_s,
                           r.completed ? 1 : 0, r.local_bytes, r.cross_bytes, r.registry_bytes,
                           r.wasted_bytes, r.strategy);
    return out;
}

std::string MetricsReport::summary_csv() const {
    std::string out =
        "scenario,policy,seed,requests,completed,timeouts,mean_s,p90_s,p99_s,"
        "cross_total_bytes,cross_max_gbps,cross_avg_gbps,makespan_s\n";
    const double horizon = makespan_s > 0 ? makespan_s : 1.0;
    if (requests.empty()) return out;
    out += fmt::format("{},{},{},{},{},{},{:.6f},{:.6f},{:.6f},{:.0f},{:.6f},{:.6f},{:.6f}\n",
                       scenario, policy, seed, requests.size(), completed_count(), timeout_count(),
                       mean_duration_s(), p90_s(), p99_s(), cross_traffic.total_bytes(),
                       cross_traffic.max_window_gbps(), cross_traffic.average_gbps(horizon),
                       makespan_s);
    return out;
}

std::string comparison_csv(const std::vector<MetricsReport>& per_policy) {
    double baseline_mean = 0;
    for (const auto& report : per_policy)
        if (report.policy == "baseline") baseline_mean = report.mean_duration_s();
    std::string out =
        "policy,mean_s,vs_baseline_pct,p90_s,p99_s,timeouts,cross_max_gbps,cross_avg_gbps\n";
    for (const auto& report : per_policy) {
        const double mean = report.mean_duration_s();
        const double pct = baseline_mean > 0 ? 100.0 * mean / baseline_mean : 0.0;
        const double horizon = report.makespan_s > 0 ? report.makespan_s : 1.0;
        out += fmt::format("{},{:.6f},{:.2f},{:.6f},{:.6f},{},{:.6f},{:.6f}\n", report.policy,
                           mean, pct, report.requests.empty() ? 0.0 : report.p90_s(),
                           report.requests.empty() ? 0.0 : report.p99_s(),
                           report.timeout_count(), report.cross_traffic.max_window_gbps(),
                           report.cross_traffic.average_gbps(horizon));
    }
    return out;
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
    std::string out = "A,policy,seed,mean_s,timeout_fraction\n";
    for (const auto& pt : points)
        out += fmt::format("{:.6f},{},{},{:.6f},{:.6f}\n", pt.a, pt.policy, pt.seed,
                           pt.mean_duration_s, pt.timeout_fraction);
    return out;
}

} // namespace peersync::sim
