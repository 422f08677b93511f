#include "peersync/sim/workload.hpp"

#include "peersync/rng.hpp"

#include <algorithm>
#include <cmath>

namespace peersync::sim {

std::vector<double> generate_arrivals(const ImageSpec& image, const WorkloadSpec& workload,
                                      uint64_t seed) {
    Rng rng(stream_seed(seed, "arrivals:" + image.name));
    constexpr double kFloor = 0.001;
    const double a = workload.a, b = workload.b;
    const double hi = std::max(kFloor, a * std::exp(b / image.total_mib()));
    const double rate = hi <= kFloor ? kFloor : rng.uniform(kFloor, hi);
    std::vector<double> instants;
    double t = rng.exponential(rate);
    while (t < workload.horizon_s) {
        instants.push_back(t);
        t += rng.exponential(rate);
    }
    return instants;
}

std::vector<GeneratedRequest> build_request_schedule(const Scenario& scenario, uint64_t seed) {
    std::vector<GeneratedRequest> schedule;
    for (const auto& req : scenario.requests)
        schedule.push_back({req.at_s, req.image, req.node});
    if (scenario.workload) {
        std::vector<std::string> workers;
        for (const auto& lan : scenario.lans)
            for (int i = 0; i < lan.nodes; ++i) workers.push_back(lan.id + ":" + std::to_string(i));
        for (const auto& image : scenario.catalog) {
            Rng node_rng(stream_seed(seed, "request-nodes:" + image.name));
            for (double at : generate_arrivals(image, *scenario.workload, seed)) {
                const auto& node = workers[node_rng.next_below(workers.size())];
                schedule.push_back({at, image.name, node});
            }
        }
    }
    std::stable_sort(schedule.begin(), schedule.end(),
                     [](const GeneratedRequest& a, const GeneratedRequest& b) {
                         return a.at_s < b.at_s;
                     });
    return schedule;
}

} // namespace peersync::sim
