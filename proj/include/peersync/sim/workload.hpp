#pragma once

#include "peersync/sim/scenario.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace peersync::sim {

// Per-image request stream: a Poisson process whose rate is drawn once per
// image, uniformly from [0.001, max(0.001, A * e^(B / size_mib))] requests
// per second, then exponential inter-arrival gaps until the horizon.
std::vector<double> generate_arrivals(const ImageSpec& image, const WorkloadSpec& workload,
                                      uint64_t seed);

struct GeneratedRequest {
    double at_s = 0;
    std::string image;
    std::string node;
};

// Arrivals for the whole catalog with requesting nodes drawn uniformly over
// the workers, merged with any explicit requests, in time order.
std::vector<GeneratedRequest> build_request_schedule(const Scenario& scenario, uint64_t seed);

} // namespace peersync::sim
