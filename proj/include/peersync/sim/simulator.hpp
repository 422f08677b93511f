#pragma once

#include "peersync/cache.hpp"
#include "peersync/sim/metrics.hpp"
#include "peersync/sim/scenario.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace peersync::sim {

// One policy run over one seed. The CSV members are complete file bodies.
struct SimResult {
    MetricsReport report;
    std::vector<EvictionEvent> evictions;
    std::string regret_csv;  // peer-selection regret rows (peersync runs)
    std::string layers_csv;  // one row per completed layer transfer
    uint64_t integrity_checks = 0; // digest verifications of completed layers
};

// Runs the scenario under `policy` ("peersync" | "baseline" | "naive").
// Identical (scenario, policy, seed) triples produce identical results.
SimResult run_simulation(const Scenario& scenario, const std::string& policy, uint64_t seed);

// Cross-seed aggregate of one policy's runs.
struct PolicyAggregate {
    std::string policy;
    size_t requests = 0;
    size_t timeouts = 0;
    double mean_s = 0;
    double p90_s = 0;
    double p99_s = 0;
    double cross_max_gbps = 0; // max over seeds of per-run maxima
    double cross_avg_gbps = 0; // mean over seeds of per-run averages
    double vs_baseline_pct = 0;
};

// Groups runs by policy, pools requests, and normalizes means to the
// "baseline" policy when present.
std::vector<PolicyAggregate> aggregate_comparison(const std::vector<SimResult>& runs);
std::string aggregate_csv(const std::vector<PolicyAggregate>& rows);

} // namespace peersync::sim
