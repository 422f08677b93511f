#pragma once

#include "peersync/cache.hpp"
#include "peersync/engine.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace peersync::sim {

// One link profile, optionally time-varying through its schedule.
struct ScheduleEntry {
    double at_s = 0;
    double mbps = 0;
    double latency_ms = 0;
    double loss = 0;
};

struct LinkSpec {
    double mbps = 1000;
    double latency_ms = 0.5;
    double loss = 0;
    std::vector<ScheduleEntry> schedule;

    double bits_per_s() const { return mbps * 1e6; }
    double latency_s() const { return latency_ms / 1e3; }
};

struct LanSpec {
    std::string id;
    int nodes = 0;
    LinkSpec intra;
};

struct ImageSpec {
    std::string name;
    std::vector<double> layers_mib;

    double total_mib() const;
};

struct SeedSpec {
    std::string image;
    std::vector<std::string> nodes; // "lan:index"
};

struct WorkloadSpec {
    double a = 0;
    double b = 0;
    double horizon_s = 0;
};

struct ExplicitRequest {
    double at_s = 0;
    std::string image;
    std::string node;
};

struct ChurnEvent {
    double at_s = 0;
    std::string node;
    bool leave = true; // false = join
};

struct CacheSpec {
    double capacity_mib = 0; // 0 = unlimited, cleaner disabled
    std::string planner = "tiered"; // tiered | lru
    double free_threshold = 0.10;
    double target_free = 0.20;
    double refresh_interval_s = 30.0;
};

// A fully validated experiment description. `request_mode` controls what a
// request means at a node that already holds the image: "fresh" re-downloads
// from scratch (benchmark semantics), "cached" serves locally.
struct Scenario {
    std::string name;
    std::string description;
    double time_limit_s = 1200;
    std::string registry_lan;
    std::string request_mode = "fresh";
    std::vector<LanSpec> lans;
    LinkSpec transit;
    std::map<std::string, LinkSpec> uplink_overrides;
    std::vector<ImageSpec> catalog;
    std::vector<SeedSpec> seeds;
    std::optional<WorkloadSpec> workload;
    std::vector<ExplicitRequest> requests;
    std::vector<ChurnEvent> churn;
    std::vector<std::string> policies;
    CacheSpec cache;
    EngineConfig engine;

    int total_worker_nodes() const;
    const LanSpec* find_lan(const std::string& id) const;
    const ImageSpec* find_image(const std::string& name) const;
    const LinkSpec& uplink_for(const std::string& lan_id) const;
    CapacityPolicy cache_policy() const;

    // The scenario with every default filled in, for the run log.
    std::string resolved_json() const;
};

// Parses and validates a scenario file. Throws ParseError with the file,
// line (for syntax errors), or JSON path (for semantic errors).
Scenario load_scenario(const std::string& path);
Scenario parse_scenario(const std::string& text, const std::string& origin);

} // namespace peersync::sim
