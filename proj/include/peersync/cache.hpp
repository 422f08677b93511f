#pragma once

#include "peersync/digest.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace peersync {

// One cached layer plus the replica picture used to price a miss.
struct CacheEntry {
    Digest content;
    uint64_t size_bytes = 0;
    double last_access = 0;
    uint32_t local_replicas = 0;    // other copies within this LAN
    uint32_t external_replicas = 0; // copies in other LANs
    bool pinned = false;
    double replicas_refreshed_at = 0; // when the replica counts were last confirmed
};

struct CapacityPolicy {
    uint64_t total_bytes = 0;
    double free_threshold_fraction = 0.10;
    double target_free_fraction = 0.20;
    // How old replica information may be before an entry is treated as a
    // sole copy (never under-protect).
    double replica_refresh_interval_s = 30.0;

    void validate() const; // throws std::invalid_argument
};

// True iff free space has dropped strictly below the threshold.
bool needs_cleaning(const CapacityPolicy& policy, uint64_t used_bytes);

// Miss-cost tier: 1 = replica in this LAN (cheap miss), 2 = only external
// replicas, 3 = sole known copy. Stale replica data degrades to 3.
int eviction_tier(const CacheEntry& entry, const CapacityPolicy& policy, double now);

struct EvictionPlan {
    std::vector<CacheEntry> victims; // in eviction order
    uint64_t reclaimed_bytes = 0;
    bool shortfall = false; // even evicting everything unpinned missed the target
};

// Tiered planner: tier 1 before 2 before 3; within tier 1 oldest access
// first then largest size, within tier 2 most external replicas first then
// oldest access, within tier 3 oldest access. Stops at the first point the
// free-space target is met.
EvictionPlan plan_eviction(const std::vector<CacheEntry>& entries, const CapacityPolicy& policy,
                           double now);

// Plain least-recently-used baseline with the same stopping rule.
EvictionPlan plan_eviction_lru(const std::vector<CacheEntry>& entries, const CapacityPolicy& policy,
                               double now);

struct EvictionEvent {
    double time = 0;
    Digest digest;
    uint64_t size_bytes = 0;
    int tier = 0;
    std::string reason;
};

std::string eviction_events_csv(const std::vector<EvictionEvent>& events);

} // namespace peersync
