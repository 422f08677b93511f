#include "peersync/cache.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace peersync {

void CapacityPolicy::validate() const {
    if (total_bytes == 0)
        throw std::invalid_argument("cache capacity must be positive");
    if (!(free_threshold_fraction > 0) || !(free_threshold_fraction <= target_free_fraction) ||
        !(target_free_fraction < 1))
        throw std::invalid_argument("need 0 < free_threshold <= target_free < 1");
    if (replica_refresh_interval_s <= 0)
        throw std::invalid_argument("replica refresh interval must be positive");
}

bool needs_cleaning(const CapacityPolicy& policy, uint64_t used_bytes) {
    if (used_bytes > policy.total_bytes)
        throw std::invalid_argument("used bytes exceed capacity");
    const double free_fraction =
        static_cast<double>(policy.total_bytes - used_bytes) / static_cast<double>(policy.total_bytes);
    return free_fraction < policy.free_threshold_fraction;
}

int eviction_tier(const CacheEntry& entry, const CapacityPolicy& policy, double now) {
    if (now - entry.replicas_refreshed_at > policy.replica_refresh_interval_s)
        return 3; // stale replica data: assume sole copy
    if (entry.local_replicas > 0) return 1;
    if (entry.external_replicas > 0) return 2;
    return 3;
}

namespace {

EvictionPlan take_until_target(std::vector<CacheEntry> ordered, const CapacityPolicy& policy,
                               uint64_t used_bytes) {
    const double total = static_cast<double>(policy.total_bytes);
    EvictionPlan plan;
    uint64_t used = used_bytes;
    auto target_met = [&] {
        if (used > policy.total_bytes) return false; // over-filled: keep evicting
        return static_cast<double>(policy.total_bytes - used) / total >=
               policy.target_free_fraction;
    };
    for (auto& e : ordered) {
        if (target_met()) break;
        used -= e.size_bytes;
        plan.reclaimed_bytes += e.size_bytes;
        plan.victims.push_back(std::move(e));
    }
    plan.shortfall = !target_met();
    return plan;
}

} // namespace

EvictionPlan plan_eviction(const std::vector<CacheEntry>& entries, const CapacityPolicy& policy,
                           double now) {
    policy.validate();
    uint64_t used = 0;
    for (const auto& e : entries) used += e.size_bytes;

    std::vector<CacheEntry> candidates;
    candidates.reserve(entries.size());
    for (const auto& e : entries)
        if (!e.pinned) candidates.push_back(e);

    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](const CacheEntry& a, const CacheEntry& b) {
                         const int ta = eviction_tier(a, policy, now);
                         const int tb = eviction_tier(b, policy, now);
                         if (ta != tb) return ta < tb;
                         switch (ta) {
                         case 1:
                             if (a.last_access != b.last_access)
                                 return a.last_access < b.last_access;
                             return a.size_bytes > b.size_bytes;
                         case 2:
                             if (a.external_replicas != b.external_replicas)
                                 return a.external_replicas > b.external_replicas;
                             return a.last_access < b.last_access;
                         default:
                             return a.last_access < b.last_access;
                         }
                     });
    return take_until_target(std::move(candidates), policy, used);
}

EvictionPlan plan_eviction_lru(const std::vector<CacheEntry>& entries, const CapacityPolicy& policy,
                               double /*now*/) {
    policy.validate();
    uint64_t used = 0;
    for (const auto& e : entries) used += e.size_bytes;

    std::vector<CacheEntry> candidates;
    candidates.reserve(entries.size());
    for (const auto& e : entries)
        if (!e.pinned) candidates.push_back(e);

    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const CacheEntry& a, const CacheEntry& b) {
                         return a.last_access < b.last_access;
                     });
    return take_until_target(std::move(candidates), policy, used);
}

std::string eviction_events_csv(const std::vector<EvictionEvent>& events) {
    std::ostringstream os;
    os << "time,digest,size,tier,reason\n";
    os.precision(9);
    for (const auto& e : events)
        os << e.time << ',' << e.digest.hex() << ',' << e.size_bytes << ',' << e.tier << ','
           << e.reason << '\n';
    return os.str();
}

} // namespace peersync
