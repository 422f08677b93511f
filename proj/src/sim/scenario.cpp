#include "peersync/sim/scenario.hpp"

#include "peersync/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

using nlohmann::json;

namespace peersync::sim {

namespace {

[[noreturn]] void fail(const std::string& origin, const std::string& path,
                       const std::string& what) {
    throw ParseError(origin, path.empty() ? what : path + ": " + what);
}

double require_positive(const std::string& origin, const std::string& path, double v,
                        const char* what) {
    if (!(v > 0)) fail(origin, path, std::string(what) + " must be positive");
    return v;
}

LinkSpec parse_link(const json& j, const std::string& origin, const std::string& path) {
    LinkSpec link;
    if (j.contains("mbps")) link.mbps = j.at("mbps").get<double>();
    if (j.contains("latency_ms")) link.latency_ms = j.at("latency_ms").get<double>();
    if (j.contains("loss")) link.loss = j.at("loss").get<double>();
    require_positive(origin, path, link.mbps, "mbps");
    if (link.latency_ms < 0) fail(origin, path, "latency_ms must be >= 0");
    if (link.loss < 0 || link.loss > 1) fail(origin, path, "loss must be in [0,1]");
    if (j.contains("schedule")) {
        double prev = -1;
        size_t i = 0;
        for (const auto& entry : j.at("schedule")) {
            const std::string epath = path + ".schedule[" + std::to_string(i++) + "]";
            ScheduleEntry se;
            se.at_s = entry.at("at_s").get<double>();
            se.mbps = entry.value("mbps", link.mbps);
            se.latency_ms = entry.value("latency_ms", link.latency_ms);
            se.loss = entry.value("loss", link.loss);
            if (se.at_s < 0) fail(origin, epath, "at_s must be >= 0");
            if (se.at_s <= prev) fail(origin, epath, "schedule instants must increase");
            require_positive(origin, epath, se.mbps, "mbps");
            if (se.loss < 0 || se.loss > 1) fail(origin, epath, "loss must be in [0,1]");
            prev = se.at_s;
            link.schedule.push_back(se);
        }
    }
    return link;
}

json link_json(const LinkSpec& link) {
    json j{{"mbps", link.mbps}, {"latency_ms", link.latency_ms}, {"loss", link.loss}};
    if (!link.schedule.empty()) {
        json sched = json::array();
        for (const auto& se : link.schedule)
            sched.push_back({{"at_s", se.at_s},
                             {"mbps", se.mbps},
                             {"latency_ms", se.latency_ms},
                             {"loss", se.loss}});
        j["schedule"] = sched;
    }
    return j;
}

bool valid_node_ref(const Scenario& s, const std::string& ref) {
    if (ref == "registry") return true;
    const auto colon = ref.find(':');
    if (colon == std::string::npos) return false;
    const auto* lan = s.find_lan(ref.substr(0, colon));
    if (!lan) return false;
    int index = -1;
    try {
        index = std::stoi(ref.substr(colon + 1));
    } catch (...) {
        return false;
    }
    return index >= 0 && index < lan->nodes;
}

} // namespace

double ImageSpec::total_mib() const {
    return std::accumulate(layers_mib.begin(), layers_mib.end(), 0.0);
}

int Scenario::total_worker_nodes() const {
    int n = 0;
    for (const auto& lan : lans) n += lan.nodes;
    return n;
}

const LanSpec* Scenario::find_lan(const std::string& id) const {
    for (const auto& lan : lans)
        if (lan.id == id) return &lan;
    return nullptr;
}

const ImageSpec* Scenario::find_image(const std::string& name) const {
    for (const auto& image : catalog)
        if (image.name == name) return &image;
    return nullptr;
}

const LinkSpec& Scenario::uplink_for(const std::string& lan_id) const {
    auto it = uplink_overrides.find(lan_id);
    return it == uplink_overrides.end() ? transit : it->second;
}

CapacityPolicy Scenario::cache_policy() const {
    CapacityPolicy policy;
    policy.total_bytes = static_cast<uint64_t>(cache.capacity_mib * 1024 * 1024);
    policy.free_threshold_fraction = cache.free_threshold;
    policy.target_free_fraction = cache.target_free;
    policy.replica_refresh_interval_s = cache.refresh_interval_s;
    return policy;
}

std::string Scenario::resolved_json() const {
    json j;
    j["name"] = name;
    j["description"] = description;
    j["time_limit_s"] = time_limit_s;
    j["registry_lan"] = registry_lan;
    j["request_mode"] = request_mode;
    j["lans"] = json::array();
    for (const auto& lan : lans)
        j["lans"].push_back(
            {{"id", lan.id}, {"nodes", lan.nodes}, {"intra", link_json(lan.intra)}});
    j["transit"] = link_json(transit);
    if (!uplink_overrides.empty()) {
        json up;
        for (const auto& [id, link] : uplink_overrides) up[id] = link_json(link);
        j["uplinks"] = up;
    }
    j["catalog"] = json::array();
    for (const auto& image : catalog)
        j["catalog"].push_back({{"name", image.name}, {"layers_mib", image.layers_mib}});
    j["seeds"] = json::array();
    for (const auto& seed : seeds)
        j["seeds"].push_back({{"image", seed.image}, {"nodes", seed.nodes}});
    if (workload)
        j["workload"] = {{"A", workload->a}, {"B", workload->b}, {"horizon_s", workload->horizon_s}};
    j["requests"] = json::array();
    for (const auto& req : requests)
        j["requests"].push_back({{"at_s", req.at_s}, {"image", req.image}, {"node", req.node}});
    j["churn"] = json::array();
    for (const auto& ev : churn)
        j["churn"].push_back(
            {{"at_s", ev.at_s}, {"node", ev.node}, {"action", ev.leave ? "leave" : "join"}});
    j["policies"] = policies;
    j["cache"] = {{"capacity_mib", cache.capacity_mib},
                  {"planner", cache.planner},
                  {"free_threshold", cache.free_threshold},
                  {"target_free", cache.target_free},
                  {"refresh_interval_s", cache.refresh_interval_s}};
    j["engine"] = {{"batch_size", engine.batch_size},
                   {"inflight_per_peer", engine.inflight_per_peer},
                   {"subset_k", engine.subset_k},
                   {"partial_threshold_mib",
                    static_cast<double>(engine.partial_threshold_bytes) / (1024.0 * 1024.0)},
                   {"aggregation_deadline_s", engine.aggregation_deadline_s},
                   {"max_retries_per_block", engine.max_retries_per_block},
                   {"alpha", engine.weights.alpha},
                   {"beta", engine.weights.beta},
                   {"gamma", engine.weights.gamma},
                   {"lambda", engine.weights.lambda},
                   {"window_len", engine.weights.window_len},
                   {"tau0", engine.weights.tau0}};
    return j.dump(2) + "\n";
}

Scenario parse_scenario(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        // Convert the byte offset into a line number for the error message.
        size_t line = 1;
        for (size_t i = 0; i < text.size() && i < e.byte; ++i)
            if (text[i] == '\n') ++line;
        fail(origin, "line " + std::to_string(line), e.what());
    }

    Scenario s;
    try {
        s.name = j.value("name", std::string("unnamed"));
        s.description = j.value("description", std::string());
        s.time_limit_s = j.value("time_limit_s", 1200.0);
        s.request_mode = j.value("request_mode", std::string("fresh"));
        if (s.request_mode != "fresh" && s.request_mode != "cached")
            fail(origin, "request_mode", "must be \"fresh\" or \"cached\"");
        require_positive(origin, "time_limit_s", s.time_limit_s, "time_limit_s");

        if (!j.contains("lans") || j.at("lans").empty()) fail(origin, "lans", "at least one LAN");
        std::set<std::string> lan_ids;
        size_t i = 0;
        for (const auto& lj : j.at("lans")) {
            const std::string path = "lans[" + std::to_string(i++) + "]";
            LanSpec lan;
            lan.id = lj.at("id").get<std::string>();
            lan.nodes = lj.at("nodes").get<int>();
            if (lan.id.empty() || lan.id == "registry") fail(origin, path, "bad lan id");
            if (!lan_ids.insert(lan.id).second) fail(origin, path, "duplicate lan id " + lan.id);
            if (lan.nodes < 0) fail(origin, path, "nodes must be >= 0");
            if (lj.contains("intra")) lan.intra = parse_link(lj.at("intra"), origin, path + ".intra");
            s.lans.push_back(std::move(lan));
        }

        s.registry_lan = j.value("registry_lan", s.lans.front().id);
        if (!s.find_lan(s.registry_lan)) fail(origin, "registry_lan", "unknown lan " + s.registry_lan);

        if (j.contains("transit")) s.transit = parse_link(j.at("transit"), origin, "transit");
        if (j.contains("uplinks"))
            for (const auto& [lan_id, lj] : j.at("uplinks").items()) {
                if (!s.find_lan(lan_id)) fail(origin, "uplinks." + lan_id, "unknown lan");
                s.uplink_overrides[lan_id] = parse_link(lj, origin, "uplinks." + lan_id);
            }

        if (!j.contains("catalog") || j.at("catalog").empty())
            fail(origin, "catalog", "at least one image");
        std::set<std::string> image_names;
        i = 0;
        for (const auto& ij : j.at("catalog")) {
            const std::string path = "catalog[" + std::to_string(i++) + "]";
            ImageSpec image;
            image.name = ij.at("name").get<std::string>();
            if (image.name.empty()) fail(origin, path, "empty image name");
            if (!image_names.insert(image.name).second)
                fail(origin, path, "duplicate image " + image.name);
            for (const auto& mib : ij.at("layers_mib")) {
                const double v = mib.get<double>();
                require_positive(origin, path + ".layers_mib", v, "layer size");
                image.layers_mib.push_back(v);
            }
            if (image.layers_mib.empty()) fail(origin, path, "image needs at least one layer");
            s.catalog.push_back(std::move(image));
        }

        if (j.contains("seeds")) {
            i = 0;
            for (const auto& sj : j.at("seeds")) {
                const std::string path = "seeds[" + std::to_string(i++) + "]";
                SeedSpec seed;
                seed.image = sj.at("image").get<std::string>();
                if (!s.find_image(seed.image)) fail(origin, path, "unknown image " + seed.image);
                for (const auto& node : sj.at("nodes")) {
                    seed.nodes.push_back(node.get<std::string>());
                    if (!valid_node_ref(s, seed.nodes.back()))
                        fail(origin, path, "bad node reference " + seed.nodes.back());
                }
                s.seeds.push_back(std::move(seed));
            }
        }

        if (j.contains("workload")) {
            const auto& wj = j.at("workload");
            WorkloadSpec w;
            w.a = wj.at("A").get<double>();
            w.b = wj.value("B", 0.0);
            w.horizon_s = wj.at("horizon_s").get<double>();
            require_positive(origin, "workload.A", w.a, "A");
            require_positive(origin, "workload.horizon_s", w.horizon_s, "horizon_s");
            s.workload = w;
        }

        if (j.contains("requests")) {
            i = 0;
            for (const auto& rj : j.at("requests")) {
                const std::string path = "requests[" + std::to_string(i++) + "]";
                ExplicitRequest req;
                req.at_s = rj.at("at_s").get<double>();
                req.image = rj.at("image").get<std::string>();
                req.node = rj.at("node").get<std::string>();
                if (req.at_s < 0) fail(origin, path, "at_s must be >= 0");
                if (!s.find_image(req.image)) fail(origin, path, "unknown image " + req.image);
                if (!valid_node_ref(s, req.node) || req.node == "registry")
                    fail(origin, path, "bad node reference " + req.node);
                s.requests.push_back(std::move(req));
            }
        }
        if (!s.workload && s.requests.empty() && j.contains("workload"))
            fail(origin, "workload", "invalid workload");

        if (j.contains("churn")) {
            i = 0;
            for (const auto& cj : j.at("churn")) {
                const std::string path = "churn[" + std::to_string(i++) + "]";
                ChurnEvent ev;
                ev.at_s = cj.at("at_s").get<double>();
                ev.node = cj.at("node").get<std::string>();
                const std::string action = cj.at("action").get<std::string>();
                if (action == "leave")
                    ev.leave = true;
                else if (action == "join")
                    ev.leave = false;
                else
                    fail(origin, path, "action must be join or leave");
                if (ev.at_s < 0) fail(origin, path, "at_s must be >= 0");
                if (!valid_node_ref(s, ev.node) || ev.node == "registry")
                    fail(origin, path, "bad node reference " + ev.node);
                s.churn.push_back(std::move(ev));
            }
            std::stable_sort(s.churn.begin(), s.churn.end(),
                             [](const ChurnEvent& a, const ChurnEvent& b) { return a.at_s < b.at_s; });
        }

        s.policies = {"peersync", "baseline", "naive"};
        if (j.contains("policies")) {
            s.policies.clear();
            for (const auto& pj : j.at("policies")) {
                const std::string p = pj.get<std::string>();
                if (p != "peersync" && p != "baseline" && p != "naive")
                    fail(origin, "policies", "unknown policy " + p);
                s.policies.push_back(p);
            }
            if (s.policies.empty()) fail(origin, "policies", "at least one policy");
        }

        if (j.contains("cache")) {
            const auto& cj = j.at("cache");
            s.cache.capacity_mib = cj.value("capacity_mib", 0.0);
            s.cache.planner = cj.value("planner", std::string("tiered"));
            s.cache.free_threshold = cj.value("free_threshold", 0.10);
            s.cache.target_free = cj.value("target_free", 0.20);
            s.cache.refresh_interval_s = cj.value("refresh_interval_s", 30.0);
            if (s.cache.capacity_mib < 0) fail(origin, "cache.capacity_mib", "must be >= 0");
            if (s.cache.planner != "tiered" && s.cache.planner != "lru")
                fail(origin, "cache.planner", "must be \"tiered\" or \"lru\"");
            if (s.cache.capacity_mib > 0) s.cache_policy().validate();
        }

        if (j.contains("engine")) {
            const auto& ej = j.at("engine");
            s.engine.batch_size = ej.value("batch_size", s.engine.batch_size);
            s.engine.inflight_per_peer = ej.value("inflight_per_peer", s.engine.inflight_per_peer);
            s.engine.subset_k = ej.value("subset_k", s.engine.subset_k);
            if (ej.contains("partial_threshold_mib"))
                s.engine.partial_threshold_bytes = static_cast<uint64_t>(
                    ej.at("partial_threshold_mib").get<double>() * 1024 * 1024);
            s.engine.aggregation_deadline_s =
                ej.value("aggregation_deadline_s", s.engine.aggregation_deadline_s);
            s.engine.max_retries_per_block =
                ej.value("max_retries_per_block", s.engine.max_retries_per_block);
            s.engine.weights.alpha = ej.value("alpha", s.engine.weights.alpha);
            s.engine.weights.beta = ej.value("beta", s.engine.weights.beta);
            s.engine.weights.gamma = ej.value("gamma", s.engine.weights.gamma);
            s.engine.weights.lambda = ej.value("lambda", s.engine.weights.lambda);
            s.engine.weights.window_len = ej.value("window_len", s.engine.weights.window_len);
            s.engine.weights.tau0 = ej.value("tau0", s.engine.weights.tau0);
            s.engine.validate();
        }
    } catch (const ParseError&) {
        throw;
    } catch (const json::exception& e) {
        fail(origin, "", e.what());
    } catch (const std::invalid_argument& e) {
        fail(origin, "", e.what());
    }
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, "cannot open scenario file");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_scenario(buffer.str(), path);
}

} // namespace peersync::sim
