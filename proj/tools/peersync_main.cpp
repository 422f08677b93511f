// Experiment and serving front end: runs simulated distribution scenarios,
// compares policies across seeds, sweeps the arrival-rate parameter, and can
// stand up the pull-through registry gateway as a live HTTP service.

#include "peersync/errors.hpp"
#include "peersync/gateway.hpp"
#include "peersync/gateway_http.hpp"
#include "peersync/sim/metrics.hpp"
#include "peersync/sim/scenario.hpp"
#include "peersync/sim/simulator.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <httplib.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace peersync;
using namespace peersync::sim;

namespace {

void write_file(const fs::path& path, const std::string& body) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << body;
}

// "3" -> {3}; "1,4,9" -> {1,4,9}; "1-20" -> {1..20}.
std::vector<uint64_t> parse_seeds(const std::string& text) {
    std::vector<uint64_t> seeds;
    size_t pos = 0;
    while (pos < text.size()) {
        size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        const std::string part = text.substr(pos, comma - pos);
        const size_t dash = part.find('-');
        if (dash == std::string::npos) {
            seeds.push_back(std::stoull(part));
        } else {
            const uint64_t lo = std::stoull(part.substr(0, dash));
            const uint64_t hi = std::stoull(part.substr(dash + 1));
            if (hi < lo) throw CLI::ValidationError("seeds", "descending range " + part);
            for (uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
        }
        pos = comma + 1;
    }
    if (seeds.empty()) throw CLI::ValidationError("seeds", "no seeds in " + text);
    return seeds;
}

struct EngineOverrides {
    std::optional<double> alpha, beta, gamma, lambda, tau0;
    std::optional<uint32_t> window_len, subset_k;
    std::optional<double> time_limit_s;
    std::optional<double> cache_capacity_mib;

    void apply(Scenario& s) const {
        auto& w = s.engine.weights;
        if (alpha) w.alpha = *alpha;
        if (beta) w.beta = *beta;
        if (gamma) w.gamma = *gamma;
        if (lambda) w.lambda = *lambda;
        if (tau0) w.tau0 = *tau0;
        if (window_len) w.window_len = *window_len;
        if (subset_k) s.engine.subset_k = *subset_k;
        if (time_limit_s) s.time_limit_s = *time_limit_s;
        if (cache_capacity_mib) s.cache.capacity_mib = *cache_capacity_mib;
        s.engine.validate();
    }
};

void add_override_flags(CLI::App* cmd, EngineOverrides& ov) {
    cmd->add_option("--alpha", ov.alpha, "Network-score weight");
    cmd->add_option("--beta", ov.beta, "Popularity-score weight");
    cmd->add_option("--gamma", ov.gamma, "Custom-score weight");
    cmd->add_option("--lambda", ov.lambda, "Popularity decay rate");
    cmd->add_option("--tau0", ov.tau0, "Initial softmax temperature");
    cmd->add_option("--window", ov.window_len, "Speed-sample window length");
    cmd->add_option("--subset-k", ov.subset_k, "Candidate subset size per block");
    cmd->add_option("--time-limit", ov.time_limit_s, "Per-request time limit in seconds");
    cmd->add_option("--cache-capacity-mib", ov.cache_capacity_mib,
                    "Per-node cache capacity (0 disables the cleaner)");
}

std::string traffic_csv(const TrafficSeries& series) {
    std::string out = "window_start_s,bytes\n";
    const auto& windows = series.windows();
    for (size_t i = 0; i < windows.size(); ++i)
        out += fmt::format("{:.6f},{:.6f}\n", static_cast<double>(i) * series.window_s(),
                           windows[i]);
    return out;
}

void emit_run(const fs::path& dir, const SimResult& result) {
    write_file(dir / "per_request.csv", result.report.per_request_csv());
    write_file(dir / "summary.csv", result.report.summary_csv());
    write_file(dir / "layers.csv", result.layers_csv);
    write_file(dir / "cross_traffic.csv", traffic_csv(result.report.cross_traffic));
    if (!result.regret_csv.empty()) write_file(dir / "regret.csv", result.regret_csv);
    if (!result.evictions.empty())
        write_file(dir / "evictions.csv", eviction_events_csv(result.evictions));
}

std::vector<std::string> pick_policies(const Scenario& s, const std::vector<std::string>& chosen) {
    if (chosen.empty()) return s.policies;
    return chosen;
}

int cmd_run(const std::string& scenario_path, const std::string& out_dir, uint64_t seed,
            const std::vector<std::string>& policies, const EngineOverrides& ov) {
    Scenario s = load_scenario(scenario_path);
    ov.apply(s);
    const fs::path base = fs::path(out_dir) / s.name;
    write_file(base / "resolved_scenario.json", s.resolved_json());
    for (const auto& policy : pick_policies(s, policies)) {
        const auto result = run_simulation(s, policy, seed);
        emit_run(base / policy / fmt::format("seed{}", seed), result);
        fmt::print("{:>9}  seed {:<4}  requests {:<4}  timeouts {:<3}  mean {:.2f}s  "
                   "p90 {:.2f}s  cross {:.1f} MiB\n",
                   policy, seed, result.report.requests.size(), result.report.timeout_count(),
                   result.report.mean_duration_s(), result.report.p90_s(),
                   result.report.cross_traffic.total_bytes() / (1024.0 * 1024.0));
    }
    fmt::print("wrote {}\n", base.string());
    return 0;
}

int cmd_compare(const std::string& scenario_path, const std::string& out_dir,
                const std::string& seeds_text, const std::vector<std::string>& policies,
                const EngineOverrides& ov) {
    Scenario s = load_scenario(scenario_path);
    ov.apply(s);
    const auto seeds = parse_seeds(seeds_text);
    const fs::path base = fs::path(out_dir) / s.name;
    write_file(base / "resolved_scenario.json", s.resolved_json());

    std::vector<SimResult> runs;
    std::string summary;
    for (const auto& policy : pick_policies(s, policies))
        for (uint64_t seed : seeds) {
            auto result = run_simulation(s, policy, seed);
            emit_run(base / policy / fmt::format("seed{}", seed), result);
            const auto csv = result.report.summary_csv();
            if (summary.empty())
                summary = csv;
            else
                summary += csv.substr(csv.find('\n') + 1);
            runs.push_back(std::move(result));
        }
    write_file(base / "summary.csv", summary);
    const auto rows = aggregate_comparison(runs);
    write_file(base / "comparison.csv", aggregate_csv(rows));
    for (const auto& row : rows)
        fmt::print("{:>9}  mean {:.2f}s ({:.1f}% of baseline)  p90 {:.2f}s  timeouts {}  "
                   "cross avg {:.4f} Gbps\n",
                   row.policy, row.mean_s, row.vs_baseline_pct, row.p90_s, row.timeouts,
                   row.cross_avg_gbps);
    fmt::print("wrote {}\n", base.string());
    return 0;
}

int cmd_sweep(const std::string& scenario_path, const std::string& out_dir,
              const std::string& seeds_text, const std::vector<std::string>& policies,
              std::vector<double> a_values, const EngineOverrides& ov) {
    Scenario s = load_scenario(scenario_path);
    ov.apply(s);
    if (!s.workload) throw std::runtime_error("sweep needs a scenario with a workload section");
    const auto seeds = parse_seeds(seeds_text);
    std::sort(a_values.begin(), a_values.end());
    const fs::path base = fs::path(out_dir) / s.name;

    std::vector<SweepPoint> points;
    for (double a : a_values) {
        Scenario variant = s;
        variant.workload->a = a;
        for (const auto& policy : pick_policies(s, policies))
            for (uint64_t seed : seeds) {
                const auto result = run_simulation(variant, policy, seed);
                SweepPoint p;
                p.a = a;
                p.policy = policy;
                p.seed = seed;
                p.mean_duration_s = result.report.mean_duration_s();
                p.timeout_fraction =
                    result.report.requests.empty()
                        ? 0.0
                        : static_cast<double>(result.report.timeout_count()) /
                              static_cast<double>(result.report.requests.size());
                points.push_back(p);
                fmt::print("A={:<8} {:>9} seed {:<4} mean {:.2f}s timeouts {:.0f}%\n", a, policy,
                           seed, p.mean_duration_s, 100 * p.timeout_fraction);
            }
    }
    write_file(base / "sweep.csv", sweep_csv(points));
    fmt::print("wrote {}\n", (base / "sweep.csv").string());
    return 0;
}

// Live-mode upstream: a real OCI-style registry reached over HTTP.
class HttpUpstream : public Upstream {
public:
    explicit HttpUpstream(const std::string& base_url) : client_(base_url.c_str()) {
        client_.set_connection_timeout(5, 0);
        client_.set_read_timeout(30, 0);
    }

    std::optional<std::string> fetch_manifest(const std::string& name,
                                              const std::string& ref) override {
        auto res = client_.Get(("/v2/" + name + "/manifests/" + ref).c_str());
        if (!res || res->status != 200) return std::nullopt;
        return res->body;
    }

    std::optional<Bytes> fetch_blob(const std::string& name, const Digest& digest) override {
        auto res = client_.Get(("/v2/" + name + "/blobs/sha256:" + digest.hex()).c_str());
        if (!res || res->status != 200) return std::nullopt;
        return Bytes(res->body.begin(), res->body.end());
    }

private:
    httplib::Client client_;
};

std::atomic<bool> g_stop{false};

int cmd_serve(const std::string& upstream_url, const std::string& host, int port, double ttl_s) {
    HttpUpstream upstream(upstream_url);
    Gateway gateway(&upstream, nullptr, ttl_s);
    GatewayHttpServer server(gateway);
    if (!server.start(host, port)) {
        fmt::print(stderr, "failed to bind {}:{}\n", host, port);
        return 1;
    }
    fmt::print("serving on {}:{} (upstream {})\n", host, server.port(), upstream_url);
    std::signal(SIGINT, [](int) { g_stop = true; });
    std::signal(SIGTERM, [](int) { g_stop = true; });
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    fmt::print("shutting down\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Peer-aware container image distribution: simulator and gateway"};
    app.require_subcommand(1);

    std::string scenario_path, out_dir = "out", seeds_text = "1";
    std::vector<std::string> policies;
    std::vector<double> a_values;
    uint64_t seed = 1;
    EngineOverrides ov;

    auto* run = app.add_subcommand("run", "Run one scenario at one seed");
    run->add_option("--scenario", scenario_path, "Scenario file")->required();
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--seed", seed, "Run seed");
    run->add_option("--policy", policies, "Policy (repeatable; default: scenario's list)");
    add_override_flags(run, ov);

    auto* compare = app.add_subcommand("compare", "Run policies across seeds and aggregate");
    compare->add_option("--scenario", scenario_path, "Scenario file")->required();
    compare->add_option("--out", out_dir, "Output directory");
    compare->add_option("--seeds", seeds_text, "Seed list: N, N-M, or comma mix");
    compare->add_option("--policy", policies, "Policy (repeatable; default: scenario's list)");
    add_override_flags(compare, ov);

    auto* sweep = app.add_subcommand("sweep", "Sweep the arrival-rate parameter A");
    sweep->add_option("--scenario", scenario_path, "Scenario file (must have a workload)")
        ->required();
    sweep->add_option("--out", out_dir, "Output directory");
    sweep->add_option("--seeds", seeds_text, "Seed list: N, N-M, or comma mix");
    sweep->add_option("--policy", policies, "Policy (repeatable; default: scenario's list)");
    sweep->add_option("--A", a_values, "Arrival-rate values to sweep (repeatable)")->required();
    add_override_flags(sweep, ov);

    std::string upstream_url, host = "127.0.0.1";
    int port = 0;
    double ttl_s = 60.0;
    auto* serve = app.add_subcommand("serve", "Serve the pull-through registry gateway over HTTP");
    serve->add_option("--upstream", upstream_url, "Upstream registry base URL")->required();
    serve->add_option("--host", host, "Bind address");
    serve->add_option("--port", port, "Bind port (0 picks an ephemeral port)");
    serve->add_option("--manifest-ttl", ttl_s, "Manifest cache TTL in seconds");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(scenario_path, out_dir, seed, policies, ov);
        if (compare->parsed()) return cmd_compare(scenario_path, out_dir, seeds_text, policies, ov);
        if (sweep->parsed())
            return cmd_sweep(scenario_path, out_dir, seeds_text, policies, a_values, ov);
        if (serve->parsed()) return cmd_serve(upstream_url, host, port, ttl_s);
    } catch (const ParseError& e) {
        fmt::print(stderr, "scenario error: {}\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 0;
}
