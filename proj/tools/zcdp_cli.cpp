#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "zcdp/scenario.hpp"
#include "zcdp/sim_runner.hpp"
#include "zcdp/socket_runner.hpp"

namespace {

int cmd_validate(const std::string& manifest) {
    auto load = zcdp::load_scenario_file(manifest);
    if (!load.ok()) {
        std::cerr << "CONFIG_INVALID: " << load.error << "\n";
        return 1;
    }
    std::cout << "ok: " << load.config->name << " (" <<
        load.config->nodes.size() << " nodes, " <<
        load.config->tenants.size() << " tenants, " <<
        load.config->functions.size() << " functions)\n";
    return 0;
}

int cmd_run(const std::string& manifest, const std::string& mode,
            uint64_t seed, bool seed_set, bool trace,
            const std::string& out_dir) {
    auto load = zcdp::load_scenario_file(manifest);
    if (!load.ok()) {
        std::cerr << "CONFIG_INVALID: " << load.error << "\n";
        return 1;
    }
    zcdp::ScenarioConfig cfg = *load.config;
    if (!mode.empty()) cfg.backend = mode;
    if (seed_set) cfg.seed = seed;

    if (cfg.backend == "sim") {
        zcdp::Simulation sim(cfg);
        zcdp::Status st = sim.setup();
        if (!st.ok()) {
            std::cerr << "setup failed: " << to_string(st.code) << "\n";
            return 1;
        }
        if (trace) {
            sim.set_fabric_trace([](const zcdp::TraceEvent& ev) {
                nlohmann::json j;
                j["virtual_time"] = ev.time;
                j["node"] = ev.node;
                j["event_kind"] = ev.kind;
                j["wr_id"] = ev.wr_id;
                std::cout << j.dump() << "\n";
            });
        }
        sim.run();
        std::cout << sim.summary_json();
        if (!out_dir.empty()) {
            zcdp::Status w = sim.write_outputs(out_dir);
            if (!w.ok()) {
                std::cerr << "failed to write outputs to " << out_dir << "\n";
                return 1;
            }
        }
        return sim.stats().violation_total() == 0 ? 0 : 2;
    }
    if (cfg.backend == "socket") {
        if (trace)
            std::cerr << "note: --trace applies to sim mode only\n";
        zcdp::SocketRunner runner(cfg);
        zcdp::Status st = runner.setup();
        if (!st.ok()) {
            std::cerr << "setup failed: " << to_string(st.code)
                      << " (socket mode supports two-sided echo workloads)\n";
            return 1;
        }
        runner.run();
        std::cout << runner.summary_json();
        if (!out_dir.empty()) {
            zcdp::Status w = runner.write_outputs(out_dir);
            if (!w.ok()) {
                std::cerr << "failed to write outputs to " << out_dir << "\n";
                return 1;
            }
        }
        return runner.stats().violation_total() == 0 ? 0 : 2;
    }
    std::cerr << "CONFIG_INVALID: unknown mode '" << cfg.backend << "'\n";
    return 1;
}

// Aggregates a per-window metrics CSV (window_start_s,tenant,delivered,bytes)
// into per-tenant totals and per-window byte shares.
int cmd_report(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) {
        std::cerr << "cannot open " << csv_path << "\n";
        return 1;
    }
    std::string line;
    if (!std::getline(in, line) ||
        line.rfind("window_start_s,tenant,delivered,bytes", 0) != 0) {
        std::cerr << "unrecognized CSV header\n";
        return 1;
    }
    std::map<std::string, std::map<uint64_t, uint64_t>> windows;  // t -> bytes
    std::map<uint64_t, std::pair<uint64_t, uint64_t>> totals;
    size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string win, tenant, delivered, bytes;
        if (!std::getline(ls, win, ',') || !std::getline(ls, tenant, ',') ||
            !std::getline(ls, delivered, ',') || !std::getline(ls, bytes)) {
            std::cerr << "malformed row: " << line << "\n";
            return 1;
        }
        try {
            uint64_t t = std::stoull(tenant);
            windows[win][t] += std::stoull(bytes);
            totals[t].first += std::stoull(delivered);
            totals[t].second += std::stoull(bytes);
        } catch (const std::exception&) {
            std::cerr << "malformed row: " << line << "\n";
            return 1;
        }
        rows++;
    }
    std::cout << "rows: " << rows << ", windows: " << windows.size() << "\n";
    std::cout << "tenant totals:\n";
    for (const auto& [t, agg] : totals)
        std::cout << "  tenant " << t << ": delivered=" << agg.first
                  << " bytes=" << agg.second << "\n";
    std::cout << "per-window byte shares:\n";
    for (const auto& [win, per_tenant] : windows) {
        uint64_t sum = 0;
        for (const auto& [t, b] : per_tenant) sum += b;
        std::cout << "  t=" << win << "s:";
        for (const auto& [t, b] : per_tenant) {
            double share = sum == 0 ? 0.0 : double(b) / double(sum);
            std::cout << " tenant" << t << "=" << std::fixed
                      << std::setprecision(3) << share;
        }
        std::cout << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-tenant data-plane scenario runner"};
    app.require_subcommand(1);

    std::string manifest, mode, out_dir, csv_path;
    uint64_t seed = 0;
    bool trace = false;

    CLI::App* run = app.add_subcommand("run", "execute a scenario manifest");
    run->add_option("manifest", manifest, "scenario manifest (JSON)")
        ->required();
    run->add_option("--mode", mode, "backend: sim or socket")
        ->check(CLI::IsMember({"sim", "socket"}));
    CLI::Option* seed_opt =
        run->add_option("--seed", seed, "override the manifest RNG seed");
    run->add_flag("--trace", trace, "stream fabric events as JSON lines");
    run->add_option("--out", out_dir, "directory for metrics and summary");

    CLI::App* validate =
        app.add_subcommand("validate", "check a manifest without running");
    validate->add_option("manifest", manifest, "scenario manifest (JSON)")
        ->required();

    CLI::App* report =
        app.add_subcommand("report", "summarize a metrics CSV");
    report->add_option("metrics", csv_path, "metrics.csv from a run")
        ->required();

    CLI11_PARSE(app, argc, argv);

    if (run->parsed())
        return cmd_run(manifest, mode, seed, seed_opt->count() > 0, trace,
                       out_dir);
    if (validate->parsed()) return cmd_validate(manifest);
    if (report->parsed()) return cmd_report(csv_path);
    return 1;
}
