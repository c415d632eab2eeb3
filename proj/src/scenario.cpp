#include "zcdp/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace zcdp {

namespace {

using nlohmann::json;

struct ParseError {
    std::string msg;
};

// typed field access with path-precise diagnostics
template <typename T>
T field(const json& j, const std::string& path, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ParseError{path + "." + key + ": wrong type"};
    }
}

template <typename T>
T require(const json& j, const std::string& path, const char* key) {
    if (!j.contains(key)) throw ParseError{path + "." + key + ": missing"};
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ParseError{path + "." + key + ": wrong type"};
    }
}

ScenarioConfig parse_impl(const json& j) {
    ScenarioConfig c;
    c.name = field<std::string>(j, "$", "name", "scenario");
    c.seed = field<uint64_t>(j, "$", "seed", 1);
    c.backend = field<std::string>(j, "$", "backend", "sim");
    if (c.backend != "sim" && c.backend != "socket")
        throw ParseError{"$.backend: must be \"sim\" or \"socket\""};
    c.duration_s = field<double>(j, "$", "duration_s", 1.0);
    if (c.duration_s <= 0) throw ParseError{"$.duration_s: must be > 0"};
    c.window_s = field<double>(j, "$", "window_s", 1.0);
    if (c.window_s <= 0) throw ParseError{"$.window_s: must be > 0"};
    c.iteration_period_ns =
        field<uint64_t>(j, "$", "iteration_period_ns", 1'000'000);
    if (c.iteration_period_ns == 0)
        throw ParseError{"$.iteration_period_ns: must be > 0"};

    std::string sched = field<std::string>(j, "$", "scheduler", "dwrr");
    if (sched == "dwrr")
        c.scheduler = SchedulerMode::dwrr;
    else if (sched == "fcfs")
        c.scheduler = SchedulerMode::fcfs;
    else
        throw ParseError{"$.scheduler: must be \"dwrr\" or \"fcfs\""};

    std::string tm = field<std::string>(j, "$", "transfer_mode", "two_sided");
    auto mode = transfer_mode_from_string(tm);
    if (!mode)
        throw ParseError{
            "$.transfer_mode: must be one of two_sided/owdl/owrc_best/"
            "owrc_worst"};
    c.transfer_mode = *mode;

    if (!j.contains("nodes") || !j.at("nodes").is_array() ||
        j.at("nodes").empty())
        throw ParseError{"$.nodes: non-empty array required"};
    std::set<NodeId> node_set;
    for (size_t i = 0; i < j.at("nodes").size(); ++i) {
        const auto& n = j.at("nodes").at(i);
        if (!n.is_number_unsigned())
            throw ParseError{"$.nodes[" + std::to_string(i) +
                             "]: unsigned integer required"};
        NodeId id = n.get<NodeId>();
        if (!node_set.insert(id).second)
            throw ParseError{"$.nodes[" + std::to_string(i) + "]: duplicate"};
        c.nodes.push_back(id);
    }

    if (!j.contains("tenants") || !j.at("tenants").is_array() ||
        j.at("tenants").empty())
        throw ParseError{"$.tenants: non-empty array required"};
    std::set<TenantId> tenant_set;
    for (size_t i = 0; i < j.at("tenants").size(); ++i) {
        std::string path = "$.tenants[" + std::to_string(i) + "]";
        const auto& t = j.at("tenants").at(i);
        TenantSpec ts;
        ts.id = require<TenantId>(t, path, "id");
        ts.weight = field<uint32_t>(t, path, "weight", 1);
        ts.pool_buffers = field<uint32_t>(t, path, "pool_buffers", 256);
        ts.buffer_size = field<uint32_t>(t, path, "buffer_size", 4096);
        if (ts.weight == 0) throw ParseError{path + ".weight: must be >= 1"};
        if (ts.pool_buffers == 0 || ts.buffer_size == 0)
            throw ParseError{path + ": pool dimensions must be >= 1"};
        if (!tenant_set.insert(ts.id).second)
            throw ParseError{path + ".id: duplicate tenant"};
        c.tenants.push_back(ts);
    }

    std::set<FnId> fn_set;
    if (j.contains("functions")) {
        if (!j.at("functions").is_array())
            throw ParseError{"$.functions: array required"};
        for (size_t i = 0; i < j.at("functions").size(); ++i) {
            std::string path = "$.functions[" + std::to_string(i) + "]";
            const auto& f = j.at("functions").at(i);
            FunctionSpec fs;
            fs.fn = require<FnId>(f, path, "fn");
            fs.tenant = require<TenantId>(f, path, "tenant");
            fs.node = require<NodeId>(f, path, "node");
            fs.app = require<std::string>(f, path, "app");
            fs.target = field<FnId>(f, path, "target", 0);
            fs.concurrency = field<uint32_t>(f, path, "concurrency", 1);
            fs.message_size = field<uint32_t>(f, path, "message_size", 1024);
            fs.requests = field<uint64_t>(f, path, "requests", 0);
            fs.start_s = field<double>(f, path, "start_s", 0.0);
            fs.stop_s = field<double>(f, path, "stop_s", 0.0);
            if (fs.fn == kIngressFn)
                throw ParseError{path + ".fn: 0 is reserved for ingress"};
            if (!fn_set.insert(fs.fn).second)
                throw ParseError{path + ".fn: duplicate function"};
            if (!tenant_set.count(fs.tenant))
                throw ParseError{path + ".tenant: unknown tenant " +
                                 std::to_string(fs.tenant)};
            if (!node_set.count(fs.node))
                throw ParseError{path + ".node: unknown node " +
                                 std::to_string(fs.node)};
            static const std::set<std::string> kApps = {
                "echo_server", "chain", "echo_client", "chain_client"};
            if (!kApps.count(fs.app))
                throw ParseError{path + ".app: unknown app \"" + fs.app +
                                 "\""};
            bool is_client =
                fs.app == "echo_client" || fs.app == "chain_client";
            if (is_client && fs.message_size == 0)
                throw ParseError{path + ".message_size: must be >= 1"};
            if (is_client && fs.concurrency == 0)
                throw ParseError{path + ".concurrency: must be >= 1"};
            c.functions.push_back(fs);
        }
    }
    // client targets must exist and share the client's tenant
    for (size_t i = 0; i < c.functions.size(); ++i) {
        const FunctionSpec& fs = c.functions[i];
        if (fs.app != "echo_client" && fs.app != "chain_client") continue;
        std::string path = "$.functions[" + std::to_string(i) + "]";
        auto it = std::find_if(
            c.functions.begin(), c.functions.end(),
            [&](const FunctionSpec& o) { return o.fn == fs.target; });
        if (it == c.functions.end())
            throw ParseError{path + ".target: unknown function " +
                             std::to_string(fs.target)};
        if (it->tenant != fs.tenant)
            throw ParseError{path + ".target: crosses tenant boundary"};
    }

    if (j.contains("chain")) {
        const auto& ch = j.at("chain");
        const auto& edges = ch.contains("edges") ? ch.at("edges") : json::object();
        for (auto it = edges.begin(); it != edges.end(); ++it) {
            FnId parent = FnId(std::stoul(it.key()));
            if (!fn_set.count(parent))
                throw ParseError{"$.chain.edges." + it.key() +
                                 ": unknown function"};
            for (const auto& child : it.value()) {
                FnId cf = child.get<FnId>();
                if (!fn_set.count(cf))
                    throw ParseError{"$.chain.edges." + it.key() +
                                     ": unknown child " + std::to_string(cf)};
                c.chain_edges[parent].push_back(cf);
            }
        }
    }

    if (j.contains("ingress")) {
        const auto& g = j.at("ingress");
        IngressSpec is;
        is.node = require<NodeId>(g, "$.ingress", "node");
        if (!node_set.count(is.node))
            throw ParseError{"$.ingress.node: unknown node"};
        is.config.worker_capacity =
            field<uint32_t>(g, "$.ingress", "worker_capacity", 64);
        is.config.autoscaler.spawn_threshold =
            field<double>(g, "$.ingress", "spawn_threshold", 0.60);
        is.config.autoscaler.retire_threshold =
            field<double>(g, "$.ingress", "retire_threshold", 0.30);
        is.config.autoscaler.min_workers =
            field<uint32_t>(g, "$.ingress", "min_workers", 1);
        is.config.autoscaler.max_workers =
            field<uint32_t>(g, "$.ingress", "max_workers", 8);
        is.config.abrupt_retire =
            field<bool>(g, "$.ingress", "abrupt_retire", false);
        is.connections = field<uint32_t>(g, "$.ingress", "connections", 4);
        is.requests_per_connection =
            field<uint64_t>(g, "$.ingress", "requests_per_connection", 100);
        is.body_size = field<uint32_t>(g, "$.ingress", "body_size", 64);
        is.target_fn = require<FnId>(g, "$.ingress", "target_fn");
        is.tick_s = field<double>(g, "$.ingress", "tick_s", 1.0);
        if (!fn_set.count(is.target_fn))
            throw ParseError{"$.ingress.target_fn: unknown function"};
        if (is.config.autoscaler.min_workers == 0 ||
            is.config.autoscaler.min_workers >
                is.config.autoscaler.max_workers)
            throw ParseError{"$.ingress: worker bounds invalid"};
        c.ingress = is;
    }

    if (j.contains("link")) {
        const auto& l = j.at("link");
        c.link.base_ns = field<uint64_t>(l, "$.link", "base_ns", c.link.base_ns);
        c.link.per_byte_ns =
            field<double>(l, "$.link", "per_byte_ns", c.link.per_byte_ns);
        c.link.connect_delay_ns = field<uint64_t>(l, "$.link",
                                                  "connect_delay_ns",
                                                  c.link.connect_delay_ns);
        c.link.rnr_timeout_ns = field<uint64_t>(l, "$.link", "rnr_timeout_ns",
                                                c.link.rnr_timeout_ns);
    }
    if (j.contains("engine")) {
        const auto& e = j.at("engine");
        c.engine.quantum_base =
            field<uint32_t>(e, "$.engine", "quantum_base", c.engine.quantum_base);
        c.engine.active_cap =
            field<uint32_t>(e, "$.engine", "active_cap", c.engine.active_cap);
        c.engine.initial_rq_depth = field<uint32_t>(
            e, "$.engine", "initial_rq_depth", c.engine.initial_rq_depth);
        c.engine.qps_per_peer =
            field<uint32_t>(e, "$.engine", "qps_per_peer", c.engine.qps_per_peer);
        c.engine.rounds_per_iteration =
            field<int>(e, "$.engine", "rounds_per_iteration",
                       c.engine.rounds_per_iteration);
        if (c.engine.quantum_base == 0)
            throw ParseError{"$.engine.quantum_base: must be >= 1"};
        if (c.engine.active_cap == 0)
            throw ParseError{"$.engine.active_cap: must be >= 1"};
    }
    if (j.contains("baseline")) {
        const auto& b = j.at("baseline");
        c.baseline.slot_size =
            field<uint32_t>(b, "$.baseline", "slot_size", c.baseline.slot_size);
        c.baseline.owdl_slots_per_tenant =
            field<uint32_t>(b, "$.baseline", "owdl_slots",
                            c.baseline.owdl_slots_per_tenant);
        c.baseline.owrc_slots_per_tenant =
            field<uint32_t>(b, "$.baseline", "owrc_slots",
                            c.baseline.owrc_slots_per_tenant);
        c.baseline.poll_interval_ns =
            field<uint64_t>(b, "$.baseline", "poll_interval_ns",
                            c.baseline.poll_interval_ns);
        c.baseline.copy_ns_per_byte = field<double>(
            b, "$.baseline", "copy_ns_per_byte", c.baseline.copy_ns_per_byte);
        c.baseline.owrc_worst_penalty =
            field<double>(b, "$.baseline", "owrc_worst_penalty",
                          c.baseline.owrc_worst_penalty);
        c.baseline.lock_backoff_ns = field<uint64_t>(
            b, "$.baseline", "lock_backoff_ns", c.baseline.lock_backoff_ns);
    }
    c.baseline.link = c.link;

    c.engine.scheduler = c.scheduler;
    return c;
}

}  // namespace

ScenarioLoad parse_scenario(const std::string& json_text) {
    ScenarioLoad out;
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) {
        out.error = "CONFIG_INVALID: not valid JSON";
        return out;
    }
    try {
        out.config = parse_impl(j);
    } catch (const ParseError& e) {
        out.error = "CONFIG_INVALID: " + e.msg;
    }
    return out;
}

ScenarioLoad load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) return {std::nullopt, "CONFIG_INVALID: cannot open " + path};
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

}  // namespace zcdp
