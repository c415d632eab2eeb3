#ifndef ZCDP_SCENARIO_HPP
#define ZCDP_SCENARIO_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zcdp/baselines.hpp"
#include "zcdp/dne.hpp"
#include "zcdp/fabric.hpp"
#include "zcdp/ingress.hpp"

namespace zcdp {

struct TenantSpec {
    TenantId id = 0;
    uint32_t weight = 1;
    uint32_t pool_buffers = 256;
    uint32_t buffer_size = 4096;
};

// A deployed function. Client apps ("echo_client", "chain_client") carry the
// load-generation knobs; servers ignore them.
struct FunctionSpec {
    FnId fn = 0;
    TenantId tenant = 0;
    NodeId node = 0;
    std::string app;  // echo_server | chain | echo_client | chain_client
    FnId target = 0;
    uint32_t concurrency = 1;
    uint32_t message_size = 1024;
    uint64_t requests = 0;  // 0 = unbounded (run until stop)
    double start_s = 0.0;
    double stop_s = 0.0;  // 0 = scenario end
};

struct IngressSpec {
    NodeId node = 0;
    IngressConfig config;
    uint32_t connections = 4;
    uint64_t requests_per_connection = 100;
    uint32_t body_size = 64;
    FnId target_fn = 0;
    double tick_s = 1.0;  // autoscaler evaluation period
};

struct ScenarioConfig {
    std::string name;
    uint64_t seed = 1;
    std::string backend = "sim";
    double duration_s = 1.0;
    double window_s = 1.0;
    uint64_t iteration_period_ns = 1'000'000;
    SchedulerMode scheduler = SchedulerMode::dwrr;
    TransferMode transfer_mode = TransferMode::two_sided;

    std::vector<NodeId> nodes;
    std::vector<TenantSpec> tenants;
    std::vector<FunctionSpec> functions;
    std::map<FnId, std::vector<FnId>> chain_edges;
    std::optional<IngressSpec> ingress;

    LinkParams link;
    EngineConfig engine;
    BaselineConfig baseline;

    uint64_t duration_ns() const { return uint64_t(duration_s * 1e9); }
    uint64_t window_ns() const { return uint64_t(window_s * 1e9); }
};

// Parses and validates a manifest. On failure `config` is empty and `error`
// carries a field-precise diagnostic (CONFIG_INVALID).
struct ScenarioLoad {
    std::optional<ScenarioConfig> config;
    std::string error;
    bool ok() const { return config.has_value(); }
};

ScenarioLoad parse_scenario(const std::string& json_text);
ScenarioLoad load_scenario_file(const std::string& path);

}  // namespace zcdp

#endif
