#ifndef ZCDP_SIM_RUNNER_HPP
#define ZCDP_SIM_RUNNER_HPP

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "zcdp/baselines.hpp"
#include "zcdp/clock.hpp"
#include "zcdp/dne.hpp"
#include "zcdp/fabric.hpp"
#include "zcdp/ingress.hpp"
#include "zcdp/iolib.hpp"
#include "zcdp/scenario.hpp"

namespace zcdp {

// Per-window, per-tenant delivery accounting plus end-to-end latency samples
// (virtual time). Windows are contiguous and non-overlapping.
class MetricsCollector {
  public:
    explicit MetricsCollector(uint64_t window_ns) : window_ns_(window_ns) {}

    void on_response(TenantId t, SimTime now, uint32_t bytes, SimTime latency);

    struct TenantAgg {
        uint64_t delivered = 0;
        uint64_t bytes = 0;
        std::vector<SimTime> latencies;
    };
    struct FairnessBand {
        std::vector<TenantId> active;
        size_t windows = 0;
        double max_rel_error = 0.0;           // worst per-window share error
        std::map<TenantId, double> min_share_ratio;  // share / entitlement
    };

    const std::map<uint64_t, std::map<TenantId, std::pair<uint64_t, uint64_t>>>&
    windows() const {
        return windows_;
    }
    const std::map<TenantId, TenantAgg>& tenants() const { return tenants_; }

    std::string csv(double window_s) const;
    // Bands of consecutive windows with an identical active-tenant set; the
    // first and last window of each band (partial ramps) are excluded.
    std::vector<FairnessBand> fairness(
        const std::map<TenantId, uint32_t>& weights) const;

  private:
    uint64_t window_ns_;
    std::map<uint64_t, std::map<TenantId, std::pair<uint64_t, uint64_t>>>
        windows_;
    std::map<TenantId, TenantAgg> tenants_;
};

struct ClientReport {
    uint64_t sent = 0;
    uint64_t completed = 0;
    uint64_t mismatches = 0;
};

class App;

// Deterministic single-threaded scenario execution on the SIM backend: all
// nodes, engines, functions, clients, and the ingress gateway share one
// virtual clock.
class Simulation {
  public:
    explicit Simulation(ScenarioConfig cfg);
    ~Simulation();

    Status setup();
    void run();

    SimKernel& kernel() { return kernel_; }
    RunStats& stats() { return stats_; }
    const ScenarioConfig& config() const { return cfg_; }
    Engine* engine(NodeId node);
    MemoryManager* memory(NodeId node);
    IngressMaster* ingress() { return ingress_.get(); }
    MetricsCollector& metrics() { return metrics_; }
    OneSidedCoordinator* coordinator() { return coordinator_.get(); }

    ClientReport client_report() const;
    uint64_t ingress_responses_ok() const { return ingress_ok_; }
    uint64_t ingress_responses_bad() const { return ingress_bad_; }

    std::string metrics_csv() const;
    std::string summary_json() const;
    Status write_outputs(const std::string& dir) const;

    void set_engine_trace(std::function<void(const std::string&)> sink);
    void set_fabric_trace(std::function<void(const TraceEvent&)> sink);

  private:
    friend class App;
    struct NodeRt {
        std::unique_ptr<MemoryManager> mm;
        std::unique_ptr<Engine> engine;
        std::unique_ptr<EndpointRegistry> registry;
    };
    struct FnRt {
        FunctionSpec spec;
        Endpoint* endpoint = nullptr;
        std::unique_ptr<ComchChannel> comch;
        std::unique_ptr<FunctionContext> ctx;
        std::unique_ptr<App> app;
    };
    struct IngressConn {
        uint64_t conn_id = 0;
        uint64_t sent = 0;
        uint64_t completed = 0;
    };

    void do_tick();
    bool finished() const;
    void drive_ingress_conn(size_t idx);

    ScenarioConfig cfg_;
    SimKernel kernel_;
    RunStats stats_;
    std::unique_ptr<SimFabric> fabric_;
    std::map<NodeId, NodeRt> nodes_;
    std::map<FnId, FnRt> fns_;
    std::unique_ptr<OneSidedCoordinator> coordinator_;
    MetricsCollector metrics_;

    std::unique_ptr<IngressMaster> ingress_;
    std::unique_ptr<ComchChannel> ingress_comch_;
    std::vector<IngressConn> ingress_conns_;
    uint64_t ingress_ok_ = 0;
    uint64_t ingress_bad_ = 0;
    SimTime next_ingress_tick_ = 0;
    bool setup_done_ = false;
};

}  // namespace zcdp

#endif
