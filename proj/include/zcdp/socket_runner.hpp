#ifndef ZCDP_SOCKET_RUNNER_HPP
#define ZCDP_SOCKET_RUNNER_HPP

#include <atomic>
#include <map>
#include <memory>
#include <string>

#include "zcdp/dne.hpp"
#include "zcdp/iolib.hpp"
#include "zcdp/scenario.hpp"
#include "zcdp/sim_runner.hpp"
#include "zcdp/socket_fabric.hpp"

namespace zcdp {

class SocketApp;

// Scenario execution on the loopback-TCP backend: one engine thread per
// node, wall-clock timing. Supports the two-sided echo workloads
// (echo_server / bounded echo_client); scenarios using the ingress gateway,
// function chains, one-sided transfer modes, or unbounded clients are
// rejected at setup with CONFIG_INVALID.
class SocketRunner {
  public:
    explicit SocketRunner(ScenarioConfig cfg);
    ~SocketRunner();

    Status setup();
    void run();

    RunStats& stats() { return stats_; }
    ClientReport client_report() const;
    std::string summary_json() const;
    Status write_outputs(const std::string& dir) const;

  private:
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
        std::unique_ptr<SocketApp> app;
        std::atomic<bool> done{false};
    };

    void node_loop(NodeId node);

    ScenarioConfig cfg_;
    RunStats stats_;
    std::unique_ptr<SocketFabric> fabric_;
    std::map<NodeId, NodeRt> nodes_;
    std::map<FnId, std::unique_ptr<FnRt>> fns_;
    std::atomic<bool> stop_{false};
    std::atomic<uint64_t> now_ns_{0};
    bool setup_done_ = false;
    double wall_elapsed_s_ = 0.0;
};

}  // namespace zcdp

#endif
