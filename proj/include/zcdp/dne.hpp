#ifndef ZCDP_DNE_HPP
#define ZCDP_DNE_HPP

#include <deque>
#include <functional>
#include <map>
#include <vector>

#include "zcdp/common.hpp"
#include "zcdp/descriptor.hpp"
#include "zcdp/fabric.hpp"
#include "zcdp/ipc.hpp"
#include "zcdp/mempool.hpp"

namespace zcdp {

class Engine;

enum class SchedulerMode : uint8_t { dwrr, fcfs };

// Strategy hook for inter-node emission; the default (two-sided send) lives
// in the engine, baseline modes plug in here.
class InterNodeTransfer {
  public:
    virtual ~InterNodeTransfer() = default;
    virtual Status start(Engine& src, const BufferDescriptor& d,
                         NodeId dst) = 0;
};

struct EngineConfig {
    uint32_t quantum_base = 2048;      // bytes of credit per weight unit
    uint32_t active_cap = 32;          // max ACTIVE QPs per node
    uint32_t initial_rq_depth = 64;    // receive buffers posted per tenant
    uint32_t qps_per_peer = 4;         // QPs per (tenant, remote node)
    int rounds_per_iteration = 1;      // DWRR rounds per loop pass
    SchedulerMode scheduler = SchedulerMode::dwrr;
};

struct TenantState {
    TenantId id = 0;
    uint32_t weight = 1;
    uint64_t deficit = 0;
    std::deque<BufferDescriptor> pending_tx;
    uint64_t cqe_consumed = 0;
    uint64_t reposted = 0;
    uint32_t initial_rq_depth = 0;
    uint64_t emitted = 0;
    uint64_t emitted_bytes = 0;
};

struct IterationReport {
    uint32_t tx_emitted = 0;
    uint32_t rx_dispatched = 0;
    uint32_t reposted = 0;
    uint32_t tx_errors = 0;
    uint32_t qp_activations = 0;
    uint32_t qp_deactivations = 0;
};

// Node-local network engine: one run-to-completion loop per node owning all
// fabric resources for that node. State is confined to the loop; functions
// talk to it only through comch channels.
class Engine {
  public:
    Engine(NodeId node, Fabric* fabric, MemoryManager* mm, RunStats* stats,
           EngineConfig cfg);

    NodeId node() const { return node_; }
    MemoryManager* memory() const { return mm_; }
    RunStats* stats() const { return stats_; }
    const EngineConfig& config() const { return cfg_; }

    Status attach_tenant(TenantId tenant, uint32_t weight);
    // Runs the cross-processor map/export handshake, registers the pool with
    // the fabric, and posts the initial receive buffers.
    Status map_tenant_pool(TenantId tenant);
    // Establishes the per-tenant connection pool toward a peer node.
    Status connect_peer(TenantId tenant, NodeId peer);

    void set_route(FnId fn, NodeId node) { routes_[fn] = node; }
    const std::map<FnId, NodeId>& routes() const { return routes_; }
    Status register_channel(ComchChannel* ch);
    void sever_channel(FnId fn);

    void set_transfer(InterNodeTransfer* t) { transfer_ = t; }
    void set_now_fn(std::function<SimTime()> f) { now_fn_ = std::move(f); }
    void set_metrics_sink(std::function<void(const std::string&)> s) {
        metrics_sink_ = std::move(s);
    }

    IterationReport iterate();

    // --- stages (public so tests can drive them in isolation) ---
    Status tx_stage(BufferDescriptor d);
    Status rx_stage(const CompletionEntry& ce);
    uint32_t repost_receive_buffers();
    std::pair<uint32_t, uint32_t> manage_connection_pool();  // {act, deact}
    // One or more DWRR rounds; pops scheduled descriptors and returns the
    // emission order without posting anything (test/oracle entry point).
    std::vector<BufferDescriptor> dwrr_schedule(int rounds);
    // Hands a descriptor owned by ENGINE(node) to a local function.
    Status deliver_local(BufferDescriptor d);
    // Queues a descriptor (owned by ENGINE) for transmission, as if it had
    // arrived on a comch channel.
    void enqueue_tx(const BufferDescriptor& d);
    // Called by transfer strategies / fabric completions to release a sent
    // buffer back to its pool.
    void release_sent(const BufferDescriptor& d);

    // --- introspection for tests & metrics ---
    TenantState* tenant(TenantId t);
    size_t rbr_size() const { return rbr_.size(); }
    size_t dead_letter_size() const { return dead_letter_.size(); }
    size_t pending_total() const;
    std::vector<QpInfo> qp_snapshot() const;
    uint32_t active_qp_count() const;
    uint64_t recv_posted_total() const { return recv_posted_total_; }
    uint64_t rx_completed_total() const { return rx_completed_total_; }
    void drain_dead_letters();

  private:
    void drain_channels();
    uint32_t run_schedule(IterationReport& r);
    uint32_t run_dwrr_rounds(
        int rounds, const std::function<bool(const BufferDescriptor&)>& emit);
    uint32_t run_fcfs(const std::function<bool(const BufferDescriptor&)>& emit);
    Status send_two_sided(const BufferDescriptor& d, NodeId remote);
    Result<uint64_t> pick_qp(TenantId tenant, NodeId remote);
    void handle_tx_done(const CompletionEntry& ce);
    void emit_metrics(const IterationReport& r);

    NodeId node_;
    Fabric* fabric_;
    MemoryManager* mm_;
    RunStats* stats_;
    EngineConfig cfg_;

    std::map<TenantId, TenantState> tenants_;
    std::map<FnId, NodeId> routes_;
    std::map<FnId, ComchChannel*> channels_;
    std::map<uint64_t, BufferDescriptor> rbr_;          // recv wr_id -> buffer
    std::map<uint64_t, BufferDescriptor> inflight_tx_;  // send wr_id -> buffer
    std::map<std::pair<TenantId, NodeId>, std::vector<uint64_t>> conns_;
    std::deque<BufferDescriptor> dead_letter_;
    std::deque<std::pair<TenantId, BufferDescriptor>> fcfs_queue_;
    std::deque<BufferDescriptor> redeliver_;
    InterNodeTransfer* transfer_ = nullptr;
    std::function<SimTime()> now_fn_;
    std::function<void(const std::string&)> metrics_sink_;
    uint64_t recv_posted_total_ = 0;
    uint64_t rx_completed_total_ = 0;
    uint64_t iteration_count_ = 0;
};

}  // namespace zcdp

#endif
