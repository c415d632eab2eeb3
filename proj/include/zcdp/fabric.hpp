#ifndef ZCDP_FABRIC_HPP
#define ZCDP_FABRIC_HPP

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "zcdp/clock.hpp"
#include "zcdp/common.hpp"
#include "zcdp/descriptor.hpp"
#include "zcdp/mempool.hpp"

namespace zcdp {

enum class Opcode : uint16_t { send = 1, recv = 2, write = 3 };
enum class CqDirection : uint8_t { tx_done, rx_done };
enum class CqStatus : uint8_t { ok, rnr_timeout, disconnected };
enum class QpState : uint8_t { inactive, active, connecting };

struct MemoryRegionHandle {
    uint64_t region_id = 0;
    TenantId tenant = 0;
    NodeId node = 0;
    uint64_t extent = 0;
};

struct WorkRequest {
    uint64_t wr_id = 0;  // assigned at post time, monotonic per node
    Opcode opcode = Opcode::send;
    BufferDescriptor descriptor;
    uint64_t remote_offset = 0;  // WRITE only
    TenantId tenant = 0;
};

struct CompletionEntry {
    uint64_t wr_id = 0;
    uint64_t qp_id = 0;
    TenantId tenant = 0;
    CqDirection direction = CqDirection::tx_done;
    uint32_t byte_len = 0;
    CqStatus status = CqStatus::ok;
    // Emulation of the inline routing header carried with the message: for
    // RX_DONE this holds the sender's descriptor fields (src_fn, dst_fn,
    // flags, length). On the SOCKET backend these arrive as the first 16
    // payload bytes of the frame.
    BufferDescriptor remote_meta;
};

struct QpInfo {
    uint64_t qp_id = 0;
    TenantId tenant = 0;
    NodeId local = 0;
    NodeId remote = 0;
    QpState state = QpState::connecting;
    uint32_t outstanding = 0;
};

struct LinkParams {
    uint64_t base_ns = 2000;            // per-op base latency
    double per_byte_ns = 5.0;           // serialization cost
    uint64_t connect_delay_ns = 20'000'000;  // RC connection setup
    uint64_t rnr_timeout_ns = 50'000'000;    // receiver-not-ready stall bound
    uint64_t delay_for(uint64_t bytes) const {
        return base_ns + uint64_t(per_byte_ns * double(bytes));
    }
};

struct FabricConfig {
    LinkParams link;
    uint32_t max_outstanding = 64;  // per-QP posted-but-incomplete cap
    bool one_sided_enabled = false; // WRITE gate (baseline modes only)
};

struct TraceEvent {
    SimTime time;
    NodeId node;
    std::string kind;
    uint64_t wr_id;
};

// Emulated verbs layer. One shared CQ per node; one shared RQ per
// (tenant, node). Reliable, in-order, exactly-once delivery per QP.
class Fabric {
  public:
    virtual ~Fabric() = default;

    virtual Result<MemoryRegionHandle> register_memory(TenantId tenant,
                                                       NodeId node) = 0;
    virtual Result<uint64_t> create_qp(TenantId tenant, NodeId local,
                                       NodeId remote) = 0;
    virtual Status post_send(uint64_t qp_id, WorkRequest& wr,
                             OwnerRef caller) = 0;
    virtual Result<uint64_t> post_recv(NodeId node, TenantId tenant,
                                       const BufferDescriptor& d,
                                       OwnerRef caller) = 0;
    // slot_size > 0 writes a framed slot image (16B descriptor header, then
    // payload, zero pad, completion flag byte at the slot tail); 0 writes the
    // bare payload bytes.
    virtual Status post_write(uint64_t qp_id, WorkRequest& wr,
                              uint64_t remote_offset, uint32_t slot_size,
                              OwnerRef caller) = 0;
    virtual std::vector<CompletionEntry> poll_cq(NodeId node,
                                                 size_t max_entries) = 0;

    virtual QpInfo qp_info(uint64_t qp_id) const = 0;
    virtual Status set_qp_state(uint64_t qp_id, QpState s) = 0;

    virtual size_t rq_depth(NodeId node, TenantId tenant) const = 0;
    virtual size_t rq_waiting(NodeId node, TenantId tenant) const = 0;
    virtual size_t cq_depth(NodeId node) const = 0;
    virtual uint32_t max_outstanding() const = 0;
};

// Deterministic-simulation backend. Single-threaded across all nodes; all
// cross-node interaction is ordered by the virtual clock.
class SimFabric : public Fabric {
  public:
    SimFabric(SimKernel* kernel, RunStats* stats, FabricConfig cfg);

    void add_node(NodeId node, MemoryManager* mm);

    Result<MemoryRegionHandle> register_memory(TenantId tenant,
                                               NodeId node) override;
    Result<uint64_t> create_qp(TenantId tenant, NodeId local,
                               NodeId remote) override;
    Status post_send(uint64_t qp_id, WorkRequest& wr, OwnerRef caller) override;
    Result<uint64_t> post_recv(NodeId node, TenantId tenant,
                               const BufferDescriptor& d,
                               OwnerRef caller) override;
    Status post_write(uint64_t qp_id, WorkRequest& wr, uint64_t remote_offset,
                      uint32_t slot_size, OwnerRef caller) override;
    std::vector<CompletionEntry> poll_cq(NodeId node,
                                         size_t max_entries) override;

    QpInfo qp_info(uint64_t qp_id) const override;
    Status set_qp_state(uint64_t qp_id, QpState s) override;

    size_t rq_depth(NodeId node, TenantId tenant) const override;
    size_t rq_waiting(NodeId node, TenantId tenant) const override;
    size_t cq_depth(NodeId node) const override;

    void set_trace(std::function<void(const TraceEvent&)> t) {
        trace_ = std::move(t);
    }
    const FabricConfig& config() const { return cfg_; }
    uint32_t max_outstanding() const override { return cfg_.max_outstanding; }

  private:
    struct Qp {
        uint64_t id = 0;
        TenantId tenant = 0;
        NodeId local = 0;
        NodeId remote = 0;
        QpState state = QpState::connecting;
        uint32_t outstanding = 0;
        SimTime next_arrival = 0;  // per-QP in-order delivery fence
    };
    struct WaitingSend {
        uint64_t qp_id;
        uint64_t wr_id;
        NodeId src_node;
        BufferDescriptor descriptor;
        bool matched = false;
    };
    struct RqState {
        std::deque<std::pair<uint64_t, BufferDescriptor>> posted;
        std::deque<std::shared_ptr<WaitingSend>> waiting;
    };
    struct NodeState {
        MemoryManager* mm = nullptr;
        uint64_t next_wr_id = 1;
        std::deque<CompletionEntry> cq;
        std::map<TenantId, RqState> rqs;  // key present == region registered
        std::map<TenantId, MemoryRegionHandle> regions;
    };

    void trace(NodeId node, const char* kind, uint64_t wr_id);
    void deliver(uint64_t qp_id, uint64_t wr_id, BufferDescriptor desc);
    void match(NodeId dst, Qp& qp, uint64_t send_wr_id,
               const BufferDescriptor& send_desc);
    void complete_tx(Qp& qp, uint64_t wr_id, const BufferDescriptor& desc,
                     CqStatus status);
    void drain_waiting(NodeId node, TenantId tenant);

    SimKernel* kernel_;
    RunStats* stats_;
    FabricConfig cfg_;
    std::map<NodeId, NodeState> nodes_;
    std::map<uint64_t, Qp> qps_;
    uint64_t next_qp_id_ = 1;
    std::function<void(const TraceEvent&)> trace_;
};

}  // namespace zcdp

#endif
