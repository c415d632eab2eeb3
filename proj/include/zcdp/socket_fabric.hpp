#ifndef ZCDP_SOCKET_FABRIC_HPP
#define ZCDP_SOCKET_FABRIC_HPP

#include <atomic>
#include <deque>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

#include "zcdp/fabric.hpp"

namespace zcdp {

// Loopback-TCP verbs backend. Each node owns a listener on 127.0.0.1 and one
// independent engine context; nodes interact only through framed byte
// streams. Frame layout (little-endian): 8-byte wr_id, 2-byte opcode, 2-byte
// tenant_id, 4-byte length, then `length` payload bytes. The payload starts
// with the sender's 16-byte descriptor (the inline routing header), followed
// by the message body.
//
// Concurrency contract: every verbs call for a node (post_send, post_recv,
// poll_cq) must come from that node's engine context. Background reader
// threads only move raw frames into a per-node inbox; buffer matching, pool
// writes, and completion generation all happen inside poll_cq on the owning
// context. Shared counters (RunStats) are the only other cross-context state.
class SocketFabric : public Fabric {
  public:
    SocketFabric(RunStats* stats, FabricConfig cfg);
    ~SocketFabric() override;

    Status add_node(NodeId node, MemoryManager* mm);
    void shutdown();

    Result<MemoryRegionHandle> register_memory(TenantId tenant,
                                               NodeId node) override;
    Result<uint64_t> create_qp(TenantId tenant, NodeId local,
                               NodeId remote) override;
    Status post_send(uint64_t qp_id, WorkRequest& wr, OwnerRef caller) override;
    Result<uint64_t> post_recv(NodeId node, TenantId tenant,
                               const BufferDescriptor& d,
                               OwnerRef caller) override;
    // One-sided WRITE is not offered on the socket backend.
    Status post_write(uint64_t qp_id, WorkRequest& wr, uint64_t remote_offset,
                      uint32_t slot_size, OwnerRef caller) override;
    std::vector<CompletionEntry> poll_cq(NodeId node,
                                         size_t max_entries) override;

    QpInfo qp_info(uint64_t qp_id) const override;
    Status set_qp_state(uint64_t qp_id, QpState s) override;

    size_t rq_depth(NodeId node, TenantId tenant) const override;
    size_t rq_waiting(NodeId node, TenantId tenant) const override;
    size_t cq_depth(NodeId node) const override;
    uint32_t max_outstanding() const override { return cfg_.max_outstanding; }
    uint16_t node_port(NodeId node) const;  // loopback listener port

  private:
    struct Frame {
        uint64_t wr_id = 0;
        uint16_t opcode = 0;
        TenantId tenant = 0;
        std::vector<uint8_t> payload;
    };
    struct Qp {
        uint64_t id = 0;
        TenantId tenant = 0;
        NodeId local = 0;
        NodeId remote = 0;
        QpState state = QpState::connecting;
        uint32_t outstanding = 0;
        int fd = -1;
    };
    struct NodeState {
        MemoryManager* mm = nullptr;
        int listen_fd = -1;
        uint16_t port = 0;
        std::thread acceptor;
        std::vector<std::thread> readers;
        std::mutex inbox_mu;
        std::deque<Frame> inbox;  // reader threads -> engine context
        // engine-context-only state below
        uint64_t next_wr_id = 1;
        std::deque<CompletionEntry> cq;
        std::map<TenantId,
                 std::deque<std::pair<uint64_t, BufferDescriptor>>> rqs;
        std::map<TenantId, std::deque<Frame>> waiting;  // RNR holdover
        std::map<TenantId, bool> registered;
    };

    void acceptor_loop(NodeId node);
    void reader_loop(NodeId node, int fd);
    bool dispatch_frame(NodeState& ns, NodeId node, Frame&& f);

    RunStats* stats_;
    FabricConfig cfg_;
    mutable std::mutex meta_mu_;  // guards qps_ map shape and node lookup
    std::map<NodeId, std::unique_ptr<NodeState>> nodes_;
    std::map<uint64_t, Qp> qps_;
    uint64_t next_qp_id_ = 1;
    std::atomic<bool> stopping_{false};
};

}  // namespace zcdp

#endif
