#ifndef ZCDP_BASELINES_HPP
#define ZCDP_BASELINES_HPP

#include <deque>
#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include "zcdp/clock.hpp"
#include "zcdp/common.hpp"
#include "zcdp/dne.hpp"

namespace zcdp {

enum class TransferMode : uint8_t { two_sided, owdl, owrc_best, owrc_worst };

std::optional<TransferMode> transfer_mode_from_string(const std::string& s);
const char* to_string(TransferMode m);

struct BaselineConfig {
    uint32_t slot_size = 4096 + 32;      // landing-slot bytes (payload + header + flag)
    uint32_t owdl_slots_per_tenant = 4;  // lockable landing buffers at the receiver
    uint32_t owrc_slots_per_tenant = 4;  // staging slots in the RDMA-only pool
    uint64_t poll_interval_ns = 1000;    // receiver flag-poll cadence
    double copy_ns_per_byte = 0.5;       // receiver-side copy cost (OWRC)
    double owrc_worst_penalty = 1.5;     // cold-cache multiplier
    uint64_t lock_backoff_ns = 5000;     // retry delay after a denied acquire
    LinkParams link;                     // same cost model as the fabric
};

// Operation- and copy-count-faithful models of the one-sided alternatives:
// OWDL (one-sided write + distributed lock) and OWRC (one-sided write into an
// RDMA-only staging pool + receiver-side copy). Lock and slot state lives at
// the destination node and is manipulated only by simulated link messages.
//
// Slot image layout written by the link (payload lands at offset 0 so the
// landing buffer can be handed over without another copy):
//   [payload][zero pad][16B descriptor][flag byte]
class OneSidedCoordinator : public InterNodeTransfer {
  public:
    OneSidedCoordinator(SimKernel* kernel, RunStats* stats, TransferMode mode,
                        BaselineConfig cfg);

    void register_engine(Engine* e) { engines_[e->node()] = e; }
    // Arms the per-(tenant, node) landing slots / staging pool at a receiver.
    Status setup_site(TenantId tenant, NodeId dst);

    Status start(Engine& src, const BufferDescriptor& d, NodeId dst) override;

    TransferMode mode() const { return mode_; }
    // at most one holder per lock slot, checkable at any instant
    bool lock_invariant_ok() const;
    size_t stalled_count(TenantId tenant, NodeId dst) const;

  private:
    struct OwdlSlot {
        std::optional<BufferDescriptor> buf;
        std::optional<NodeId> holder;
    };
    struct Site {
        std::vector<OwdlSlot> owdl;
        std::vector<bool> owrc_busy;
        std::vector<uint8_t> staging;  // OWRC RDMA-only pool arena
        std::deque<std::pair<NodeId, BufferDescriptor>> stalled;
    };

    Site& site(TenantId t, NodeId n) { return sites_.at({t, n}); }
    Engine* engine(NodeId n) { return engines_.at(n); }

    void owdl_acquire(NodeId src, BufferDescriptor d, NodeId dst,
                      uint64_t backoff);
    void owdl_write(NodeId src, BufferDescriptor d, NodeId dst, size_t slot);
    void owrc_begin(NodeId src, BufferDescriptor d, NodeId dst);
    void owrc_write(NodeId src, BufferDescriptor d, NodeId dst, size_t slot);
    void owrc_discover(NodeId src, BufferDescriptor d, NodeId dst,
                       size_t slot);
    void rearm_owdl_slot(TenantId tenant, NodeId dst, size_t slot);
    SimTime next_poll_after(SimTime t) const;
    SimTime fenced_arrival(TenantId t, NodeId src, NodeId dst, uint64_t bytes);

    SimKernel* kernel_;
    RunStats* stats_;
    TransferMode mode_;
    BaselineConfig cfg_;
    std::map<NodeId, Engine*> engines_;
    std::map<std::pair<TenantId, NodeId>, Site> sites_;
    std::map<std::tuple<TenantId, NodeId, NodeId>, SimTime> fence_;
    uint64_t lock_violations_ = 0;
};

}  // namespace zcdp

#endif
