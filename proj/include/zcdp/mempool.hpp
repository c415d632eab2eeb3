#ifndef ZCDP_MEMPOOL_HPP
#define ZCDP_MEMPOOL_HPP

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "zcdp/common.hpp"
#include "zcdp/descriptor.hpp"

namespace zcdp {

enum class OwnerKind : uint8_t {
    pool,
    function,
    engine,
    fabric,
    ingress_worker,
};

struct OwnerRef {
    OwnerKind kind = OwnerKind::pool;
    uint32_t id = 0;

    static OwnerRef pool() { return {OwnerKind::pool, 0}; }
    static OwnerRef function(FnId fn) { return {OwnerKind::function, fn}; }
    static OwnerRef engine(NodeId node) { return {OwnerKind::engine, node}; }
    static OwnerRef fabric() { return {OwnerKind::fabric, 0}; }
    static OwnerRef ingress_worker(uint32_t w) {
        return {OwnerKind::ingress_worker, w};
    }

    bool operator==(const OwnerRef&) const = default;
    std::string str() const;
};

// Per-tenant arena of equal-size buffers. Metadata operations (alloc, free,
// transfer) are guarded by a mutex so they are callable from any context;
// payload access is unsynchronized and made safe only by the exclusive
// ownership protocol.
class MemoryPool {
  public:
    MemoryPool(TenantId tenant, NodeId node, uint32_t buffer_count,
               uint32_t buffer_size, RunStats* stats);

    TenantId tenant() const { return tenant_; }
    NodeId node() const { return node_; }
    uint32_t buffer_count() const { return count_; }
    uint32_t buffer_size() const { return size_; }
    uint64_t extent() const { return uint64_t(count_) * size_; }
    const std::string& name_prefix() const { return prefix_; }

    Result<BufferDescriptor> alloc(OwnerRef requester);
    Status free(const BufferDescriptor& d, OwnerRef releaser);
    Status transfer(const BufferDescriptor& d, OwnerRef from, OwnerRef to);

    // Guarded payload access: the accessor must be the current owner.
    // A rejected access increments the ownership-violation counter.
    Result<std::span<uint8_t>> access(const BufferDescriptor& d, OwnerRef who);
    Status write(const BufferDescriptor& d, OwnerRef who,
                 std::span<const uint8_t> data, uint32_t offset = 0);
    Result<std::span<const uint8_t>> read(const BufferDescriptor& d,
                                          OwnerRef who) const;

    // Emulated-DMA paths used by the link layer: exempt from the software
    // copy counter, still bounds-checked.
    Status dma_write(BufferId buf, std::span<const uint8_t> data);
    std::span<uint8_t> raw_slot(BufferId buf);
    Status raw_region_write(uint64_t offset, std::span<const uint8_t> data);
    std::span<const uint8_t> raw_region_read(uint64_t offset, size_t len) const;

    uint32_t free_count() const;
    OwnerRef owner_of(BufferId buf) const;
    uint32_t payload_length(BufferId buf) const;
    void set_payload_length(BufferId buf, uint32_t len);

    // cross-processor map state
    bool exported() const { return exported_; }
    bool mapped() const { return mapped_; }
    void mark_exported() { exported_ = true; }
    void mark_mapped() { mapped_ = true; }

  private:
    bool valid_id(BufferId buf) const { return buf < count_; }

    TenantId tenant_;
    NodeId node_;
    uint32_t count_;
    uint32_t size_;
    std::string prefix_;
    RunStats* stats_;

    mutable std::mutex mu_;
    std::vector<uint8_t> arena_;
    struct Slot {
        OwnerRef owner = OwnerRef::pool();
        uint32_t length = 0;
    };
    std::vector<Slot> slots_;
    std::vector<BufferId> free_list_;  // LIFO
    bool exported_ = false;
    bool mapped_ = false;
};

struct CrossMapHandle {
    TenantId tenant = 0;
    NodeId node = 0;
    NodeId engine = 0;
    bool engine_core = false;
    bool fabric_delivery = false;
};

// Node-local view of all tenant pools plus the function->tenant table used
// to police cross-tenant allocation.
class MemoryManager {
  public:
    MemoryManager(NodeId node, RunStats* stats) : node_(node), stats_(stats) {}

    NodeId node() const { return node_; }

    Result<MemoryPool*> create_pool(TenantId tenant, uint32_t buffer_count,
                                    uint32_t buffer_size);
    MemoryPool* pool(TenantId tenant);
    const MemoryPool* pool(TenantId tenant) const;

    void bind_function(FnId fn, TenantId tenant) { fn_tenant_[fn] = tenant; }
    std::optional<TenantId> tenant_of(FnId fn) const;

    // Allocation with tenant policing: a FUNCTION requester must belong to
    // the pool's tenant. Engine and ingress contexts are trusted.
    Result<BufferDescriptor> alloc(TenantId tenant, OwnerRef requester);

    // Resolves a descriptor to its pool; forged tenant ids are rejected and
    // counted.
    Result<MemoryPool*> resolve(const BufferDescriptor& d);

    Status free(const BufferDescriptor& d, OwnerRef releaser);
    Status transfer(const BufferDescriptor& d, OwnerRef from, OwnerRef to);

    // Cross-processor map/export handshake. The blob is an opaque serialized
    // pool manifest.
    Result<std::vector<uint8_t>> export_pool(TenantId tenant);
    Result<CrossMapHandle> import_pool(std::span<const uint8_t> blob,
                                       NodeId engine);

    std::map<TenantId, std::unique_ptr<MemoryPool>>& pools() { return pools_; }

  private:
    NodeId node_;
    RunStats* stats_;
    std::map<TenantId, std::unique_ptr<MemoryPool>> pools_;
    std::map<FnId, TenantId> fn_tenant_;
};

// Software copy helper: the one sanctioned way to move payload bytes in
// engine/function/ingress code. Increments the copy counter.
Status copy_payload(MemoryPool& dst_pool, const BufferDescriptor& dst,
                    OwnerRef dst_owner, std::span<const uint8_t> src,
                    RunStats* stats);

}  // namespace zcdp

#endif
