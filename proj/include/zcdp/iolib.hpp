#ifndef ZCDP_IOLIB_HPP
#define ZCDP_IOLIB_HPP

#include "zcdp/common.hpp"
#include "zcdp/descriptor.hpp"
#include "zcdp/ipc.hpp"
#include "zcdp/mempool.hpp"

namespace zcdp {

// Intra-node descriptor hand-off: ownership moves sender -> dst function and
// the 16-byte descriptor is enqueued on the destination endpoint. No payload
// bytes traverse the channel.
Status skmsg_send(EndpointRegistry& reg, MemoryManager& mm,
                  const BufferDescriptor& d, OwnerRef sender, RunStats* stats);

// The unified function-facing I/O facade. One context per function; the
// local/remote routing view is read-only from the function's perspective.
class FunctionContext {
  public:
    FunctionContext(FnId fn, TenantId tenant, NodeId node, MemoryManager* mm,
                    EndpointRegistry* reg, Endpoint* endpoint,
                    ComchChannel* comch, RunStats* stats)
        : fn_(fn), tenant_(tenant), node_(node), mm_(mm), reg_(reg),
          endpoint_(endpoint), comch_(comch), stats_(stats) {}

    FnId fn() const { return fn_; }
    TenantId tenant() const { return tenant_; }
    NodeId node() const { return node_; }
    Endpoint* endpoint() const { return endpoint_; }

    void set_local(FnId fn, bool is_local) { intra_route_[fn] = is_local; }

    // send: local destinations go over the sockmap path, remote ones are
    // handed to the engine. Ownership leaves the function either way.
    Status io_send(BufferDescriptor d, FnId dst) {
        d.src_fn = fn_;
        d.dst_fn = dst;
        auto it = intra_route_.find(dst);
        bool local = (dst == fn_) || (it != intra_route_.end() && it->second);
        if (local)
            return skmsg_send(*reg_, *mm_, d, OwnerRef::function(fn_), stats_);
        Status st = mm_->transfer(d, OwnerRef::function(fn_),
                                  OwnerRef::engine(node_));
        if (!st.ok()) return st;
        st = comch_->send(ComchSide::function, d);
        if (!st.ok()) {
            mm_->transfer(d, OwnerRef::engine(node_), OwnerRef::function(fn_));
            return st;
        }
        stats_->fn_exchanges++;
        return Errc::ok;
    }

    // Arrivals from local peers and from the engine merge FIFO-by-arrival on
    // the function's endpoint.
    std::optional<BufferDescriptor> io_recv(Wait wait = Wait::poll) {
        return endpoint_->pop(wait);
    }

    Result<BufferDescriptor> io_get_buffer() {
        return mm_->alloc(tenant_, OwnerRef::function(fn_));
    }
    Status io_put_buffer(const BufferDescriptor& d) {
        return mm_->free(d, OwnerRef::function(fn_));
    }

    Status io_write(const BufferDescriptor& d, std::span<const uint8_t> data,
                    uint32_t offset = 0) {
        auto pool = mm_->resolve(d);
        if (!pool) return pool.error();
        return (*pool)->write(d, OwnerRef::function(fn_), data, offset);
    }
    Result<std::span<const uint8_t>> io_read(const BufferDescriptor& d) {
        auto pool = mm_->resolve(d);
        if (!pool) return pool.error();
        return (*pool)->read(d, OwnerRef::function(fn_));
    }
    // In-place mutable view for owner-side payload transforms (not a copy).
    Result<std::span<uint8_t>> io_access(const BufferDescriptor& d) {
        auto pool = mm_->resolve(d);
        if (!pool) return pool.error();
        return (*pool)->access(d, OwnerRef::function(fn_));
    }

  private:
    FnId fn_;
    TenantId tenant_;
    NodeId node_;
    MemoryManager* mm_;
    EndpointRegistry* reg_;
    Endpoint* endpoint_;
    ComchChannel* comch_;
    RunStats* stats_;
    std::map<FnId, bool> intra_route_;
};

}  // namespace zcdp

#endif
