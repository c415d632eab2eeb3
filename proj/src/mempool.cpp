#include "zcdp/mempool.hpp"

#include <cstring>

#include "json.hpp"

namespace zcdp {

const char* to_string(Errc e) {
    switch (e) {
        case Errc::ok: return "OK";
        case Errc::duplicate_registration: return "DUPLICATE_REGISTRATION";
        case Errc::unknown_pool: return "UNKNOWN_POOL";
        case Errc::unknown_tenant: return "UNKNOWN_TENANT";
        case Errc::unknown_node: return "UNKNOWN_NODE";
        case Errc::not_owner: return "NOT_OWNER";
        case Errc::qp_not_ready: return "QP_NOT_READY";
        case Errc::qp_busy: return "QP_BUSY";
        case Errc::rnr_timeout: return "RNR_TIMEOUT";
        case Errc::tenant_mismatch: return "TENANT_MISMATCH";
        case Errc::offset_out_of_range: return "OFFSET_OUT_OF_RANGE";
        case Errc::mode_disabled: return "MODE_DISABLED";
        case Errc::duplicate_pool: return "DUPLICATE_POOL";
        case Errc::zero_capacity: return "ZERO_CAPACITY";
        case Errc::pool_exhausted: return "POOL_EXHAUSTED";
        case Errc::double_free: return "DOUBLE_FREE";
        case Errc::malformed_blob: return "MALFORMED_BLOB";
        case Errc::already_mapped: return "ALREADY_MAPPED";
        case Errc::no_route: return "NO_ROUTE";
        case Errc::active_cap_exceeded: return "ACTIVE_CAP_EXCEEDED";
        case Errc::rbr_miss: return "RBR_MISS";
        case Errc::unknown_dst_fn: return "UNKNOWN_DST_FN";
        case Errc::duplicate_fn: return "DUPLICATE_FN";
        case Errc::not_found: return "NOT_FOUND";
        case Errc::channel_full: return "CHANNEL_FULL";
        case Errc::disconnected: return "DISCONNECTED";
        case Errc::lock_timeout: return "LOCK_TIMEOUT";
        case Errc::rdma_pool_exhausted: return "RDMA_POOL_EXHAUSTED";
        case Errc::stale_response: return "STALE_RESPONSE";
        case Errc::config_invalid: return "CONFIG_INVALID";
        case Errc::io_error: return "IO_ERROR";
    }
    return "UNKNOWN";
}

std::string OwnerRef::str() const {
    switch (kind) {
        case OwnerKind::pool: return "POOL";
        case OwnerKind::function: return "FUNCTION(" + std::to_string(id) + ")";
        case OwnerKind::engine: return "ENGINE(" + std::to_string(id) + ")";
        case OwnerKind::fabric: return "FABRIC";
        case OwnerKind::ingress_worker:
            return "INGRESS_WORKER(" + std::to_string(id) + ")";
    }
    return "?";
}

MemoryPool::MemoryPool(TenantId tenant, NodeId node, uint32_t buffer_count,
                       uint32_t buffer_size, RunStats* stats)
    : tenant_(tenant),
      node_(node),
      count_(buffer_count),
      size_(buffer_size),
      prefix_("tenant_" + std::to_string(tenant) + "_node_" +
              std::to_string(node)),
      stats_(stats) {
    arena_.resize(uint64_t(count_) * size_);
    slots_.resize(count_);
    free_list_.reserve(count_);
    // LIFO free list, top of stack = buffer 0
    for (uint32_t i = count_; i > 0; --i) free_list_.push_back(i - 1);
}

Result<BufferDescriptor> MemoryPool::alloc(OwnerRef requester) {
    std::lock_guard lk(mu_);
    if (free_list_.empty()) return Errc::pool_exhausted;
    BufferId id = free_list_.back();
    free_list_.pop_back();
    slots_[id].owner = requester;
    slots_[id].length = 0;
    BufferDescriptor d;
    d.tenant_id = tenant_;
    d.buffer_id = id;
    d.length = 0;
    return d;
}

Status MemoryPool::free(const BufferDescriptor& d, OwnerRef releaser) {
    std::lock_guard lk(mu_);
    if (!valid_id(d.buffer_id)) {
        stats_->ownership_violations++;
        return Errc::not_owner;
    }
    Slot& s = slots_[d.buffer_id];
    if (s.owner == OwnerRef::pool()) {
        stats_->double_frees++;
        return Errc::double_free;
    }
    if (!(s.owner == releaser)) {
        stats_->ownership_violations++;
        return Errc::not_owner;
    }
    s.owner = OwnerRef::pool();
    s.length = 0;
    free_list_.push_back(d.buffer_id);
    return Errc::ok;
}

Status MemoryPool::transfer(const BufferDescriptor& d, OwnerRef from,
                            OwnerRef to) {
    std::lock_guard lk(mu_);
    if (!valid_id(d.buffer_id) || !(slots_[d.buffer_id].owner == from)) {
        stats_->ownership_violations++;
        return Errc::not_owner;
    }
    slots_[d.buffer_id].owner = to;
    return Errc::ok;
}

Result<std::span<uint8_t>> MemoryPool::access(const BufferDescriptor& d,
                                              OwnerRef who) {
    std::lock_guard lk(mu_);
    if (!valid_id(d.buffer_id) || !(slots_[d.buffer_id].owner == who)) {
        stats_->ownership_violations++;
        return Errc::not_owner;
    }
    return std::span<uint8_t>(arena_.data() + uint64_t(d.buffer_id) * size_,
                              size_);
}

Status MemoryPool::write(const BufferDescriptor& d, OwnerRef who,
                         std::span<const uint8_t> data, uint32_t offset) {
    auto span = access(d, who);
    if (!span) return span.error();
    if (offset + data.size() > size_) return Errc::offset_out_of_range;
    std::memcpy(span->data() + offset, data.data(), data.size());
    {
        std::lock_guard lk(mu_);
        uint32_t end = offset + uint32_t(data.size());
        if (end > slots_[d.buffer_id].length) slots_[d.buffer_id].length = end;
    }
    return Errc::ok;
}

Result<std::span<const uint8_t>> MemoryPool::read(const BufferDescriptor& d,
                                                  OwnerRef who) const {
    std::lock_guard lk(mu_);
    if (!valid_id(d.buffer_id) || !(slots_[d.buffer_id].owner == who)) {
        stats_->ownership_violations++;
        return Errc::not_owner;
    }
    return std::span<const uint8_t>(
        arena_.data() + uint64_t(d.buffer_id) * size_,
        slots_[d.buffer_id].length);
}

Status MemoryPool::dma_write(BufferId buf, std::span<const uint8_t> data) {
    if (!valid_id(buf) || data.size() > size_) return Errc::offset_out_of_range;
    std::memcpy(arena_.data() + uint64_t(buf) * size_, data.data(),
                data.size());
    std::lock_guard lk(mu_);
    slots_[buf].length = uint32_t(data.size());
    return Errc::ok;
}

std::span<uint8_t> MemoryPool::raw_slot(BufferId buf) {
    return {arena_.data() + uint64_t(buf) * size_, size_};
}

Status MemoryPool::raw_region_write(uint64_t offset,
                                    std::span<const uint8_t> data) {
    if (offset + data.size() > arena_.size()) return Errc::offset_out_of_range;
    std::memcpy(arena_.data() + offset, data.data(), data.size());
    return Errc::ok;
}

std::span<const uint8_t> MemoryPool::raw_region_read(uint64_t offset,
                                                     size_t len) const {
    if (offset + len > arena_.size()) return {};
    return {arena_.data() + offset, len};
}

uint32_t MemoryPool::free_count() const {
    std::lock_guard lk(mu_);
    return uint32_t(free_list_.size());
}

OwnerRef MemoryPool::owner_of(BufferId buf) const {
    std::lock_guard lk(mu_);
    return valid_id(buf) ? slots_[buf].owner : OwnerRef::pool();
}

uint32_t MemoryPool::payload_length(BufferId buf) const {
    std::lock_guard lk(mu_);
    return valid_id(buf) ? slots_[buf].length : 0;
}

void MemoryPool::set_payload_length(BufferId buf, uint32_t len) {
    std::lock_guard lk(mu_);
    if (valid_id(buf)) slots_[buf].length = len;
}

Result<MemoryPool*> MemoryManager::create_pool(TenantId tenant,
                                               uint32_t buffer_count,
                                               uint32_t buffer_size) {
    if (pools_.count(tenant)) return Errc::duplicate_pool;
    if (buffer_count == 0 || buffer_size == 0) return Errc::zero_capacity;
    auto pool = std::make_unique<MemoryPool>(tenant, node_, buffer_count,
                                             buffer_size, stats_);
    MemoryPool* p = pool.get();
    pools_[tenant] = std::move(pool);
    return p;
}

MemoryPool* MemoryManager::pool(TenantId tenant) {
    auto it = pools_.find(tenant);
    return it == pools_.end() ? nullptr : it->second.get();
}

const MemoryPool* MemoryManager::pool(TenantId tenant) const {
    auto it = pools_.find(tenant);
    return it == pools_.end() ? nullptr : it->second.get();
}

std::optional<TenantId> MemoryManager::tenant_of(FnId fn) const {
    auto it = fn_tenant_.find(fn);
    if (it == fn_tenant_.end()) return std::nullopt;
    return it->second;
}

Result<BufferDescriptor> MemoryManager::alloc(TenantId tenant,
                                              OwnerRef requester) {
    MemoryPool* p = pool(tenant);
    if (!p) return Errc::unknown_pool;
    if (requester.kind == OwnerKind::function) {
        auto t = tenant_of(FnId(requester.id));
        if (!t || *t != tenant) {
            stats_->cross_tenant_rejects++;
            return Errc::tenant_mismatch;
        }
    }
    return p->alloc(requester);
}

Result<MemoryPool*> MemoryManager::resolve(const BufferDescriptor& d) {
    MemoryPool* p = pool(d.tenant_id);
    if (!p || d.buffer_id >= p->buffer_count()) {
        stats_->cross_tenant_rejects++;
        return Errc::tenant_mismatch;
    }
    return p;
}

Status MemoryManager::free(const BufferDescriptor& d, OwnerRef releaser) {
    auto p = resolve(d);
    if (!p) return p.error();
    return (*p)->free(d, releaser);
}

Status MemoryManager::transfer(const BufferDescriptor& d, OwnerRef from,
                               OwnerRef to) {
    auto p = resolve(d);
    if (!p) return p.error();
    return (*p)->transfer(d, from, to);
}

Result<std::vector<uint8_t>> MemoryManager::export_pool(TenantId tenant) {
    MemoryPool* p = pool(tenant);
    if (!p) return Errc::unknown_pool;
    nlohmann::json j;
    j["magic"] = "zcdp-pool-export";
    j["tenant"] = tenant;
    j["node"] = node_;
    j["buffer_count"] = p->buffer_count();
    j["buffer_size"] = p->buffer_size();
    j["prefix"] = p->name_prefix();
    p->mark_exported();
    std::string s = j.dump();
    return std::vector<uint8_t>(s.begin(), s.end());
}

Result<CrossMapHandle> MemoryManager::import_pool(std::span<const uint8_t> blob,
                                                  NodeId engine) {
    nlohmann::json j = nlohmann::json::parse(
        std::string(blob.begin(), blob.end()), nullptr, false);
    if (j.is_discarded() || !j.is_object() || j.value("magic", "") != "zcdp-pool-export" ||
        !j.contains("tenant") || !j.contains("buffer_count") ||
        !j.contains("buffer_size")) {
        return Errc::malformed_blob;
    }
    TenantId tenant = j["tenant"].get<TenantId>();
    MemoryPool* p = pool(tenant);
    if (!p || !p->exported()) return Errc::malformed_blob;
    if (j["buffer_count"].get<uint32_t>() != p->buffer_count() ||
        j["buffer_size"].get<uint32_t>() != p->buffer_size()) {
        return Errc::malformed_blob;
    }
    if (p->mapped()) return Errc::already_mapped;
    p->mark_mapped();
    CrossMapHandle h;
    h.tenant = tenant;
    h.node = node_;
    h.engine = engine;
    h.engine_core = true;
    h.fabric_delivery = true;
    return h;
}

Status copy_payload(MemoryPool& dst_pool, const BufferDescriptor& dst,
                    OwnerRef dst_owner, std::span<const uint8_t> src,
                    RunStats* stats) {
    Status st = dst_pool.write(dst, dst_owner, src);
    if (st.ok()) stats->sw_copies++;
    return st;
}

}  // namespace zcdp
