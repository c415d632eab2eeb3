#include "zcdp/baselines.hpp"

#include <cassert>

namespace zcdp {

std::optional<TransferMode> transfer_mode_from_string(const std::string& s) {
    if (s == "two_sided") return TransferMode::two_sided;
    if (s == "owdl") return TransferMode::owdl;
    if (s == "owrc_best") return TransferMode::owrc_best;
    if (s == "owrc_worst") return TransferMode::owrc_worst;
    return std::nullopt;
}

const char* to_string(TransferMode m) {
    switch (m) {
        case TransferMode::two_sided: return "two_sided";
        case TransferMode::owdl: return "owdl";
        case TransferMode::owrc_best: return "owrc_best";
        case TransferMode::owrc_worst: return "owrc_worst";
    }
    return "?";
}

OneSidedCoordinator::OneSidedCoordinator(SimKernel* kernel, RunStats* stats,
                                         TransferMode mode, BaselineConfig cfg)
    : kernel_(kernel), stats_(stats), mode_(mode), cfg_(cfg) {}

Status OneSidedCoordinator::setup_site(TenantId tenant, NodeId dst) {
    auto eit = engines_.find(dst);
    if (eit == engines_.end()) return Errc::unknown_node;
    MemoryManager* mm = eit->second->memory();
    MemoryPool* pool = mm->pool(tenant);
    if (!pool) return Errc::unknown_pool;
    Site& s = sites_[{tenant, dst}];
    if (mode_ == TransferMode::owdl) {
        if (pool->buffer_size() < cfg_.slot_size) return Errc::config_invalid;
        s.owdl.resize(cfg_.owdl_slots_per_tenant);
        for (size_t i = 0; i < s.owdl.size(); ++i) rearm_owdl_slot(tenant, dst, i);
    } else if (mode_ == TransferMode::owrc_best ||
               mode_ == TransferMode::owrc_worst) {
        s.owrc_busy.assign(cfg_.owrc_slots_per_tenant, false);
        s.staging.assign(size_t(cfg_.owrc_slots_per_tenant) * cfg_.slot_size, 0);
    }
    return Errc::ok;
}

void OneSidedCoordinator::rearm_owdl_slot(TenantId tenant, NodeId dst,
                                          size_t slot) {
    Site& s = site(tenant, dst);
    MemoryManager* mm = engine(dst)->memory();
    auto d = mm->alloc(tenant, OwnerRef::engine(dst));
    if (!d) return;  // pool dry: slot stays unarmed until the next rearm
    MemoryPool* pool = mm->pool(tenant);
    pool->raw_slot(d->buffer_id)[cfg_.slot_size - 1] = 0;  // clear flag byte
    s.owdl[slot].buf = *d;
}

SimTime OneSidedCoordinator::next_poll_after(SimTime t) const {
    return (t / cfg_.poll_interval_ns + 1) * cfg_.poll_interval_ns;
}

SimTime OneSidedCoordinator::fenced_arrival(TenantId t, NodeId src, NodeId dst,
                                            uint64_t bytes) {
    SimTime& fence = fence_[{t, src, dst}];
    SimTime arrival =
        std::max(kernel_->now() + cfg_.link.delay_for(bytes), fence);
    fence = arrival;
    return arrival;
}

Status OneSidedCoordinator::start(Engine& src, const BufferDescriptor& d,
                                  NodeId dst) {
    if (mode_ == TransferMode::two_sided) return Errc::mode_disabled;
    if (!engines_.count(dst) || !sites_.count({d.tenant_id, dst}))
        return Errc::no_route;
    // The message is committed to the transport from here on: the buffer
    // moves to the link and is released back to the source pool once the
    // remote write completes.
    Status st = src.memory()->transfer(d, OwnerRef::engine(src.node()),
                                       OwnerRef::fabric());
    if (!st.ok()) return st;
    if (mode_ == TransferMode::owdl)
        owdl_acquire(src.node(), d, dst, cfg_.lock_backoff_ns);
    else
        owrc_begin(src.node(), d, dst);
    return Errc::ok;
}

void OneSidedCoordinator::owdl_acquire(NodeId src, BufferDescriptor d,
                                       NodeId dst, uint64_t backoff) {
    stats_->lock_ops++;
    kernel_->after(cfg_.link.base_ns, [this, src, d, dst, backoff] {
        Site& s = site(d.tenant_id, dst);
        for (size_t i = 0; i < s.owdl.size(); ++i) {
            if (s.owdl[i].holder || !s.owdl[i].buf) continue;
            // grant: the holder takes both the lock and the armed landing
            // buffer; a fresh buffer is armed once this one is discovered.
            s.owdl[i].holder = src;
            kernel_->after(cfg_.link.base_ns, [this, src, d, dst, i] {
                owdl_write(src, d, dst, i);
            });
            return;
        }
        // denied: back off at the sender and retry the acquire
        stats_->lock_timeouts++;
        kernel_->after(cfg_.link.base_ns + backoff, [this, src, d, dst,
                                                     backoff] {
            owdl_acquire(src, d, dst, std::min(backoff * 2, backoff * 64));
        });
    });
}

void OneSidedCoordinator::owdl_write(NodeId src, BufferDescriptor d,
                                     NodeId dst, size_t slot) {
    stats_->fabric_data_ops++;
    SimTime arrival = fenced_arrival(d.tenant_id, src, dst, cfg_.slot_size);
    kernel_->at(arrival, [this, src, d, dst, slot] {
        Site& s = site(d.tenant_id, dst);
        // mutual exclusion: the landing write must come from the lock holder
        if (!s.owdl[slot].holder || *s.owdl[slot].holder != src)
            lock_violations_++;
        BufferDescriptor lb = *s.owdl[slot].buf;
        s.owdl[slot].buf.reset();

        // Emulated one-sided write into the landing buffer: payload at offset
        // zero, descriptor header and completion flag at the slot tail.
        Engine* se = engine(src);
        Engine* de = engine(dst);
        MemoryPool* sp = se->memory()->pool(d.tenant_id);
        MemoryPool* dp = de->memory()->pool(d.tenant_id);
        auto payload = sp->raw_slot(d.buffer_id).subspan(0, d.length);
        auto land = dp->raw_slot(lb.buffer_id);
        std::copy(payload.begin(), payload.end(), land.begin());
        encode_descriptor(d, land.data() + cfg_.slot_size - 1 -
                                 kDescriptorWireSize);
        land[cfg_.slot_size - 1] = 1;

        // sender-side completion: buffer back to the source pool, then the
        // fire-and-forget lock release
        se->memory()->transfer(d, OwnerRef::fabric(),
                               OwnerRef::engine(src));
        se->release_sent(d);
        stats_->lock_ops++;
        kernel_->after(cfg_.link.base_ns, [this, d, dst, slot] {
            site(d.tenant_id, dst).owdl[slot].holder.reset();
        });

        // receiver discovers the flag at the next poll boundary
        kernel_->at(next_poll_after(kernel_->now()), [this, d, dst, slot, lb] {
            MemoryPool* pool = engine(dst)->memory()->pool(d.tenant_id);
            if (pool->raw_slot(lb.buffer_id)[cfg_.slot_size - 1] != 1) return;
            stats_->poll_discoveries++;
            BufferDescriptor out = lb;
            out.length = d.length;
            out.src_fn = d.src_fn;
            out.dst_fn = d.dst_fn;
            out.flags = uint16_t(d.flags | kFlagBaseline);
            pool->set_payload_length(lb.buffer_id, d.length);
            engine(dst)->deliver_local(out);
            rearm_owdl_slot(d.tenant_id, dst, slot);
        });
    });
}

void OneSidedCoordinator::owrc_begin(NodeId src, BufferDescriptor d,
                                     NodeId dst) {
    Site& s = site(d.tenant_id, dst);
    for (size_t i = 0; i < s.owrc_busy.size(); ++i) {
        if (s.owrc_busy[i]) continue;
        s.owrc_busy[i] = true;
        owrc_write(src, d, dst, i);
        return;
    }
    // staging pool full: the write stalls until a slot drains
    s.stalled.emplace_back(src, d);
}

void OneSidedCoordinator::owrc_write(NodeId src, BufferDescriptor d,
                                     NodeId dst, size_t slot) {
    stats_->fabric_data_ops++;
    SimTime arrival = fenced_arrival(d.tenant_id, src, dst, cfg_.slot_size);
    kernel_->at(arrival, [this, src, d, dst, slot] {
        Site& s = site(d.tenant_id, dst);
        Engine* se = engine(src);
        MemoryPool* sp = se->memory()->pool(d.tenant_id);
        auto payload = sp->raw_slot(d.buffer_id).subspan(0, d.length);
        uint8_t* img = s.staging.data() + size_t(slot) * cfg_.slot_size;
        std::copy(payload.begin(), payload.end(), img);
        encode_descriptor(d, img + cfg_.slot_size - 1 - kDescriptorWireSize);
        img[cfg_.slot_size - 1] = 1;

        se->memory()->transfer(d, OwnerRef::fabric(), OwnerRef::engine(src));
        se->release_sent(d);

        kernel_->at(next_poll_after(kernel_->now()), [this, src, d, dst,
                                                      slot] {
            owrc_discover(src, d, dst, slot);
        });
    });
}

void OneSidedCoordinator::owrc_discover(NodeId src, BufferDescriptor d,
                                        NodeId dst, size_t slot) {
    stats_->poll_discoveries++;
    Engine* de = engine(dst);
    auto nb = de->memory()->alloc(d.tenant_id, OwnerRef::engine(dst));
    if (!nb) {
        // unified pool dry: retry at the next poll boundary (the staging slot
        // stays occupied, which is exactly the head-of-line cost of OWRC)
        kernel_->after(cfg_.poll_interval_ns, [this, src, d, dst, slot] {
            owrc_discover(src, d, dst, slot);
        });
        return;
    }
    double per_byte = cfg_.copy_ns_per_byte *
                      (mode_ == TransferMode::owrc_worst ? cfg_.owrc_worst_penalty
                                                         : 1.0);
    SimTime done = kernel_->now() + SimTime(per_byte * double(d.length));
    BufferDescriptor target = *nb;
    kernel_->at(done, [this, src, d, dst, slot, target] {
        Site& s = site(d.tenant_id, dst);
        Engine* de = engine(dst);
        MemoryPool* dp = de->memory()->pool(d.tenant_id);
        const uint8_t* img = s.staging.data() + size_t(slot) * cfg_.slot_size;
        copy_payload(*dp, target, OwnerRef::engine(dst),
                     std::span<const uint8_t>(img, d.length), stats_);
        stats_->owrc_copies++;

        BufferDescriptor out = target;
        out.length = d.length;
        out.src_fn = d.src_fn;
        out.dst_fn = d.dst_fn;
        out.flags = uint16_t(d.flags | kFlagBaseline);
        de->deliver_local(out);

        // drain the slot and admit a stalled write, if any
        s.staging[size_t(slot) * cfg_.slot_size + cfg_.slot_size - 1] = 0;
        s.owrc_busy[slot] = false;
        if (!s.stalled.empty()) {
            auto [nsrc, nd] = s.stalled.front();
            s.stalled.pop_front();
            s.owrc_busy[slot] = true;
            owrc_write(nsrc, nd, dst, slot);
        }
    });
}

bool OneSidedCoordinator::lock_invariant_ok() const {
    return lock_violations_ == 0;
}

size_t OneSidedCoordinator::stalled_count(TenantId tenant, NodeId dst) const {
    auto it = sites_.find({tenant, dst});
    return it == sites_.end() ? 0 : it->second.stalled.size();
}

}  // namespace zcdp
