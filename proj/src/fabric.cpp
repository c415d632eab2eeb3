#include "zcdp/fabric.hpp"

#include <algorithm>
#include <cstring>

namespace zcdp {

SimFabric::SimFabric(SimKernel* kernel, RunStats* stats, FabricConfig cfg)
    : kernel_(kernel), stats_(stats), cfg_(cfg) {}

void SimFabric::add_node(NodeId node, MemoryManager* mm) {
    nodes_[node].mm = mm;
}

void SimFabric::trace(NodeId node, const char* kind, uint64_t wr_id) {
    if (trace_) trace_({kernel_->now(), node, kind, wr_id});
}

Result<MemoryRegionHandle> SimFabric::register_memory(TenantId tenant,
                                                      NodeId node) {
    auto it = nodes_.find(node);
    if (it == nodes_.end()) return Errc::unknown_node;
    NodeState& ns = it->second;
    MemoryPool* pool = ns.mm->pool(tenant);
    if (!pool || !pool->mapped()) return Errc::unknown_pool;
    if (ns.regions.count(tenant)) return Errc::duplicate_registration;
    MemoryRegionHandle h;
    h.region_id = (uint64_t(node) << 32) | tenant;
    h.tenant = tenant;
    h.node = node;
    h.extent = pool->extent();
    ns.regions[tenant] = h;
    ns.rqs[tenant];  // create the tenant's shared RQ
    return h;
}

Result<uint64_t> SimFabric::create_qp(TenantId tenant, NodeId local,
                                      NodeId remote) {
    if (local == remote) return Errc::unknown_node;
    auto li = nodes_.find(local);
    auto ri = nodes_.find(remote);
    if (li == nodes_.end() || ri == nodes_.end()) return Errc::unknown_node;
    if (!li->second.regions.count(tenant) || !ri->second.regions.count(tenant))
        return Errc::unknown_tenant;
    uint64_t id = next_qp_id_++;
    Qp& qp = qps_[id];
    qp.id = id;
    qp.tenant = tenant;
    qp.local = local;
    qp.remote = remote;
    qp.state = QpState::connecting;
    kernel_->after(cfg_.link.connect_delay_ns, [this, id] {
        auto it = qps_.find(id);
        if (it != qps_.end() && it->second.state == QpState::connecting)
            it->second.state = QpState::inactive;
    });
    return id;
}

Status SimFabric::post_send(uint64_t qp_id, WorkRequest& wr, OwnerRef caller) {
    auto it = qps_.find(qp_id);
    if (it == qps_.end()) return Errc::qp_not_ready;
    Qp& qp = it->second;
    if (qp.state == QpState::connecting) return Errc::qp_not_ready;
    if (wr.opcode != Opcode::send) return Errc::mode_disabled;
    if (qp.outstanding >= cfg_.max_outstanding) return Errc::qp_busy;
    NodeState& local = nodes_[qp.local];
    Status st = local.mm->transfer(wr.descriptor, caller, OwnerRef::fabric());
    if (!st.ok()) return st;

    wr.wr_id = local.next_wr_id++;
    wr.tenant = qp.tenant;
    qp.outstanding++;
    qp.state = QpState::active;
    stats_->fabric_data_ops++;
    trace(qp.local, "post_send", wr.wr_id);

    SimTime arrival = std::max(
        kernel_->now() + cfg_.link.delay_for(wr.descriptor.length),
        qp.next_arrival);
    qp.next_arrival = arrival;
    BufferDescriptor desc = wr.descriptor;
    uint64_t wr_id = wr.wr_id;
    kernel_->at(arrival, [this, qp_id, wr_id, desc] {
        deliver(qp_id, wr_id, desc);
    });
    return Errc::ok;
}

void SimFabric::deliver(uint64_t qp_id, uint64_t wr_id,
                        BufferDescriptor desc) {
    Qp& qp = qps_.at(qp_id);
    NodeState& dst = nodes_[qp.remote];
    RqState& rq = dst.rqs[qp.tenant];
    trace(qp.remote, "arrival", wr_id);
    if (!rq.posted.empty()) {
        match(qp.remote, qp, wr_id, desc);
        return;
    }
    auto w = std::make_shared<WaitingSend>();
    w->qp_id = qp_id;
    w->wr_id = wr_id;
    w->src_node = qp.local;
    w->descriptor = desc;
    rq.waiting.push_back(w);
    kernel_->after(cfg_.link.rnr_timeout_ns, [this, w, qp_id] {
        if (w->matched) return;
        w->matched = true;
        Qp& q = qps_.at(qp_id);
        RqState& r = nodes_[q.remote].rqs[q.tenant];
        std::erase(r.waiting, w);
        trace(q.local, "rnr_timeout", w->wr_id);
        stats_->rnr_timeouts++;
        complete_tx(q, w->wr_id, w->descriptor, CqStatus::rnr_timeout);
    });
}

void SimFabric::match(NodeId dst_node, Qp& qp, uint64_t send_wr_id,
                      const BufferDescriptor& send_desc) {
    NodeState& dst = nodes_[dst_node];
    RqState& rq = dst.rqs[qp.tenant];
    auto [recv_wr_id, recv_desc] = rq.posted.front();
    rq.posted.pop_front();

    // Emulated DMA: move payload from the sender's buffer into the matched
    // receive buffer. Exempt from the software copy counter.
    NodeState& src = nodes_[qp.local];
    MemoryPool* src_pool = src.mm->pool(send_desc.tenant_id);
    MemoryPool* dst_pool = dst.mm->pool(recv_desc.tenant_id);
    auto payload = src_pool->raw_slot(send_desc.buffer_id)
                       .subspan(0, send_desc.length);
    dst_pool->dma_write(recv_desc.buffer_id, payload);
    dst.mm->transfer(recv_desc, OwnerRef::fabric(),
                     OwnerRef::engine(dst_node));

    CompletionEntry rx;
    rx.wr_id = recv_wr_id;
    rx.qp_id = qp.id;
    rx.tenant = qp.tenant;
    rx.direction = CqDirection::rx_done;
    rx.byte_len = send_desc.length;
    rx.status = CqStatus::ok;
    rx.remote_meta = send_desc;
    dst.cq.push_back(rx);
    trace(dst_node, "rx_done", recv_wr_id);

    complete_tx(qp, send_wr_id, send_desc, CqStatus::ok);
}

void SimFabric::complete_tx(Qp& qp, uint64_t wr_id,
                            const BufferDescriptor& desc, CqStatus status) {
    NodeState& src = nodes_[qp.local];
    src.mm->transfer(desc, OwnerRef::fabric(), OwnerRef::engine(qp.local));
    qp.outstanding--;
    CompletionEntry tx;
    tx.wr_id = wr_id;
    tx.qp_id = qp.id;
    tx.tenant = qp.tenant;
    tx.direction = CqDirection::tx_done;
    tx.byte_len = desc.length;
    tx.status = status;
    tx.remote_meta = desc;
    src.cq.push_back(tx);
    trace(qp.local, status == CqStatus::ok ? "tx_done" : "tx_error", wr_id);
}

Result<uint64_t> SimFabric::post_recv(NodeId node, TenantId tenant,
                                      const BufferDescriptor& d,
                                      OwnerRef caller) {
    auto it = nodes_.find(node);
    if (it == nodes_.end()) return Errc::unknown_node;
    NodeState& ns = it->second;
    if (!ns.regions.count(tenant)) return Errc::unknown_tenant;
    if (d.tenant_id != tenant) {
        stats_->cross_tenant_rejects++;
        return Errc::tenant_mismatch;
    }
    Status st = ns.mm->transfer(d, caller, OwnerRef::fabric());
    if (!st.ok()) return st.code;
    uint64_t wr_id = ns.next_wr_id++;
    ns.rqs[tenant].posted.emplace_back(wr_id, d);
    trace(node, "post_recv", wr_id);
    drain_waiting(node, tenant);
    return wr_id;
}

void SimFabric::drain_waiting(NodeId node, TenantId tenant) {
    RqState& rq = nodes_[node].rqs[tenant];
    while (!rq.posted.empty() && !rq.waiting.empty()) {
        auto w = rq.waiting.front();
        rq.waiting.pop_front();
        if (w->matched) continue;
        w->matched = true;
        match(node, qps_.at(w->qp_id), w->wr_id, w->descriptor);
    }
}

Status SimFabric::post_write(uint64_t qp_id, WorkRequest& wr,
                             uint64_t remote_offset, uint32_t slot_size,
                             OwnerRef caller) {
    if (!cfg_.one_sided_enabled) return Errc::mode_disabled;
    auto it = qps_.find(qp_id);
    if (it == qps_.end()) return Errc::qp_not_ready;
    Qp& qp = it->second;
    if (qp.state == QpState::connecting) return Errc::qp_not_ready;
    if (wr.opcode != Opcode::write) return Errc::mode_disabled;
    NodeState& dst = nodes_[qp.remote];
    auto reg = dst.regions.find(qp.tenant);
    if (reg == dst.regions.end()) return Errc::unknown_tenant;
    uint64_t span = slot_size ? slot_size : wr.descriptor.length;
    if (slot_size && wr.descriptor.length + kDescriptorWireSize + 1 > slot_size)
        return Errc::offset_out_of_range;
    if (remote_offset + span > reg->second.extent)
        return Errc::offset_out_of_range;

    NodeState& local = nodes_[qp.local];
    Status st = local.mm->transfer(wr.descriptor, caller, OwnerRef::fabric());
    if (!st.ok()) return st;
    wr.wr_id = local.next_wr_id++;
    wr.tenant = qp.tenant;
    qp.outstanding++;
    qp.state = QpState::active;
    stats_->fabric_data_ops++;
    trace(qp.local, "post_write", wr.wr_id);

    SimTime arrival =
        std::max(kernel_->now() + cfg_.link.delay_for(span), qp.next_arrival);
    qp.next_arrival = arrival;
    BufferDescriptor desc = wr.descriptor;
    uint64_t wr_id = wr.wr_id;
    kernel_->at(arrival, [this, qp_id, wr_id, desc, remote_offset, slot_size] {
        Qp& q = qps_.at(qp_id);
        NodeState& d = nodes_[q.remote];
        MemoryPool* dst_pool = d.mm->pool(q.tenant);
        MemoryPool* src_pool = nodes_[q.local].mm->pool(desc.tenant_id);
        auto payload =
            src_pool->raw_slot(desc.buffer_id).subspan(0, desc.length);
        if (slot_size == 0) {
            dst_pool->raw_region_write(remote_offset, payload);
        } else {
            // Framed slot image: descriptor header, payload, pad, flag byte.
            std::vector<uint8_t> image(slot_size, 0);
            encode_descriptor(desc, image.data());
            std::memcpy(image.data() + kDescriptorWireSize, payload.data(),
                        payload.size());
            image[slot_size - 1] = 1;
            dst_pool->raw_region_write(remote_offset, image);
        }
        trace(q.remote, "write_arrival", wr_id);
        complete_tx(q, wr_id, desc, CqStatus::ok);
    });
    return Errc::ok;
}

std::vector<CompletionEntry> SimFabric::poll_cq(NodeId node,
                                                size_t max_entries) {
    std::vector<CompletionEntry> out;
    auto it = nodes_.find(node);
    if (it == nodes_.end()) return out;
    auto& cq = it->second.cq;
    while (!cq.empty() && out.size() < max_entries) {
        out.push_back(cq.front());
        cq.pop_front();
    }
    return out;
}

QpInfo SimFabric::qp_info(uint64_t qp_id) const {
    QpInfo info;
    auto it = qps_.find(qp_id);
    if (it == qps_.end()) return info;
    const Qp& qp = it->second;
    info.qp_id = qp.id;
    info.tenant = qp.tenant;
    info.local = qp.local;
    info.remote = qp.remote;
    info.state = qp.state;
    info.outstanding = qp.outstanding;
    return info;
}

Status SimFabric::set_qp_state(uint64_t qp_id, QpState s) {
    auto it = qps_.find(qp_id);
    if (it == qps_.end()) return Errc::qp_not_ready;
    if (it->second.state == QpState::connecting) return Errc::qp_not_ready;
    it->second.state = s;
    return Errc::ok;
}

size_t SimFabric::rq_depth(NodeId node, TenantId tenant) const {
    auto it = nodes_.find(node);
    if (it == nodes_.end()) return 0;
    auto rq = it->second.rqs.find(tenant);
    return rq == it->second.rqs.end() ? 0 : rq->second.posted.size();
}

size_t SimFabric::rq_waiting(NodeId node, TenantId tenant) const {
    auto it = nodes_.find(node);
    if (it == nodes_.end()) return 0;
    auto rq = it->second.rqs.find(tenant);
    return rq == it->second.rqs.end() ? 0 : rq->second.waiting.size();
}

size_t SimFabric::cq_depth(NodeId node) const {
    auto it = nodes_.find(node);
    return it == nodes_.end() ? 0 : it->second.cq.size();
}

}  // namespace zcdp
