#include "zcdp/dne.hpp"

#include <algorithm>
#include <sstream>

namespace zcdp {

Engine::Engine(NodeId node, Fabric* fabric, MemoryManager* mm, RunStats* stats,
               EngineConfig cfg)
    : node_(node), fabric_(fabric), mm_(mm), stats_(stats), cfg_(cfg) {}

Status Engine::attach_tenant(TenantId tenant, uint32_t weight) {
    if (tenants_.count(tenant)) return Errc::duplicate_registration;
    if (weight == 0) return Errc::config_invalid;
    TenantState ts;
    ts.id = tenant;
    ts.weight = weight;
    tenants_[tenant] = ts;
    return Errc::ok;
}

Status Engine::map_tenant_pool(TenantId tenant) {
    auto blob = mm_->export_pool(tenant);
    if (!blob) return blob.error();
    auto handle = mm_->import_pool(*blob, node_);
    if (!handle) return handle.error();
    auto region = fabric_->register_memory(tenant, node_);
    if (!region) return region.error();
    TenantState& ts = tenants_.at(tenant);
    for (uint32_t i = 0; i < cfg_.initial_rq_depth; ++i) {
        auto d = mm_->alloc(tenant, OwnerRef::engine(node_));
        if (!d) break;
        auto wr = fabric_->post_recv(node_, tenant, *d, OwnerRef::engine(node_));
        if (!wr) {
            mm_->free(*d, OwnerRef::engine(node_));
            break;
        }
        rbr_[*wr] = *d;
        recv_posted_total_++;
        ts.initial_rq_depth++;
    }
    return Errc::ok;
}

Status Engine::connect_peer(TenantId tenant, NodeId peer) {
    auto key = std::make_pair(tenant, peer);
    for (uint32_t i = 0; i < cfg_.qps_per_peer; ++i) {
        auto qp = fabric_->create_qp(tenant, node_, peer);
        if (!qp) return qp.error();
        conns_[key].push_back(*qp);
    }
    return Errc::ok;
}

Status Engine::register_channel(ComchChannel* ch) {
    if (channels_.count(ch->fn())) return Errc::duplicate_fn;
    channels_[ch->fn()] = ch;
    return Errc::ok;
}

void Engine::sever_channel(FnId fn) {
    auto it = channels_.find(fn);
    if (it != channels_.end()) it->second->sever();
}

TenantState* Engine::tenant(TenantId t) {
    auto it = tenants_.find(t);
    return it == tenants_.end() ? nullptr : &it->second;
}

size_t Engine::pending_total() const {
    size_t n = fcfs_queue_.size();
    for (auto& [id, ts] : tenants_) n += ts.pending_tx.size();
    return n;
}

std::vector<QpInfo> Engine::qp_snapshot() const {
    std::vector<QpInfo> out;
    for (auto& [key, qps] : conns_)
        for (uint64_t id : qps) out.push_back(fabric_->qp_info(id));
    return out;
}

uint32_t Engine::active_qp_count() const {
    uint32_t n = 0;
    for (auto& [key, qps] : conns_)
        for (uint64_t id : qps)
            if (fabric_->qp_info(id).state == QpState::active) n++;
    return n;
}

void Engine::enqueue_tx(const BufferDescriptor& d) {
    if (cfg_.scheduler == SchedulerMode::fcfs)
        fcfs_queue_.emplace_back(d.tenant_id, d);
    else if (auto* ts = tenant(d.tenant_id))
        ts->pending_tx.push_back(d);
    else {
        dead_letter_.push_back(d);
        stats_->dead_letters++;
    }
}

void Engine::drain_channels() {
    for (auto& [fn, ch] : channels_) {
        while (auto d = ch->engine_poll()) enqueue_tx(*d);
    }
}

uint32_t Engine::run_dwrr_rounds(
    int rounds, const std::function<bool(const BufferDescriptor&)>& emit) {
    uint32_t emitted = 0;
    for (int r = 0; r < rounds; ++r) {
        for (auto& [id, ts] : tenants_) {
            if (ts.pending_tx.empty()) {
                ts.deficit = 0;  // idle tenants forfeit credit
                continue;
            }
            ts.deficit += uint64_t(ts.weight) * cfg_.quantum_base;
            while (!ts.pending_tx.empty() &&
                   ts.deficit >= ts.pending_tx.front().length) {
                const BufferDescriptor& head = ts.pending_tx.front();
                if (!emit(head)) goto tenant_blocked;
                ts.deficit -= head.length;
                ts.emitted++;
                ts.emitted_bytes += head.length;
                emitted++;
                ts.pending_tx.pop_front();
            }
            if (ts.pending_tx.empty()) ts.deficit = 0;
        tenant_blocked:;
        }
    }
    return emitted;
}

uint32_t Engine::run_fcfs(
    const std::function<bool(const BufferDescriptor&)>& emit) {
    // Same aggregate service budget as one DWRR pass, spent in arrival order.
    uint64_t budget = 0;
    for (auto& [id, ts] : tenants_)
        budget += uint64_t(ts.weight) * cfg_.quantum_base *
                  uint64_t(cfg_.rounds_per_iteration);
    uint32_t emitted = 0;
    while (!fcfs_queue_.empty()) {
        auto& [tid, d] = fcfs_queue_.front();
        if (d.length > budget) break;
        if (!emit(d)) break;
        budget -= d.length;
        if (auto* ts = tenant(tid)) {
            ts->emitted++;
            ts->emitted_bytes += d.length;
        }
        emitted++;
        fcfs_queue_.pop_front();
    }
    return emitted;
}

std::vector<BufferDescriptor> Engine::dwrr_schedule(int rounds) {
    std::vector<BufferDescriptor> out;
    run_dwrr_rounds(rounds, [&](const BufferDescriptor& d) {
        out.push_back(d);
        return true;
    });
    return out;
}

uint32_t Engine::run_schedule(IterationReport& r) {
    auto emit = [&](const BufferDescriptor& d) {
        Status st = tx_stage(d);
        if (st.ok()) return true;
        if (st.code == Errc::no_route || st.code == Errc::unknown_dst_fn) {
            // descriptor was dead-lettered; count it as consumed
            r.tx_errors++;
            return true;
        }
        r.tx_errors++;
        return false;  // QP pressure: keep the head queued this iteration
    };
    if (cfg_.scheduler == SchedulerMode::fcfs) return run_fcfs(emit);
    uint32_t emitted = run_dwrr_rounds(cfg_.rounds_per_iteration, emit);
    // Work conservation: while work exists and QPs are available, do not end
    // the pass with an idle slot. Bounded by the deficit growth needed for
    // the largest head-of-line message.
    int extra = 0;
    while (emitted == 0 && r.tx_errors == 0 && extra < 4096) {
        bool backlogged = false;
        for (auto& [id, ts] : tenants_)
            if (!ts.pending_tx.empty()) backlogged = true;
        if (!backlogged) break;
        emitted += run_dwrr_rounds(1, emit);
        extra++;
    }
    return emitted;
}

Result<uint64_t> Engine::pick_qp(TenantId tenant, NodeId remote) {
    auto it = conns_.find({tenant, remote});
    if (it == conns_.end() || it->second.empty()) return Errc::no_route;
    uint64_t best = 0;
    uint32_t best_outstanding = UINT32_MAX;
    bool saw_connecting = false;
    bool saw_inactive = false;
    for (uint64_t id : it->second) {
        QpInfo info = fabric_->qp_info(id);
        if (info.state == QpState::connecting) {
            saw_connecting = true;
            continue;
        }
        if (info.state == QpState::active) {
            if (info.outstanding < fabric_->max_outstanding() &&
                info.outstanding < best_outstanding) {
                best_outstanding = info.outstanding;
                best = id;
            }
        } else {
            saw_inactive = true;
        }
    }
    if (best != 0) return best;
    if (saw_inactive) {
        if (active_qp_count() >= cfg_.active_cap)
            return Errc::active_cap_exceeded;
        for (uint64_t id : it->second) {
            if (fabric_->qp_info(id).state == QpState::inactive) {
                fabric_->set_qp_state(id, QpState::active);
                return id;
            }
        }
    }
    return saw_connecting ? Errc::qp_not_ready : Errc::active_cap_exceeded;
}

Status Engine::send_two_sided(const BufferDescriptor& d, NodeId remote) {
    TenantId tenant = d.tenant_id;
    auto qp = pick_qp(tenant, remote);
    if (!qp) return qp.error();
    WorkRequest wr;
    wr.opcode = Opcode::send;
    wr.descriptor = d;
    Status st = fabric_->post_send(*qp, wr, OwnerRef::engine(node_));
    if (!st.ok())
        return st.code == Errc::qp_busy ? Errc::active_cap_exceeded : st.code;
    inflight_tx_[wr.wr_id] = d;
    return Errc::ok;
}

Status Engine::tx_stage(BufferDescriptor d) {
    auto route = routes_.find(d.dst_fn);
    if (route == routes_.end()) {
        dead_letter_.push_back(d);
        stats_->dead_letters++;
        return Errc::no_route;
    }
    if (route->second == node_) return deliver_local(d);
    if (transfer_) return transfer_->start(*this, d, route->second);
    return send_two_sided(d, route->second);
}

Status Engine::deliver_local(BufferDescriptor d) {
    auto ch = channels_.find(d.dst_fn);
    if (ch == channels_.end()) {
        dead_letter_.push_back(d);
        stats_->dead_letters++;
        return Errc::unknown_dst_fn;
    }
    Status st = mm_->transfer(d, OwnerRef::engine(node_),
                              OwnerRef::function(d.dst_fn));
    if (!st.ok()) return st;
    st = ch->second->send(ComchSide::engine, d);
    if (!st.ok()) {
        mm_->transfer(d, OwnerRef::function(d.dst_fn),
                      OwnerRef::engine(node_));
        redeliver_.push_back(d);
        return st;
    }
    stats_->fn_exchanges++;
    return Errc::ok;
}

Status Engine::rx_stage(const CompletionEntry& ce) {
    auto it = rbr_.find(ce.wr_id);
    if (it == rbr_.end()) {
        stats_->rbr_misses++;
        return Errc::rbr_miss;
    }
    BufferDescriptor d = it->second;
    rbr_.erase(it);
    rx_completed_total_++;
    d.length = ce.byte_len;
    d.src_fn = ce.remote_meta.src_fn;
    d.dst_fn = ce.remote_meta.dst_fn;
    d.flags = ce.remote_meta.flags;
    if (auto* ts = tenant(ce.tenant)) ts->cqe_consumed++;
    return deliver_local(d);
}

void Engine::release_sent(const BufferDescriptor& d) {
    mm_->free(d, OwnerRef::engine(node_));
}

void Engine::handle_tx_done(const CompletionEntry& ce) {
    auto it = inflight_tx_.find(ce.wr_id);
    if (it == inflight_tx_.end()) return;  // baseline-managed WR
    BufferDescriptor d = it->second;
    inflight_tx_.erase(it);
    release_sent(d);
}

uint32_t Engine::repost_receive_buffers() {
    uint32_t posted = 0;
    for (auto& [id, ts] : tenants_) {
        while (ts.reposted < ts.cqe_consumed) {
            auto d = mm_->alloc(id, OwnerRef::engine(node_));
            if (!d) break;  // pool dry; retry next iteration
            auto wr = fabric_->post_recv(node_, id, *d, OwnerRef::engine(node_));
            if (!wr) {
                mm_->free(*d, OwnerRef::engine(node_));
                break;
            }
            rbr_[*wr] = *d;
            recv_posted_total_++;
            ts.reposted++;
            posted++;
        }
    }
    return posted;
}

std::pair<uint32_t, uint32_t> Engine::manage_connection_pool() {
    uint32_t deact = 0;
    for (auto& [key, qps] : conns_) {
        for (uint64_t id : qps) {
            QpInfo info = fabric_->qp_info(id);
            if (info.state == QpState::active && info.outstanding == 0) {
                fabric_->set_qp_state(id, QpState::inactive);
                deact++;
            }
        }
    }
    return {0, deact};  // activation happens on demand in tx_stage
}

IterationReport Engine::iterate() {
    IterationReport r;
    iteration_count_++;
    drain_channels();
    r.tx_emitted = run_schedule(r);
    while (!redeliver_.empty()) {
        BufferDescriptor d = redeliver_.front();
        redeliver_.pop_front();
        if (!deliver_local(d).ok()) break;
    }
    for (const CompletionEntry& ce : fabric_->poll_cq(node_, SIZE_MAX)) {
        if (ce.direction == CqDirection::tx_done) {
            handle_tx_done(ce);
        } else {
            if (rx_stage(ce).ok()) r.rx_dispatched++;
        }
    }
    r.reposted = repost_receive_buffers();
    auto [act, deact] = manage_connection_pool();
    r.qp_activations = act;
    r.qp_deactivations = deact;
    if (metrics_sink_) emit_metrics(r);
    return r;
}

void Engine::emit_metrics(const IterationReport& r) {
    std::ostringstream os;
    os << "{\"virtual_time\":" << (now_fn_ ? now_fn_() : 0)
       << ",\"node\":" << node_ << ",\"tx_emitted\":" << r.tx_emitted
       << ",\"rx_dispatched\":" << r.rx_dispatched << ",\"tenants\":{";
    bool first = true;
    for (auto& [id, ts] : tenants_) {
        if (!first) os << ",";
        first = false;
        os << "\"" << id << "\":{\"emitted\":" << ts.emitted
           << ",\"bytes\":" << ts.emitted_bytes
           << ",\"rq_depth\":" << fabric_->rq_depth(node_, id)
           << ",\"deficit\":" << ts.deficit << "}";
    }
    os << "},\"active_qps\":" << active_qp_count() << "}";
    metrics_sink_(os.str());
}

void Engine::drain_dead_letters() {
    while (!dead_letter_.empty()) {
        mm_->free(dead_letter_.front(), OwnerRef::engine(node_));
        dead_letter_.pop_front();
    }
}

}  // namespace zcdp
