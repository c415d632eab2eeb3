#include "zcdp/socket_fabric.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

namespace zcdp {

namespace {

constexpr size_t kFrameHeader = 8 + 2 + 2 + 4;

void put_le(uint8_t* p, uint64_t v, size_t n) {
    for (size_t i = 0; i < n; ++i) p[i] = uint8_t(v >> (8 * i));
}

uint64_t get_le(const uint8_t* p, size_t n) {
    uint64_t v = 0;
    for (size_t i = 0; i < n; ++i) v |= uint64_t(p[i]) << (8 * i);
    return v;
}

bool write_all(int fd, const uint8_t* data, size_t len) {
    while (len > 0) {
        ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
        if (n <= 0) return false;
        data += size_t(n);
        len -= size_t(n);
    }
    return true;
}

bool read_all(int fd, uint8_t* data, size_t len) {
    while (len > 0) {
        ssize_t n = ::recv(fd, data, len, 0);
        if (n <= 0) return false;
        data += size_t(n);
        len -= size_t(n);
    }
    return true;
}

}  // namespace

SocketFabric::SocketFabric(RunStats* stats, FabricConfig cfg)
    : stats_(stats), cfg_(cfg) {}

SocketFabric::~SocketFabric() { shutdown(); }

void SocketFabric::shutdown() {
    if (stopping_.exchange(true)) return;
    {
        std::lock_guard lk(meta_mu_);
        for (auto& [id, qp] : qps_) {
            if (qp.fd >= 0) ::shutdown(qp.fd, SHUT_RDWR);
        }
        for (auto& [n, ns] : nodes_) {
            if (ns->listen_fd >= 0) ::shutdown(ns->listen_fd, SHUT_RDWR);
        }
    }
    for (auto& [n, ns] : nodes_) {
        if (ns->acceptor.joinable()) ns->acceptor.join();
        for (std::thread& t : ns->readers)
            if (t.joinable()) t.join();
    }
    std::lock_guard lk(meta_mu_);
    for (auto& [id, qp] : qps_) {
        if (qp.fd >= 0) ::close(qp.fd);
        qp.fd = -1;
    }
    for (auto& [n, ns] : nodes_) {
        if (ns->listen_fd >= 0) ::close(ns->listen_fd);
        ns->listen_fd = -1;
    }
}

Status SocketFabric::add_node(NodeId node, MemoryManager* mm) {
    auto ns = std::make_unique<NodeState>();
    ns->mm = mm;
    ns->listen_fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (ns->listen_fd < 0) return Errc::io_error;
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(ns->listen_fd, reinterpret_cast<sockaddr*>(&addr),
               sizeof(addr)) < 0 ||
        ::listen(ns->listen_fd, 16) < 0) {
        ::close(ns->listen_fd);
        return Errc::io_error;
    }
    socklen_t alen = sizeof(addr);
    ::getsockname(ns->listen_fd, reinterpret_cast<sockaddr*>(&addr), &alen);
    ns->port = ntohs(addr.sin_port);
    NodeState* raw = ns.get();
    {
        std::lock_guard lk(meta_mu_);
        if (nodes_.count(node)) {
            ::close(ns->listen_fd);
            return Errc::duplicate_registration;
        }
        nodes_[node] = std::move(ns);
    }
    raw->acceptor = std::thread([this, node] { acceptor_loop(node); });
    return Errc::ok;
}

void SocketFabric::acceptor_loop(NodeId node) {
    NodeState* ns;
    {
        std::lock_guard lk(meta_mu_);
        ns = nodes_.at(node).get();
    }
    while (!stopping_.load()) {
        int fd = ::accept(ns->listen_fd, nullptr, nullptr);
        if (fd < 0) break;
        std::lock_guard lk(meta_mu_);
        ns->readers.emplace_back(
            [this, node, fd] { reader_loop(node, fd); });
    }
}

void SocketFabric::reader_loop(NodeId node, int fd) {
    NodeState* ns;
    {
        std::lock_guard lk(meta_mu_);
        ns = nodes_.at(node).get();
    }
    uint8_t header[kFrameHeader];
    while (!stopping_.load() && read_all(fd, header, sizeof(header))) {
        Frame f;
        f.wr_id = get_le(header, 8);
        f.opcode = uint16_t(get_le(header + 8, 2));
        f.tenant = TenantId(get_le(header + 10, 2));
        uint32_t length = uint32_t(get_le(header + 12, 4));
        f.payload.resize(length);
        if (length > 0 && !read_all(fd, f.payload.data(), length)) break;
        std::lock_guard lk(ns->inbox_mu);
        ns->inbox.push_back(std::move(f));
    }
    ::close(fd);
}

Result<MemoryRegionHandle> SocketFabric::register_memory(TenantId tenant,
                                                         NodeId node) {
    std::lock_guard lk(meta_mu_);
    auto it = nodes_.find(node);
    if (it == nodes_.end()) return Errc::unknown_node;
    MemoryPool* pool = it->second->mm->pool(tenant);
    if (!pool) return Errc::unknown_pool;
    if (!pool->mapped()) return Errc::unknown_pool;
    it->second->registered[tenant] = true;
    MemoryRegionHandle h;
    h.region_id = (uint64_t(node) << 32) | tenant;
    h.tenant = tenant;
    h.node = node;
    h.extent = pool->extent();
    return h;
}

Result<uint64_t> SocketFabric::create_qp(TenantId tenant, NodeId local,
                                         NodeId remote) {
    uint16_t port = 0;
    {
        std::lock_guard lk(meta_mu_);
        if (!nodes_.count(local) || !nodes_.count(remote) || local == remote)
            return Errc::unknown_node;
        if (!nodes_.at(local)->mm->pool(tenant)) return Errc::unknown_tenant;
        port = nodes_.at(remote)->port;
    }
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return Errc::io_error;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
        ::close(fd);
        return Errc::io_error;
    }
    std::lock_guard lk(meta_mu_);
    Qp qp;
    qp.id = next_qp_id_++;
    qp.tenant = tenant;
    qp.local = local;
    qp.remote = remote;
    qp.state = QpState::inactive;  // TCP handshake already paid
    qp.fd = fd;
    qps_[qp.id] = qp;
    return qp.id;
}

Status SocketFabric::post_send(uint64_t qp_id, WorkRequest& wr,
                               OwnerRef caller) {
    int fd = -1;
    NodeState* local = nullptr;
    NodeId local_node = 0;
    TenantId tenant = 0;
    {
        std::lock_guard lk(meta_mu_);
        auto it = qps_.find(qp_id);
        if (it == qps_.end()) return Errc::qp_not_ready;
        Qp& qp = it->second;
        if (qp.state == QpState::connecting) return Errc::qp_not_ready;
        if (wr.opcode != Opcode::send) return Errc::mode_disabled;
        if (qp.outstanding >= cfg_.max_outstanding) return Errc::qp_busy;
        if (wr.descriptor.tenant_id != qp.tenant) return Errc::tenant_mismatch;
        fd = qp.fd;
        tenant = qp.tenant;
        local_node = qp.local;
        local = nodes_.at(qp.local).get();
    }
    Status st = local->mm->transfer(wr.descriptor, caller, OwnerRef::fabric());
    if (!st.ok()) return st;
    MemoryPool* pool = local->mm->pool(tenant);
    auto payload = pool->raw_slot(wr.descriptor.buffer_id)
                       .subspan(0, wr.descriptor.length);

    wr.wr_id = local->next_wr_id++;
    wr.tenant = tenant;
    std::vector<uint8_t> frame(kFrameHeader + kDescriptorWireSize +
                               wr.descriptor.length);
    put_le(frame.data(), wr.wr_id, 8);
    put_le(frame.data() + 8, uint64_t(wr.opcode), 2);
    put_le(frame.data() + 10, tenant, 2);
    put_le(frame.data() + 12, kDescriptorWireSize + wr.descriptor.length, 4);
    encode_descriptor(wr.descriptor, frame.data() + kFrameHeader);
    std::memcpy(frame.data() + kFrameHeader + kDescriptorWireSize,
                payload.data(), wr.descriptor.length);
    if (!write_all(fd, frame.data(), frame.size())) {
        local->mm->transfer(wr.descriptor, OwnerRef::fabric(), caller);
        return Errc::disconnected;
    }
    stats_->fabric_data_ops++;
    {
        std::lock_guard lk(meta_mu_);
        auto it = qps_.find(qp_id);
        if (it != qps_.end()) {
            it->second.outstanding++;
            it->second.state = QpState::active;
        }
    }

    // bytes are on the wire: the send completes immediately on this backend,
    // and the buffer goes back to the sending engine
    local->mm->transfer(wr.descriptor, OwnerRef::fabric(),
                        OwnerRef::engine(local_node));
    CompletionEntry ce;
    ce.wr_id = wr.wr_id;
    ce.qp_id = qp_id;
    ce.tenant = tenant;
    ce.direction = CqDirection::tx_done;
    ce.byte_len = wr.descriptor.length;
    ce.remote_meta = wr.descriptor;
    local->cq.push_back(ce);
    return Errc::ok;
}

Result<uint64_t> SocketFabric::post_recv(NodeId node, TenantId tenant,
                                         const BufferDescriptor& d,
                                         OwnerRef caller) {
    NodeState* ns;
    {
        std::lock_guard lk(meta_mu_);
        auto it = nodes_.find(node);
        if (it == nodes_.end()) return Errc::unknown_node;
        ns = it->second.get();
    }
    if (!ns->registered.count(tenant)) return Errc::unknown_tenant;
    if (d.tenant_id != tenant) {
        stats_->cross_tenant_rejects++;
        return Errc::tenant_mismatch;
    }
    Status st = ns->mm->transfer(d, caller, OwnerRef::fabric());
    if (!st.ok()) return st.code;
    uint64_t wr_id = ns->next_wr_id++;
    ns->rqs[tenant].emplace_back(wr_id, d);
    return wr_id;
}

Status SocketFabric::post_write(uint64_t, WorkRequest&, uint64_t, uint32_t,
                                OwnerRef) {
    return Errc::mode_disabled;
}

bool SocketFabric::dispatch_frame(NodeState& ns, NodeId node, Frame&& f) {
    auto& rq = ns.rqs[f.tenant];
    if (rq.empty()) {
        ns.waiting[f.tenant].push_back(std::move(f));  // receiver not ready
        return false;
    }
    auto [wr_id, buf] = rq.front();
    rq.pop_front();
    BufferDescriptor meta = decode_descriptor(f.payload.data());
    std::span<const uint8_t> body(f.payload.data() + kDescriptorWireSize,
                                  f.payload.size() - kDescriptorWireSize);
    MemoryPool* pool = ns.mm->pool(f.tenant);
    pool->dma_write(buf.buffer_id, body);
    ns.mm->transfer(buf, OwnerRef::fabric(), OwnerRef::engine(node));
    CompletionEntry ce;
    ce.wr_id = wr_id;
    ce.tenant = f.tenant;
    ce.direction = CqDirection::rx_done;
    ce.byte_len = uint32_t(body.size());
    ce.remote_meta = meta;
    ns.cq.push_back(ce);
    return true;
}

std::vector<CompletionEntry> SocketFabric::poll_cq(NodeId node,
                                                   size_t max_entries) {
    NodeState* ns;
    {
        std::lock_guard lk(meta_mu_);
        auto it = nodes_.find(node);
        if (it == nodes_.end()) return {};
        ns = it->second.get();
    }
    // first retry frames that stalled on an empty receive queue
    for (auto& [tenant, q] : ns->waiting) {
        while (!q.empty() && !ns->rqs[tenant].empty()) {
            Frame f = std::move(q.front());
            q.pop_front();
            dispatch_frame(*ns, node, std::move(f));
        }
    }
    // then drain the reader inbox on this (the owning) context
    std::deque<Frame> batch;
    {
        std::lock_guard lk(ns->inbox_mu);
        batch.swap(ns->inbox);
    }
    for (Frame& f : batch) dispatch_frame(*ns, node, std::move(f));

    std::vector<CompletionEntry> out;
    while (!ns->cq.empty() && out.size() < max_entries) {
        out.push_back(ns->cq.front());
        ns->cq.pop_front();
        if (out.back().direction == CqDirection::tx_done) {
            std::lock_guard lk(meta_mu_);
            auto it = qps_.find(out.back().qp_id);
            if (it != qps_.end() && it->second.outstanding > 0)
                it->second.outstanding--;
        }
    }
    return out;
}

QpInfo SocketFabric::qp_info(uint64_t qp_id) const {
    std::lock_guard lk(meta_mu_);
    QpInfo info;
    auto it = qps_.find(qp_id);
    if (it == qps_.end()) return info;
    info.qp_id = it->second.id;
    info.tenant = it->second.tenant;
    info.local = it->second.local;
    info.remote = it->second.remote;
    info.state = it->second.state;
    info.outstanding = it->second.outstanding;
    return info;
}

Status SocketFabric::set_qp_state(uint64_t qp_id, QpState s) {
    std::lock_guard lk(meta_mu_);
    auto it = qps_.find(qp_id);
    if (it == qps_.end()) return Errc::qp_not_ready;
    it->second.state = s;
    return Errc::ok;
}

size_t SocketFabric::rq_depth(NodeId node, TenantId tenant) const {
    std::lock_guard lk(meta_mu_);
    auto it = nodes_.find(node);
    if (it == nodes_.end()) return 0;
    auto rq = it->second->rqs.find(tenant);
    return rq == it->second->rqs.end() ? 0 : rq->second.size();
}

size_t SocketFabric::rq_waiting(NodeId node, TenantId tenant) const {
    std::lock_guard lk(meta_mu_);
    auto it = nodes_.find(node);
    if (it == nodes_.end()) return 0;
    auto w = it->second->waiting.find(tenant);
    return w == it->second->waiting.end() ? 0 : w->second.size();
}

uint16_t SocketFabric::node_port(NodeId node) const {
    std::lock_guard lk(meta_mu_);
    auto it = nodes_.find(node);
    return it == nodes_.end() ? 0 : it->second->port;
}

size_t SocketFabric::cq_depth(NodeId node) const {
    std::lock_guard lk(meta_mu_);
    auto it = nodes_.find(node);
    return it == nodes_.end() ? 0 : it->second->cq.size();
}

}  // namespace zcdp
