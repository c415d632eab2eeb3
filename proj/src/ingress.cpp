#include "zcdp/ingress.hpp"

#include <algorithm>

namespace zcdp {

uint32_t rss_hash(const ConnKey& k) {
    uint8_t bytes[12];
    auto put32 = [](uint8_t* p, uint32_t v) {
        p[0] = uint8_t(v);
        p[1] = uint8_t(v >> 8);
        p[2] = uint8_t(v >> 16);
        p[3] = uint8_t(v >> 24);
    };
    put32(bytes, k.src_ip);
    put32(bytes + 4, k.dst_ip);
    bytes[8] = uint8_t(k.src_port);
    bytes[9] = uint8_t(k.src_port >> 8);
    bytes[10] = uint8_t(k.dst_port);
    bytes[11] = uint8_t(k.dst_port >> 8);
    uint32_t h = 2166136261u;
    for (uint8_t b : bytes) {
        h ^= b;
        h *= 16777619u;
    }
    // FNV-1a's low bits disperse poorly under small moduli; fold the high
    // bits down so worker selection by % stays uniform
    h ^= h >> 16;
    h *= 0x7feb352du;
    h ^= h >> 15;
    return h;
}

int Autoscaler::decide(double avg_utilization, uint32_t current) const {
    if (avg_utilization >= cfg_.spawn_threshold && current < cfg_.max_workers)
        return 1;
    if (avg_utilization < cfg_.retire_threshold && current > cfg_.min_workers)
        return -1;
    return 0;
}

namespace {

constexpr size_t kTokenSize = 8;

uint64_t read_token(std::span<const uint8_t> payload) {
    uint64_t t = 0;
    for (size_t i = 0; i < kTokenSize; ++i) t |= uint64_t(payload[i]) << (8 * i);
    return t;
}

void write_token(uint8_t* out, uint64_t t) {
    for (size_t i = 0; i < kTokenSize; ++i) out[i] = uint8_t(t >> (8 * i));
}

// target form: /f/<fn_id>
std::optional<FnId> parse_target(const std::string& target) {
    if (target.rfind("/f/", 0) != 0) return std::nullopt;
    uint32_t fn = 0;
    for (size_t i = 3; i < target.size(); ++i) {
        if (target[i] < '0' || target[i] > '9') return std::nullopt;
        fn = fn * 10 + uint32_t(target[i] - '0');
        if (fn > UINT16_MAX) return std::nullopt;
    }
    if (target.size() == 3 || fn == kIngressFn) return std::nullopt;
    return FnId(fn);
}

}  // namespace

IngressMaster::IngressMaster(IngressConfig cfg, MemoryManager* mm,
                             ComchChannel* comch, Endpoint* endpoint,
                             NodeId node, RunStats* stats)
    : cfg_(cfg), mm_(mm), comch_(comch), endpoint_(endpoint), node_(node),
      stats_(stats), scaler_(cfg.autoscaler) {
    for (uint32_t i = 0; i < cfg_.autoscaler.min_workers; ++i) spawn_worker();
}

void IngressMaster::spawn_worker() {
    auto w = std::make_unique<Worker>();
    w->id = next_worker_id_++;
    workers_.push_back(std::move(w));
}

IngressMaster::Worker* IngressMaster::worker(uint32_t id) {
    for (auto& w : workers_)
        if (w->id == id) return w.get();
    return nullptr;
}

IngressMaster::Worker& IngressMaster::pick_worker(const ConnKey& key) {
    std::vector<Worker*> live;
    for (auto& w : workers_)
        if (!w->draining) live.push_back(w.get());
    return *live[rss_hash(key) % live.size()];
}

uint64_t IngressMaster::open_connection(const ConnKey& key, OutputFn out) {
    Connection c;
    c.id = next_conn_id_++;
    Worker& w = pick_worker(key);
    c.worker = w.id;
    c.out = std::move(out);
    w.pinned_conns++;
    uint64_t id = c.id;
    conns_.emplace(id, std::move(c));
    return id;
}

void IngressMaster::close_connection(uint64_t conn_id) {
    auto it = conns_.find(conn_id);
    if (it == conns_.end()) return;
    if (Worker* w = worker(it->second.worker))
        if (w->pinned_conns) w->pinned_conns--;
    conns_.erase(it);
}

void IngressMaster::respond(Connection& c, int status, std::string_view reason,
                            std::string_view body, bool keep_alive) {
    if (c.out) c.out(render_response(status, reason, body, keep_alive));
    responses_sent_++;
}

Status IngressMaster::on_data(uint64_t conn_id, std::string_view bytes) {
    auto it = conns_.find(conn_id);
    if (it == conns_.end()) return Errc::not_found;
    Connection& c = it->second;
    c.parser.feed(bytes);
    if (c.parser.failed()) {
        respond(c, 400, "Bad Request", "", false);
        close_connection(conn_id);
        return Errc::io_error;
    }
    while (auto req = c.parser.next()) {
        Worker* w = worker(c.worker);
        if (!w || w->draining) {
            // pinned worker retired under us: re-pin
            Worker& nw = pick_worker({0, 0, uint16_t(conn_id), 0});
            c.worker = nw.id;
            w = &nw;
        }
        handle_request(c, *w, *req);
        if (!conns_.count(conn_id)) break;  // closed while handling
    }
    return Errc::ok;
}

void IngressMaster::handle_request(Connection& c, Worker& w,
                                   const HttpRequest& req) {
    auto fn = parse_target(req.target);
    if (!fn) {
        respond(c, 404, "Not Found", "", req.keep_alive);
        return;
    }
    auto tenant = mm_->tenant_of(*fn);
    if (!tenant) {
        respond(c, 404, "Not Found", "", req.keep_alive);
        return;
    }
    if (w.pending.size() >= cfg_.worker_capacity) {
        respond(c, 503, "Service Unavailable", "", req.keep_alive);
        return;
    }
    auto buf = mm_->alloc(*tenant, OwnerRef::ingress_worker(w.id));
    if (!buf) {
        respond(c, 503, "Service Unavailable", "", req.keep_alive);
        return;
    }
    auto pool = mm_->resolve(*buf);
    if (kTokenSize + req.body.size() > (*pool)->buffer_size()) {
        mm_->free(*buf, OwnerRef::ingress_worker(w.id));
        respond(c, 400, "Bad Request", "body exceeds buffer size",
                req.keep_alive);
        return;
    }

    // Inbound boundary copy: HTTP body (plus correlation token) into the
    // pooled buffer. The one permitted copy on the request path.
    uint64_t token = (uint64_t(w.id) << 48) | w.next_seq++;
    std::vector<uint8_t> staged(kTokenSize + req.body.size());
    write_token(staged.data(), token);
    std::copy(req.body.begin(), req.body.end(), staged.begin() + kTokenSize);
    copy_payload(**pool, *buf, OwnerRef::ingress_worker(w.id), staged, stats_);
    stats_->ingress_copies_in++;

    BufferDescriptor d = *buf;
    d.length = uint32_t(staged.size());
    d.src_fn = kIngressFn;
    d.dst_fn = *fn;
    d.flags = kFlagRequest;
    (*pool)->set_payload_length(d.buffer_id, d.length);

    Status st = mm_->transfer(d, OwnerRef::ingress_worker(w.id),
                              OwnerRef::engine(node_));
    if (st.ok()) {
        st = comch_->send(ComchSide::function, d);
        if (!st.ok())
            mm_->transfer(d, OwnerRef::engine(node_),
                          OwnerRef::ingress_worker(w.id));
    }
    if (!st.ok()) {
        mm_->free(d, OwnerRef::ingress_worker(w.id));
        respond(c, 503, "Service Unavailable", "", req.keep_alive);
        return;
    }
    stats_->fn_exchanges++;
    w.pending[token] = {token, c.id, req.keep_alive};
}

void IngressMaster::pump() {
    while (auto d = endpoint_->pop(Wait::poll)) {
        auto pool = mm_->resolve(*d);
        if (!pool) continue;
        auto payload = (*pool)->read(*d, OwnerRef::function(kIngressFn));
        if (!payload || d->length < kTokenSize) {
            mm_->free(*d, OwnerRef::function(kIngressFn));
            stats_->stale_responses++;
            continue;
        }
        uint64_t token = read_token(*payload);
        Worker* w = worker(uint32_t(token >> 48));
        ConversionEntry e;
        bool found = false;
        if (w) {
            auto entry = w->pending.find(token);
            if (entry != w->pending.end()) {
                e = entry->second;
                w->pending.erase(entry);
                found = true;
            }
        }
        if (!found) {
            // response for a request whose worker is gone (abrupt retire) or
            // that was never issued
            mm_->free(*d, OwnerRef::function(kIngressFn));
            stats_->stale_responses++;
            continue;
        }
        mm_->transfer(*d, OwnerRef::function(kIngressFn),
                      OwnerRef::ingress_worker(w->id));

        // Outbound boundary copy: pooled buffer -> HTTP byte stream.
        std::string body(reinterpret_cast<const char*>(payload->data()) +
                             kTokenSize,
                         d->length - kTokenSize);
        stats_->sw_copies++;
        stats_->ingress_copies_out++;
        mm_->free(*d, OwnerRef::ingress_worker(w->id));

        auto cit = conns_.find(e.conn_id);
        if (cit != conns_.end()) {
            respond(cit->second, 200, "OK", body, e.keep_alive);
            if (!e.keep_alive) close_connection(e.conn_id);
        }
    }
    finish_retire();
}

void IngressMaster::finish_retire() {
    std::erase_if(workers_, [](const std::unique_ptr<Worker>& w) {
        return w->draining && w->pending.empty();
    });
}

void IngressMaster::tick() {
    pump();
    int delta = scaler_.decide(avg_utilization(), live_worker_count());
    if (delta > 0) {
        spawn_worker();
    } else if (delta < 0) {
        // retire the least-loaded live worker
        Worker* victim = nullptr;
        for (auto& w : workers_) {
            if (w->draining) continue;
            if (!victim || w->pending.size() < victim->pending.size())
                victim = w.get();
        }
        if (victim) {
            if (cfg_.abrupt_retire) {
                uint32_t id = victim->id;
                std::erase_if(workers_, [id](const std::unique_ptr<Worker>& w) {
                    return w->id == id;
                });
            } else {
                victim->draining = true;
            }
        }
    }
    finish_retire();
}

uint32_t IngressMaster::worker_count() const {
    return uint32_t(workers_.size());
}

uint32_t IngressMaster::live_worker_count() const {
    uint32_t n = 0;
    for (auto& w : workers_)
        if (!w->draining) n++;
    return n;
}

double IngressMaster::avg_utilization() const {
    uint64_t pending = 0;
    uint32_t live = 0;
    for (auto& w : workers_) {
        if (w->draining) continue;
        pending += w->pending.size();
        live++;
    }
    if (live == 0) return 0.0;
    return double(pending) / (double(live) * double(cfg_.worker_capacity));
}

size_t IngressMaster::inflight_total() const {
    size_t n = 0;
    for (auto& w : workers_) n += w->pending.size();
    return n;
}

}  // namespace zcdp
