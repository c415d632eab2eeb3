#include "zcdp/sim_runner.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace zcdp {

namespace {

constexpr size_t kTokenSize = 8;

uint64_t read_token_le(std::span<const uint8_t> p) {
    uint64_t t = 0;
    for (size_t i = 0; i < kTokenSize; ++i) t |= uint64_t(p[i]) << (8 * i);
    return t;
}

void write_token_le(std::span<uint8_t> p, uint64_t t) {
    for (size_t i = 0; i < kTokenSize; ++i) p[i] = uint8_t(t >> (8 * i));
}

uint64_t fnv64(std::span<const uint8_t> bytes) {
    uint64_t h = 1469598103934665603ull;
    for (uint8_t b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

// ---------------------------------------------------------------- metrics

void MetricsCollector::on_response(TenantId t, SimTime now, uint32_t bytes,
                                   SimTime latency) {
    uint64_t w = now / window_ns_;
    auto& cell = windows_[w][t];
    cell.first++;
    cell.second += bytes;
    TenantAgg& agg = tenants_[t];
    agg.delivered++;
    agg.bytes += bytes;
    agg.latencies.push_back(latency);
}

std::string MetricsCollector::csv(double window_s) const {
    std::ostringstream os;
    os << "window_start_s,tenant,delivered,bytes\n";
    for (const auto& [w, per_tenant] : windows_) {
        for (const auto& [t, cell] : per_tenant) {
            char ts[32];
            std::snprintf(ts, sizeof(ts), "%.3f", double(w) * window_s);
            os << ts << "," << t << "," << cell.first << "," << cell.second
               << "\n";
        }
    }
    return os.str();
}

std::vector<MetricsCollector::FairnessBand> MetricsCollector::fairness(
    const std::map<TenantId, uint32_t>& weights) const {
    std::vector<FairnessBand> bands;
    if (windows_.empty()) return bands;

    uint64_t last = windows_.rbegin()->first;
    std::vector<std::vector<TenantId>> active_by_window(last + 1);
    for (const auto& [w, per_tenant] : windows_) {
        for (const auto& [t, cell] : per_tenant)
            if (cell.first > 0) active_by_window[w].push_back(t);
    }

    size_t i = 0;
    while (i <= last) {
        size_t j = i;
        while (j + 1 <= last && active_by_window[j + 1] == active_by_window[i])
            j++;
        // exclude the partial ramp-in/ramp-out windows at the band edges
        if (active_by_window[i].size() >= 2 && j >= i + 2) {
            FairnessBand band;
            band.active = active_by_window[i];
            uint64_t wsum = 0;
            for (TenantId t : band.active) wsum += weights.at(t);
            for (TenantId t : band.active) band.min_share_ratio[t] = 1e9;
            for (size_t w = i + 1; w < j; ++w) {
                auto wit = windows_.find(w);
                if (wit == windows_.end()) continue;
                uint64_t total = 0;
                for (TenantId t : band.active)
                    total += wit->second.at(t).first;
                if (total == 0) continue;
                band.windows++;
                for (TenantId t : band.active) {
                    double share =
                        double(wit->second.at(t).first) / double(total);
                    double expected = double(weights.at(t)) / double(wsum);
                    double err = std::abs(share - expected) / expected;
                    band.max_rel_error = std::max(band.max_rel_error, err);
                    band.min_share_ratio[t] =
                        std::min(band.min_share_ratio[t], share / expected);
                }
            }
            if (band.windows > 0) bands.push_back(std::move(band));
        }
        i = j + 1;
    }
    return bands;
}

// ------------------------------------------------------------------- apps

// One application instance per deployed function; reactive, single-context.
class App {
  public:
    App(Simulation* sim, FunctionContext* ctx) : sim_(sim), ctx_(ctx) {}
    virtual ~App() = default;
    virtual void on_message(BufferDescriptor d) = 0;
    virtual void tick() {}
    virtual bool bounded() const { return false; }
    virtual bool done() const { return true; }
    virtual ClientReport report() const { return {}; }

  protected:
    // send with function-side retry on backpressure
    void send_or_queue(BufferDescriptor d, FnId dst) {
        if (!ctx_->io_send(d, dst).ok()) retry_.emplace_back(d, dst);
    }
    void flush_retries() {
        size_t n = retry_.size();
        for (size_t i = 0; i < n; ++i) {
            auto [d, dst] = retry_.front();
            retry_.pop_front();
            send_or_queue(d, dst);
        }
    }

    Simulation* sim_;
    FunctionContext* ctx_;
    std::deque<std::pair<BufferDescriptor, FnId>> retry_;
};

namespace {

class EchoServerApp : public App {
  public:
    using App::App;
    void on_message(BufferDescriptor d) override {
        FnId back = d.src_fn;
        d.flags = kFlagResponse;
        send_or_queue(d, back);
    }
    void tick() override { flush_retries(); }
};

// One vertex of a function chain: requests fan out sequentially to the
// children, then the accumulated payload (each hop adds its fn id to every
// body byte) returns to the caller. The same buffer flows through the whole
// local subtree; remote hops ride the fabric as usual.
class ChainApp : public App {
  public:
    ChainApp(Simulation* sim, FunctionContext* ctx, std::vector<FnId> children)
        : App(sim, ctx), children_(std::move(children)) {}

    void on_message(BufferDescriptor d) override {
        auto payload = ctx_->io_read(d);
        if (!payload || d.length < kTokenSize) {
            ctx_->io_put_buffer(d);
            return;
        }
        uint64_t token = read_token_le(*payload);
        if (d.flags & kFlagRequest) {
            if (children_.empty()) {
                finish(d, d.src_fn);
                return;
            }
            pending_[token] = {d.src_fn, 0};
            d.flags = kFlagRequest;
            send_or_queue(d, children_[0]);
            return;
        }
        auto it = pending_.find(token);
        if (it == pending_.end()) {
            ctx_->io_put_buffer(d);
            return;
        }
        it->second.stage++;
        if (it->second.stage < children_.size()) {
            d.flags = kFlagRequest;
            send_or_queue(d, children_[it->second.stage]);
            return;
        }
        FnId parent = it->second.parent;
        pending_.erase(it);
        finish(d, parent);
    }
    void tick() override { flush_retries(); }

  private:
    void finish(BufferDescriptor d, FnId parent) {
        auto span = ctx_->io_access(d);
        if (span) {
            for (uint32_t i = kTokenSize; i < d.length; ++i)
                (*span)[i] = uint8_t((*span)[i] + uint8_t(ctx_->fn()));
        }
        d.flags = kFlagResponse;
        send_or_queue(d, parent);
    }

    struct Pending {
        FnId parent;
        size_t stage;
    };
    std::vector<FnId> children_;
    std::map<uint64_t, Pending> pending_;
};

// Closed-loop request generator; doubles as the chain client when a nonzero
// transform mask is supplied (mask == expected per-byte delta of the
// response relative to the request).
class ClientApp : public App {
  public:
    ClientApp(Simulation* sim, FunctionContext* ctx, const FunctionSpec& spec,
              uint8_t mask, uint64_t seed, MetricsCollector* metrics,
              SimKernel* kernel, uint64_t duration_ns)
        : App(sim, ctx), spec_(spec), mask_(mask), metrics_(metrics),
          kernel_(kernel), rng_(seed) {
        start_ns_ = uint64_t(spec.start_s * 1e9);
        stop_ns_ = spec.stop_s > 0 ? uint64_t(spec.stop_s * 1e9) : duration_ns;
    }

    void on_message(BufferDescriptor d) override {
        auto payload = ctx_->io_read(d);
        if (!payload || d.length < kTokenSize) {
            ctx_->io_put_buffer(d);
            return;
        }
        uint64_t token = read_token_le(*payload);
        auto it = outstanding_.find(token);
        if (it == outstanding_.end()) {
            mismatches_++;
            ctx_->io_put_buffer(d);
            return;
        }
        SimTime latency = kernel_->now() - it->second.sent_at;
        uint64_t got = fnv64(payload->subspan(kTokenSize,
                                              d.length - kTokenSize));
        if (d.length != spec_.message_size || got != it->second.expected)
            mismatches_++;
        completed_++;
        metrics_->on_response(ctx_->tenant(), kernel_->now(), d.length,
                              latency);
        outstanding_.erase(it);
        ctx_->io_put_buffer(d);
    }

    void tick() override {
        SimTime now = kernel_->now();
        if (now < start_ns_ || now >= stop_ns_) return;
        while (outstanding_.size() < spec_.concurrency &&
               (spec_.requests == 0 || sent_ < spec_.requests)) {
            if (!issue()) break;
        }
    }

    bool bounded() const override { return spec_.requests > 0; }
    bool done() const override {
        return spec_.requests > 0 && completed_ >= spec_.requests;
    }
    ClientReport report() const override {
        return {sent_, completed_, mismatches_};
    }

  private:
    bool issue() {
        auto buf = ctx_->io_get_buffer();
        if (!buf) return false;  // pool pressure: retry next tick
        auto span = ctx_->io_access(*buf);
        if (!span || spec_.message_size > span->size() ||
            spec_.message_size < kTokenSize + 1) {
            ctx_->io_put_buffer(*buf);
            return false;
        }
        uint64_t token = (uint64_t(ctx_->fn()) << 48) | ++seq_;
        write_token_le(*span, token);
        std::vector<uint8_t> expected_body(spec_.message_size - kTokenSize);
        for (uint32_t i = kTokenSize; i < spec_.message_size; ++i) {
            uint8_t b = uint8_t(rng_());
            (*span)[i] = b;
            expected_body[i - kTokenSize] = uint8_t(b + mask_);
        }
        BufferDescriptor d = *buf;
        d.length = spec_.message_size;
        d.flags = kFlagRequest;
        Status st = ctx_->io_send(d, spec_.target);
        if (!st.ok()) {
            ctx_->io_put_buffer(d);
            return false;
        }
        outstanding_[token] = {kernel_->now(), fnv64(expected_body)};
        sent_++;
        return true;
    }

    struct Outstanding {
        SimTime sent_at;
        uint64_t expected;
    };

    FunctionSpec spec_;
    uint8_t mask_;
    MetricsCollector* metrics_;
    SimKernel* kernel_;
    std::mt19937_64 rng_;
    SimTime start_ns_ = 0;
    SimTime stop_ns_ = 0;
    uint64_t seq_ = 0;
    uint64_t sent_ = 0;
    uint64_t completed_ = 0;
    uint64_t mismatches_ = 0;
    std::map<uint64_t, Outstanding> outstanding_;
};

// sum of fn-id bytes over the call tree rooted at fn (with multiplicity)
uint8_t chain_mask(const std::map<FnId, std::vector<FnId>>& edges, FnId fn,
                   int depth = 0) {
    if (depth > 32) return 0;
    uint8_t m = uint8_t(fn);
    auto it = edges.find(fn);
    if (it != edges.end())
        for (FnId c : it->second)
            m = uint8_t(m + chain_mask(edges, c, depth + 1));
    return m;
}

}  // namespace

// ------------------------------------------------------------- simulation

Simulation::Simulation(ScenarioConfig cfg)
    : cfg_(std::move(cfg)), metrics_(cfg_.window_ns()) {}

Simulation::~Simulation() = default;

Engine* Simulation::engine(NodeId node) {
    auto it = nodes_.find(node);
    return it == nodes_.end() ? nullptr : it->second.engine.get();
}

MemoryManager* Simulation::memory(NodeId node) {
    auto it = nodes_.find(node);
    return it == nodes_.end() ? nullptr : it->second.mm.get();
}

Status Simulation::setup() {
    if (cfg_.backend != "sim") return Errc::config_invalid;

    FabricConfig fcfg;
    fcfg.link = cfg_.link;
    fcfg.one_sided_enabled = cfg_.transfer_mode != TransferMode::two_sided;
    fabric_ = std::make_unique<SimFabric>(&kernel_, &stats_, fcfg);

    for (NodeId n : cfg_.nodes) {
        NodeRt rt;
        rt.mm = std::make_unique<MemoryManager>(n, &stats_);
        rt.engine = std::make_unique<Engine>(n, fabric_.get(), rt.mm.get(),
                                             &stats_, cfg_.engine);
        rt.engine->set_now_fn([this] { return kernel_.now(); });
        rt.registry = std::make_unique<EndpointRegistry>();
        fabric_->add_node(n, rt.mm.get());
        nodes_[n] = std::move(rt);
    }

    for (auto& [n, rt] : nodes_) {
        for (const TenantSpec& t : cfg_.tenants) {
            auto pool = rt.mm->create_pool(t.id, t.pool_buffers, t.buffer_size);
            if (!pool) return pool.error();
            Status st = rt.engine->attach_tenant(t.id, t.weight);
            if (!st.ok()) return st;
        }
        for (const FunctionSpec& f : cfg_.functions)
            rt.mm->bind_function(f.fn, f.tenant);
    }
    for (auto& [n, rt] : nodes_)
        for (const TenantSpec& t : cfg_.tenants) {
            Status st = rt.engine->map_tenant_pool(t.id);
            if (!st.ok()) return st;
        }
    for (auto& [n, rt] : nodes_)
        for (const TenantSpec& t : cfg_.tenants)
            for (NodeId peer : cfg_.nodes) {
                if (peer == n) continue;
                Status st = rt.engine->connect_peer(t.id, peer);
                if (!st.ok()) return st;
            }

    for (auto& [n, rt] : nodes_) {
        for (const FunctionSpec& f : cfg_.functions)
            rt.engine->set_route(f.fn, f.node);
        if (cfg_.ingress) rt.engine->set_route(kIngressFn, cfg_.ingress->node);
    }

    for (const FunctionSpec& f : cfg_.functions) {
        NodeRt& rt = nodes_.at(f.node);
        auto ep = rt.registry->register_endpoint(f.fn, 1 << 16);
        if (!ep) return ep.error();
        FnRt fr;
        fr.spec = f;
        fr.endpoint = *ep;
        fr.comch = std::make_unique<ComchChannel>(f.fn, f.tenant, fr.endpoint,
                                                  1 << 16);
        Status st = rt.engine->register_channel(fr.comch.get());
        if (!st.ok()) return st;
        fr.ctx = std::make_unique<FunctionContext>(
            f.fn, f.tenant, f.node, rt.mm.get(), rt.registry.get(),
            fr.endpoint, fr.comch.get(), &stats_);
        fns_[f.fn] = std::move(fr);
    }
    // local-route views (plus the ingress endpoint where co-located)
    for (auto& [fn, fr] : fns_) {
        for (const FunctionSpec& o : cfg_.functions)
            if (o.node == fr.spec.node) fr.ctx->set_local(o.fn, true);
        if (cfg_.ingress && cfg_.ingress->node == fr.spec.node)
            fr.ctx->set_local(kIngressFn, true);
    }

    for (auto& [fn, fr] : fns_) {
        const FunctionSpec& f = fr.spec;
        if (f.app == "echo_server") {
            fr.app = std::make_unique<EchoServerApp>(this, fr.ctx.get());
        } else if (f.app == "chain") {
            std::vector<FnId> children;
            auto it = cfg_.chain_edges.find(f.fn);
            if (it != cfg_.chain_edges.end()) children = it->second;
            fr.app = std::make_unique<ChainApp>(this, fr.ctx.get(),
                                                std::move(children));
        } else {
            uint8_t mask = 0;
            if (f.app == "chain_client")
                mask = chain_mask(cfg_.chain_edges, f.target);
            fr.app = std::make_unique<ClientApp>(
                this, fr.ctx.get(), f, mask,
                cfg_.seed * 1000003ull + f.fn, &metrics_, &kernel_,
                cfg_.duration_ns());
        }
    }

    if (cfg_.transfer_mode != TransferMode::two_sided) {
        coordinator_ = std::make_unique<OneSidedCoordinator>(
            &kernel_, &stats_, cfg_.transfer_mode, cfg_.baseline);
        for (auto& [n, rt] : nodes_) coordinator_->register_engine(rt.engine.get());
        for (auto& [n, rt] : nodes_) {
            for (const TenantSpec& t : cfg_.tenants) {
                Status st = coordinator_->setup_site(t.id, n);
                if (!st.ok()) return st;
            }
            rt.engine->set_transfer(coordinator_.get());
        }
    }

    if (cfg_.ingress) {
        NodeRt& rt = nodes_.at(cfg_.ingress->node);
        auto ep = rt.registry->register_endpoint(kIngressFn, 1 << 16);
        if (!ep) return ep.error();
        ingress_comch_ = std::make_unique<ComchChannel>(kIngressFn, 0, *ep,
                                                        1 << 16);
        Status st = rt.engine->register_channel(ingress_comch_.get());
        if (!st.ok()) return st;
        ingress_ = std::make_unique<IngressMaster>(
            cfg_.ingress->config, rt.mm.get(), ingress_comch_.get(), *ep,
            cfg_.ingress->node, &stats_);
        for (uint32_t i = 0; i < cfg_.ingress->connections; ++i) {
            IngressConn conn;
            size_t idx = ingress_conns_.size();
            ConnKey key{0x0a000001u + i, 0x0a0000feu,
                        uint16_t(40000 + i), 80};
            conn.conn_id = ingress_->open_connection(
                key, [this, idx](std::string_view resp) {
                    size_t split = resp.find("\r\n\r\n");
                    std::string body = split == std::string_view::npos
                                           ? std::string()
                                           : std::string(resp.substr(split + 4));
                    IngressConn& c = ingress_conns_[idx];
                    bool ok = resp.rfind("HTTP/1.1 200", 0) == 0;
                    if (ok) {
                        std::string expected;
                        expected.resize(cfg_.ingress->body_size);
                        for (uint32_t j = 0; j < cfg_.ingress->body_size; ++j)
                            expected[j] = char(uint8_t(31 * idx +
                                                       7 * c.completed + j));
                        ok = body == expected;
                    }
                    (ok ? ingress_ok_ : ingress_bad_)++;
                    c.completed++;
                    if (c.sent < cfg_.ingress->requests_per_connection)
                        drive_ingress_conn(idx);
                });
            ingress_conns_.push_back(conn);
        }
        next_ingress_tick_ = uint64_t(cfg_.ingress->tick_s * 1e9);
    }

    setup_done_ = true;
    return Errc::ok;
}

void Simulation::drive_ingress_conn(size_t idx) {
    IngressConn& c = ingress_conns_[idx];
    const IngressSpec& spec = *cfg_.ingress;
    std::string body;
    body.resize(spec.body_size);
    for (uint32_t j = 0; j < spec.body_size; ++j)
        body[j] = char(uint8_t(31 * idx + 7 * c.sent + j));
    std::string req = "POST /f/" + std::to_string(spec.target_fn) +
                      " HTTP/1.1\r\nContent-Length: " +
                      std::to_string(body.size()) + "\r\n\r\n" + body;
    c.sent++;
    ingress_->on_data(c.conn_id, req);
}

bool Simulation::finished() const {
    bool any_bounded = false;
    for (const auto& [fn, fr] : fns_) {
        if (!fr.app->bounded()) continue;
        any_bounded = true;
        if (!fr.app->done()) return false;
    }
    if (cfg_.ingress) {
        any_bounded = true;
        for (const IngressConn& c : ingress_conns_)
            if (c.completed < cfg_.ingress->requests_per_connection)
                return false;
        if (ingress_ && ingress_->inflight_total() > 0) return false;
    }
    return any_bounded;
}

void Simulation::do_tick() {
    for (auto& [n, rt] : nodes_) rt.engine->iterate();
    for (auto& [fn, fr] : fns_) {
        while (auto d = fr.ctx->io_recv(Wait::poll)) fr.app->on_message(*d);
    }
    for (auto& [fn, fr] : fns_) fr.app->tick();
    if (ingress_) {
        ingress_->pump();
        for (size_t i = 0; i < ingress_conns_.size(); ++i)
            if (ingress_conns_[i].sent == 0) drive_ingress_conn(i);
        if (kernel_.now() >= next_ingress_tick_) {
            ingress_->tick();
            next_ingress_tick_ += uint64_t(cfg_.ingress->tick_s * 1e9);
        }
    }
}

void Simulation::run() {
    uint64_t period = cfg_.iteration_period_ns;
    std::shared_ptr<std::function<void()>> tick =
        std::make_shared<std::function<void()>>();
    *tick = [this, period, tick] {
        do_tick();
        if (!finished() && kernel_.now() + period <= cfg_.duration_ns())
            kernel_.after(period, *tick);
    };
    kernel_.after(period, *tick);
    kernel_.run_until(cfg_.duration_ns());
}

ClientReport Simulation::client_report() const {
    ClientReport total;
    for (const auto& [fn, fr] : fns_) {
        ClientReport r = fr.app->report();
        total.sent += r.sent;
        total.completed += r.completed;
        total.mismatches += r.mismatches;
    }
    return total;
}

std::string Simulation::metrics_csv() const {
    return metrics_.csv(cfg_.window_s);
}

std::string Simulation::summary_json() const {
    nlohmann::json j;
    j["name"] = cfg_.name;
    j["seed"] = cfg_.seed;
    j["backend"] = cfg_.backend;
    j["scheduler"] =
        cfg_.scheduler == SchedulerMode::dwrr ? "dwrr" : "fcfs";
    j["transfer_mode"] = to_string(cfg_.transfer_mode);
    j["duration_s"] = cfg_.duration_s;

    nlohmann::json counters;
    counters["sw_copies"] = stats_.sw_copies.load();
    counters["ingress_copies_in"] = stats_.ingress_copies_in.load();
    counters["ingress_copies_out"] = stats_.ingress_copies_out.load();
    counters["owrc_copies"] = stats_.owrc_copies.load();
    counters["other_copies"] = stats_.other_copies();
    counters["fabric_data_ops"] = stats_.fabric_data_ops.load();
    counters["lock_ops"] = stats_.lock_ops.load();
    counters["poll_discoveries"] = stats_.poll_discoveries.load();
    counters["fn_exchanges"] = stats_.fn_exchanges.load();
    counters["dead_letters"] = stats_.dead_letters.load();
    counters["rnr_timeouts"] = stats_.rnr_timeouts.load();
    counters["lock_timeouts"] = stats_.lock_timeouts.load();
    counters["stale_responses"] = stats_.stale_responses.load();
    nlohmann::json viol;
    viol["ownership"] = stats_.ownership_violations.load();
    viol["double_free"] = stats_.double_frees.load();
    viol["cross_tenant"] = stats_.cross_tenant_rejects.load();
    viol["rbr_miss"] = stats_.rbr_misses.load();
    viol["total"] = stats_.violation_total();
    counters["violations"] = viol;
    j["counters"] = counters;

    nlohmann::json tenants;
    for (const TenantSpec& t : cfg_.tenants) {
        nlohmann::json tj;
        tj["weight"] = t.weight;
        auto it = metrics_.tenants().find(t.id);
        if (it != metrics_.tenants().end()) {
            tj["delivered"] = it->second.delivered;
            tj["bytes"] = it->second.bytes;
            std::vector<SimTime> lat = it->second.latencies;
            std::sort(lat.begin(), lat.end());
            nlohmann::json lj;
            lj["count"] = lat.size();
            if (!lat.empty()) {
                uint64_t sum = 0;
                for (SimTime v : lat) sum += v;
                lj["mean_ns"] = sum / lat.size();
                lj["p50_ns"] = lat[lat.size() / 2];
                lj["p99_ns"] = lat[size_t(double(lat.size() - 1) * 0.99)];
                lj["max_ns"] = lat.back();
            }
            tj["latency"] = lj;
        } else {
            tj["delivered"] = 0;
            tj["bytes"] = 0;
        }
        tenants[std::to_string(t.id)] = tj;
    }
    j["tenants"] = tenants;

    ClientReport cr = client_report();
    nlohmann::json cj;
    cj["sent"] = cr.sent;
    cj["completed"] = cr.completed;
    cj["mismatches"] = cr.mismatches;
    if (cr.completed > 0)
        cj["fn_exchanges_per_completed"] =
            double(stats_.fn_exchanges.load()) / double(cr.completed);
    j["clients"] = cj;

    std::map<TenantId, uint32_t> weights;
    for (const TenantSpec& t : cfg_.tenants) weights[t.id] = t.weight;
    nlohmann::json bands = nlohmann::json::array();
    for (const auto& band : metrics_.fairness(weights)) {
        nlohmann::json bj;
        bj["active"] = band.active;
        bj["windows"] = band.windows;
        bj["max_rel_error"] = band.max_rel_error;
        nlohmann::json mins;
        for (const auto& [t, v] : band.min_share_ratio)
            mins[std::to_string(t)] = v;
        bj["min_share_ratio"] = mins;
        bands.push_back(bj);
    }
    j["fairness"] = bands;

    if (cfg_.ingress) {
        nlohmann::json ij;
        ij["responses_ok"] = ingress_ok_;
        ij["responses_bad"] = ingress_bad_;
        ij["responses_sent"] = ingress_ ? ingress_->responses_sent() : 0;
        ij["workers_final"] = ingress_ ? ingress_->worker_count() : 0;
        j["ingress"] = ij;
    }

    nlohmann::json pools;
    for (const auto& [n, rt] : nodes_) {
        for (const TenantSpec& t : cfg_.tenants) {
            const MemoryPool* p = rt.mm->pool(t.id);
            if (!p) continue;
            nlohmann::json pj;
            pj["free"] = p->free_count();
            pj["total"] = p->buffer_count();
            pools["node" + std::to_string(n) + ".tenant" +
                  std::to_string(t.id)] = pj;
        }
    }
    j["pools"] = pools;

    return j.dump(2) + "\n";
}

Status Simulation::write_outputs(const std::string& dir) const {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) return Errc::io_error;
    std::ofstream csv(dir + "/metrics.csv");
    csv << metrics_csv();
    std::ofstream summary(dir + "/summary.json");
    summary << summary_json();
    if (!csv || !summary) return Errc::io_error;
    return Errc::ok;
}

void Simulation::set_engine_trace(
    std::function<void(const std::string&)> sink) {
    for (auto& [n, rt] : nodes_) rt.engine->set_metrics_sink(sink);
}

void Simulation::set_fabric_trace(std::function<void(const TraceEvent&)> sink) {
    if (fabric_) fabric_->set_trace(std::move(sink));
}

}  // namespace zcdp
