#include "zcdp/socket_runner.hpp"

#include <algorithm>
#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>
#include <vector>

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
    uint64_t h = 0xcbf29ce484222325ull;
    for (uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace

// Per-function application logic for the socket backend. Unlike the SIM
// apps, these run on the owning node's thread and time with the wall clock.
class SocketApp {
  public:
    explicit SocketApp(FunctionContext* ctx) : ctx_(ctx) {}
    virtual ~SocketApp() = default;
    virtual void on_message(BufferDescriptor d) = 0;
    virtual void tick() { flush_retries(); }
    virtual bool bounded() const { return false; }
    virtual bool done() const { return true; }
    virtual ClientReport report() const { return {}; }

  protected:
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

    FunctionContext* ctx_;
    std::deque<std::pair<BufferDescriptor, FnId>> retry_;
};

namespace {

class SocketEchoServer : public SocketApp {
  public:
    using SocketApp::SocketApp;
    void on_message(BufferDescriptor d) override {
        FnId back = d.src_fn;
        d.flags = kFlagResponse;
        send_or_queue(d, back);
    }
};

class SocketEchoClient : public SocketApp {
  public:
    SocketEchoClient(FunctionContext* ctx, const FunctionSpec& spec,
                     uint64_t seed)
        : SocketApp(ctx), spec_(spec), rng_(seed) {}

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
        uint64_t got = fnv64(payload->subspan(kTokenSize,
                                              d.length - kTokenSize));
        if (d.length != spec_.message_size || got != it->second)
            mismatches_++;
        completed_++;
        outstanding_.erase(it);
        ctx_->io_put_buffer(d);
    }

    void tick() override {
        flush_retries();
        while (outstanding_.size() < spec_.concurrency &&
               sent_ < spec_.requests) {
            if (!issue()) break;
        }
    }

    bool bounded() const override { return true; }
    bool done() const override { return completed_ >= spec_.requests; }
    ClientReport report() const override {
        return {sent_, completed_, mismatches_};
    }

  private:
    bool issue() {
        auto buf = ctx_->io_get_buffer();
        if (!buf) return false;  // pool pressure: retry next pass
        auto span = ctx_->io_access(*buf);
        if (!span || spec_.message_size > span->size() ||
            spec_.message_size < kTokenSize + 1) {
            ctx_->io_put_buffer(*buf);
            return false;
        }
        uint64_t token = (uint64_t(ctx_->fn()) << 48) | ++seq_;
        write_token_le(*span, token);
        std::vector<uint8_t> body(spec_.message_size - kTokenSize);
        for (uint32_t i = kTokenSize; i < spec_.message_size; ++i) {
            uint8_t b = uint8_t(rng_());
            (*span)[i] = b;
            body[i - kTokenSize] = b;
        }
        BufferDescriptor d = *buf;
        d.length = spec_.message_size;
        d.flags = kFlagRequest;
        Status st = ctx_->io_send(d, spec_.target);
        if (!st.ok()) {
            ctx_->io_put_buffer(d);
            return false;
        }
        outstanding_[token] = fnv64(body);
        sent_++;
        return true;
    }

    FunctionSpec spec_;
    std::mt19937_64 rng_;
    uint64_t seq_ = 0;
    uint64_t sent_ = 0;
    uint64_t completed_ = 0;
    uint64_t mismatches_ = 0;
    std::map<uint64_t, uint64_t> outstanding_;  // token -> expected body hash
};

}  // namespace

SocketRunner::SocketRunner(ScenarioConfig cfg) : cfg_(std::move(cfg)) {}

SocketRunner::~SocketRunner() {
    if (fabric_) fabric_->shutdown();
}

Status SocketRunner::setup() {
    if (cfg_.backend != "socket") return Errc::config_invalid;
    if (cfg_.transfer_mode != TransferMode::two_sided)
        return Errc::config_invalid;  // one-sided modes are SIM-only
    if (cfg_.ingress) return Errc::config_invalid;
    for (const FunctionSpec& f : cfg_.functions) {
        if (f.app != "echo_server" && f.app != "echo_client")
            return Errc::config_invalid;
        if (f.app == "echo_client" && f.requests == 0)
            return Errc::config_invalid;  // unbounded clients never finish
    }

    FabricConfig fcfg;
    fcfg.link = cfg_.link;
    fabric_ = std::make_unique<SocketFabric>(&stats_, fcfg);

    for (NodeId n : cfg_.nodes) {
        NodeRt rt;
        rt.mm = std::make_unique<MemoryManager>(n, &stats_);
        rt.engine = std::make_unique<Engine>(n, fabric_.get(), rt.mm.get(),
                                             &stats_, cfg_.engine);
        rt.engine->set_now_fn([this] { return now_ns_.load(); });
        rt.registry = std::make_unique<EndpointRegistry>();
        Status st = fabric_->add_node(n, rt.mm.get());
        if (!st.ok()) return st;
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

    for (auto& [n, rt] : nodes_)
        for (const FunctionSpec& f : cfg_.functions)
            rt.engine->set_route(f.fn, f.node);

    for (const FunctionSpec& f : cfg_.functions) {
        NodeRt& rt = nodes_.at(f.node);
        auto ep = rt.registry->register_endpoint(f.fn, 1 << 16);
        if (!ep) return ep.error();
        auto fr = std::make_unique<FnRt>();
        fr->spec = f;
        fr->endpoint = *ep;
        fr->comch = std::make_unique<ComchChannel>(f.fn, f.tenant,
                                                   fr->endpoint, 1 << 16);
        Status st = rt.engine->register_channel(fr->comch.get());
        if (!st.ok()) return st;
        fr->ctx = std::make_unique<FunctionContext>(
            f.fn, f.tenant, f.node, rt.mm.get(), rt.registry.get(),
            fr->endpoint, fr->comch.get(), &stats_);
        fns_[f.fn] = std::move(fr);
    }
    for (auto& [fn, fr] : fns_) {
        for (const FunctionSpec& o : cfg_.functions)
            if (o.node == fr->spec.node) fr->ctx->set_local(o.fn, true);
        if (fr->spec.app == "echo_server") {
            fr->app = std::make_unique<SocketEchoServer>(fr->ctx.get());
        } else {
            fr->app = std::make_unique<SocketEchoClient>(
                fr->ctx.get(), fr->spec, cfg_.seed * 1000003ull + fn);
            fr->done = false;
        }
    }

    setup_done_ = true;
    return Errc::ok;
}

void SocketRunner::node_loop(NodeId node) {
    NodeRt& rt = nodes_.at(node);
    while (!stop_.load(std::memory_order_relaxed)) {
        IterationReport rep = rt.engine->iterate();
        size_t pumped = 0;
        for (auto& [fn, fr] : fns_) {
            if (fr->spec.node != node) continue;
            while (auto d = fr->ctx->io_recv(Wait::poll)) {
                fr->app->on_message(*d);
                pumped++;
            }
            fr->app->tick();
            if (fr->app->bounded())
                fr->done.store(fr->app->done(), std::memory_order_relaxed);
        }
        if (rep.tx_emitted == 0 && rep.rx_dispatched == 0 && pumped == 0)
            std::this_thread::sleep_for(std::chrono::microseconds(50));
    }
}

void SocketRunner::run() {
    if (!setup_done_) return;
    auto start = std::chrono::steady_clock::now();
    auto elapsed_ns = [&] {
        return uint64_t(std::chrono::duration_cast<std::chrono::nanoseconds>(
                            std::chrono::steady_clock::now() - start)
                            .count());
    };

    std::vector<std::thread> workers;
    workers.reserve(nodes_.size());
    for (auto& [n, rt] : nodes_)
        workers.emplace_back([this, node = n] { node_loop(node); });

    // supervise: stop when every bounded client finished or the configured
    // duration elapses on the wall clock
    const uint64_t deadline = cfg_.duration_ns();
    while (!stop_.load()) {
        now_ns_.store(elapsed_ns());
        bool all_done = true;
        for (auto& [fn, fr] : fns_)
            if (fr->app->bounded() && !fr->done.load()) all_done = false;
        if (all_done || now_ns_.load() >= deadline) stop_.store(true);
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    for (std::thread& t : workers) t.join();
    wall_elapsed_s_ = double(elapsed_ns()) / 1e9;
    fabric_->shutdown();
}

ClientReport SocketRunner::client_report() const {
    ClientReport total;
    for (const auto& [fn, fr] : fns_) {
        ClientReport r = fr->app->report();
        total.sent += r.sent;
        total.completed += r.completed;
        total.mismatches += r.mismatches;
    }
    return total;
}

std::string SocketRunner::summary_json() const {
    nlohmann::json j;
    j["name"] = cfg_.name;
    j["seed"] = cfg_.seed;
    j["backend"] = cfg_.backend;
    j["wall_elapsed_s"] = wall_elapsed_s_;

    nlohmann::json counters;
    counters["sw_copies"] = stats_.sw_copies.load();
    counters["fabric_data_ops"] = stats_.fabric_data_ops.load();
    counters["fn_exchanges"] = stats_.fn_exchanges.load();
    counters["dead_letters"] = stats_.dead_letters.load();
    counters["rnr_timeouts"] = stats_.rnr_timeouts.load();
    nlohmann::json viol;
    viol["ownership"] = stats_.ownership_violations.load();
    viol["double_free"] = stats_.double_frees.load();
    viol["cross_tenant"] = stats_.cross_tenant_rejects.load();
    viol["rbr_miss"] = stats_.rbr_misses.load();
    viol["total"] = stats_.violation_total();
    counters["violations"] = viol;
    j["counters"] = counters;

    ClientReport r = client_report();
    nlohmann::json cj;
    cj["sent"] = r.sent;
    cj["completed"] = r.completed;
    cj["mismatches"] = r.mismatches;
    j["clients"] = cj;
    return j.dump(2) + "\n";
}

Status SocketRunner::write_outputs(const std::string& dir) const {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) return Errc::io_error;
    std::ofstream summary(dir + "/summary.json");
    summary << summary_json();
    if (!summary) return Errc::io_error;
    return Errc::ok;
}

}  // namespace zcdp
