#include "doctest.h"

#include <random>

#include "zcdp/dne.hpp"

using namespace zcdp;

namespace {

// Brute-force deficit-round-robin reference, written straight from the
// scheduler's stated rules: visit backlogged tenants in ascending id order,
// grant weight*quantum credit per visit, emit head-of-line messages while
// credit covers them, reset credit when a tenant goes idle.
struct RefQueue {
    uint32_t weight = 1;
    uint64_t deficit = 0;
    std::deque<uint32_t> sizes;
};

std::vector<std::pair<TenantId, uint32_t>> reference_dwrr(
    std::map<TenantId, RefQueue>& qs, uint64_t quantum, int rounds) {
    std::vector<std::pair<TenantId, uint32_t>> out;
    for (int r = 0; r < rounds; ++r) {
        for (auto& [id, q] : qs) {
            if (q.sizes.empty()) {
                q.deficit = 0;
                continue;
            }
            q.deficit += uint64_t(q.weight) * quantum;
            while (!q.sizes.empty() && q.deficit >= q.sizes.front()) {
                q.deficit -= q.sizes.front();
                out.emplace_back(id, q.sizes.front());
                q.sizes.pop_front();
            }
            if (q.sizes.empty()) q.deficit = 0;
        }
    }
    return out;
}

struct Rig {
    SimKernel kernel;
    RunStats stats;
    MemoryManager mm0{0, &stats};
    MemoryManager mm1{1, &stats};
    std::unique_ptr<SimFabric> fabric;
    std::unique_ptr<Engine> e0;
    std::unique_ptr<Engine> e1;

    explicit Rig(EngineConfig cfg = {}, uint32_t pool_buffers = 256,
                 std::vector<TenantId> tenants = {1}) {
        FabricConfig fcfg;
        fabric = std::make_unique<SimFabric>(&kernel, &stats, fcfg);
        fabric->add_node(0, &mm0);
        fabric->add_node(1, &mm1);
        e0 = std::make_unique<Engine>(0, fabric.get(), &mm0, &stats, cfg);
        e1 = std::make_unique<Engine>(1, fabric.get(), &mm1, &stats, cfg);
        auto now = [this] { return kernel.now(); };
        e0->set_now_fn(now);
        e1->set_now_fn(now);
        for (TenantId t : tenants) {
            REQUIRE(mm0.create_pool(t, pool_buffers, 4096).ok());
            REQUIRE(mm1.create_pool(t, pool_buffers, 4096).ok());
            REQUIRE(e0->attach_tenant(t, 1).ok());
            REQUIRE(e1->attach_tenant(t, 1).ok());
            REQUIRE(e0->map_tenant_pool(t).ok());
            REQUIRE(e1->map_tenant_pool(t).ok());
            REQUIRE(e0->connect_peer(t, 1).ok());
            REQUIRE(e1->connect_peer(t, 0).ok());
        }
        e0->set_route(20, 1);
        e1->set_route(20, 1);
        kernel.run_until(fabric->config().link.connect_delay_ns + 1);
    }
};

}  // namespace

TEST_CASE("DWRR emission order equals brute-force reference") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 30; ++trial) {
        SimKernel kernel;
        RunStats stats;
        SimFabric fabric(&kernel, &stats, {});
        MemoryManager mm(0, &stats);
        EngineConfig cfg;
        cfg.quantum_base = uint32_t(256 << (rng() % 4));
        Engine engine(0, &fabric, &mm, &stats, cfg);

        std::map<TenantId, RefQueue> ref;
        int tenant_count = int(2 + rng() % 4);
        for (TenantId t = 1; t <= tenant_count; ++t) {
            uint32_t weight = uint32_t(1 + rng() % 8);
            REQUIRE(engine.attach_tenant(t, weight).ok());
            ref[t].weight = weight;
            size_t backlog = rng() % 200;
            for (size_t i = 0; i < backlog; ++i) {
                uint32_t size = uint32_t(1 + rng() % 4096);
                ref[t].sizes.push_back(size);
                BufferDescriptor d;
                d.tenant_id = t;
                d.buffer_id = uint32_t(i);
                d.length = size;
                engine.enqueue_tx(d);
            }
        }
        int rounds = int(1 + rng() % 6);
        auto expected = reference_dwrr(ref, cfg.quantum_base, rounds);
        auto got = engine.dwrr_schedule(rounds);
        REQUIRE(got.size() == expected.size());
        for (size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].tenant_id == expected[i].first);
            CHECK(got[i].length == expected[i].second);
        }
    }
}

TEST_CASE("FCFS spends the aggregate byte budget in arrival order") {
    EngineConfig cfg;
    cfg.quantum_base = 1000;
    cfg.scheduler = SchedulerMode::fcfs;
    Rig rig(cfg, 256, {1, 2});
    EndpointRegistry reg;
    auto ep = reg.register_endpoint(20, 4096);
    ComchChannel ch(20, 1, *ep, 4096);
    REQUIRE(rig.e1->register_channel(&ch).ok());

    // 10 arrivals alternating tenants; budget = (1+1)*1000 B per pass
    for (int i = 0; i < 10; ++i) {
        TenantId t = TenantId(i % 2 + 1);
        auto d = rig.mm0.alloc(t, OwnerRef::engine(0));
        REQUIRE(d.ok());
        BufferDescriptor msg = *d;
        msg.length = 900;
        msg.dst_fn = 20;
        rig.e0->enqueue_tx(msg);
    }
    IterationReport r = rig.e0->iterate();
    CHECK(r.tx_emitted == 2);  // 2 * 900 <= 2000 < 3 * 900
    CHECK(rig.e0->tenant(1)->emitted == 1);  // strict arrival order
    CHECK(rig.e0->tenant(2)->emitted == 1);
    CHECK(rig.e0->pending_total() == 8);
}

TEST_CASE("engine moves a message end to end; RBR stays balanced") {
    Rig rig;
    // endpoint for fn 20 on node 1
    EndpointRegistry reg;
    auto ep = reg.register_endpoint(20, 64);
    ComchChannel ch(20, 1, *ep, 64);
    REQUIRE(rig.e1->register_channel(&ch).ok());

    auto d = rig.mm0.alloc(1, OwnerRef::engine(0));
    REQUIRE(d.ok());
    BufferDescriptor msg = *d;
    msg.length = 1000;
    msg.src_fn = 10;
    msg.dst_fn = 20;
    rig.e0->enqueue_tx(msg);

    for (int i = 0; i < 10 && (*ep)->depth() == 0; ++i) {
        rig.e0->iterate();
        rig.e1->iterate();
        CHECK(rig.e0->rbr_size() ==
              rig.e0->recv_posted_total() - rig.e0->rx_completed_total());
        CHECK(rig.e1->rbr_size() ==
              rig.e1->recv_posted_total() - rig.e1->rx_completed_total());
        rig.kernel.run_until(rig.kernel.now() + 1'000'000);
    }
    REQUIRE((*ep)->depth() == 1);
    auto got = (*ep)->pop();
    CHECK(got->length == 1000);
    CHECK(got->src_fn == 10);
    CHECK(rig.mm1.pool(1)->owner_of(got->buffer_id) == OwnerRef::function(20));

    // quiescence: receive queue back at its initial depth after reposting
    rig.e1->iterate();
    auto* ts = rig.e1->tenant(1);
    CHECK(rig.fabric->rq_depth(1, 1) == ts->initial_rq_depth);
    // sender buffer recycled
    REQUIRE(rig.mm1.pool(1)->free(*got, OwnerRef::function(20)).ok());
    CHECK(rig.mm0.pool(1)->free_count() ==
          256 - rig.e0->tenant(1)->initial_rq_depth);
}

TEST_CASE("unroutable and channel-less messages are dead-lettered") {
    Rig rig;
    auto d = rig.mm0.alloc(1, OwnerRef::engine(0));
    BufferDescriptor msg = *d;
    msg.length = 10;
    msg.dst_fn = 99;  // no route anywhere
    rig.e0->enqueue_tx(msg);
    rig.e0->iterate();
    CHECK(rig.e0->dead_letter_size() == 1);
    CHECK(rig.stats.dead_letters.load() == 1);
    rig.e0->drain_dead_letters();
    CHECK(rig.mm0.pool(1)->free_count() ==
          256 - rig.e0->tenant(1)->initial_rq_depth);
}

TEST_CASE("QP pool: active cap honored, drained QPs deactivate") {
    EngineConfig cfg;
    cfg.active_cap = 2;
    cfg.qps_per_peer = 4;
    Rig rig(cfg);
    EndpointRegistry reg;
    auto ep = reg.register_endpoint(20, 4096);
    ComchChannel ch(20, 1, *ep, 4096);
    REQUIRE(rig.e1->register_channel(&ch).ok());

    std::mt19937_64 rng(7);
    for (int iter = 0; iter < 60; ++iter) {
        size_t burst = rng() % 8;
        for (size_t i = 0; i < burst; ++i) {
            auto d = rig.mm0.alloc(1, OwnerRef::engine(0));
            if (!d.ok()) break;
            BufferDescriptor msg = *d;
            msg.length = uint32_t(1 + rng() % 2000);
            msg.dst_fn = 20;
            rig.e0->enqueue_tx(msg);
        }
        rig.e0->iterate();
        rig.e1->iterate();
        CHECK(rig.e0->active_qp_count() <= cfg.active_cap);
        // an ACTIVE QP at the boundary has work outstanding or queued
        bool backlog = rig.e0->pending_total() > 0;
        for (const QpInfo& qp : rig.e0->qp_snapshot())
            if (qp.state == QpState::active)
                CHECK((qp.outstanding > 0 || backlog));
        while (auto got = (*ep)->pop())
            rig.mm1.pool(1)->free(*got, OwnerRef::function(20));
        rig.kernel.run_until(rig.kernel.now() + 1'000'000);
    }
    // full drain: within one iteration every QP is INACTIVE again
    for (int i = 0; i < 80; ++i) {
        rig.e0->iterate();
        rig.e1->iterate();
        while (auto got = (*ep)->pop())
            rig.mm1.pool(1)->free(*got, OwnerRef::function(20));
        rig.kernel.run_until(rig.kernel.now() + 1'000'000);
    }
    CHECK(rig.e0->active_qp_count() == 0);
}

TEST_CASE("work conservation: a message larger than one quantum still emits") {
    EngineConfig cfg;
    cfg.quantum_base = 128;
    Rig rig(cfg);
    EndpointRegistry reg;
    auto ep = reg.register_endpoint(20, 64);
    ComchChannel ch(20, 1, *ep, 64);
    REQUIRE(rig.e1->register_channel(&ch).ok());

    auto d = rig.mm0.alloc(1, OwnerRef::engine(0));
    BufferDescriptor msg = *d;
    msg.length = 4000;  // 32 quanta worth
    msg.dst_fn = 20;
    rig.e0->enqueue_tx(msg);
    IterationReport r = rig.e0->iterate();
    CHECK(r.tx_emitted == 1);
}

TEST_CASE("severed channel rejects sends") {
    Rig rig;
    EndpointRegistry reg;
    auto ep = reg.register_endpoint(20, 64);
    ComchChannel ch(20, 1, *ep, 64);
    REQUIRE(rig.e1->register_channel(&ch).ok());
    rig.e1->sever_channel(20);
    BufferDescriptor d;
    CHECK(ch.send(ComchSide::function, d).code == Errc::disconnected);
}
