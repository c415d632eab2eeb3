#include "doctest.h"

#include <random>

#include "zcdp/mempool.hpp"

using namespace zcdp;

TEST_CASE("alloc/free lifecycle and LIFO recycling") {
    RunStats stats;
    MemoryPool pool(1, 0, 4, 64, &stats);
    auto a = pool.alloc(OwnerRef::function(5));
    REQUIRE(a.ok());
    CHECK(pool.owner_of(a->buffer_id) == OwnerRef::function(5));
    CHECK(pool.free_count() == 3);
    REQUIRE(pool.free(*a, OwnerRef::function(5)).ok());
    CHECK(pool.free_count() == 4);
    // LIFO: the just-freed buffer comes back first
    auto b = pool.alloc(OwnerRef::function(5));
    REQUIRE(b.ok());
    CHECK(b->buffer_id == a->buffer_id);
}

TEST_CASE("pool exhaustion surfaces POOL_EXHAUSTED") {
    RunStats stats;
    MemoryPool pool(1, 0, 2, 64, &stats);
    auto a = pool.alloc(OwnerRef::function(1));
    auto b = pool.alloc(OwnerRef::function(1));
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    auto c = pool.alloc(OwnerRef::function(1));
    CHECK_FALSE(c.ok());
    CHECK(c.error() == Errc::pool_exhausted);
}

TEST_CASE("non-owner access is rejected and counted, never fatal") {
    RunStats stats;
    MemoryPool pool(1, 0, 2, 64, &stats);
    auto a = pool.alloc(OwnerRef::function(1));
    REQUIRE(a.ok());
    uint8_t data[4] = {1, 2, 3, 4};
    CHECK(pool.write(*a, OwnerRef::function(2), data).code == Errc::not_owner);
    CHECK_FALSE(pool.read(*a, OwnerRef::engine(0)).ok());
    CHECK(stats.ownership_violations.load() == 2);
    // the rightful owner still works
    CHECK(pool.write(*a, OwnerRef::function(1), data).ok());
    auto r = pool.read(*a, OwnerRef::function(1));
    REQUIRE(r.ok());
    CHECK((*r)[2] == 3);
}

TEST_CASE("double free detected exactly") {
    RunStats stats;
    MemoryPool pool(1, 0, 2, 64, &stats);
    auto a = pool.alloc(OwnerRef::function(1));
    REQUIRE(pool.free(*a, OwnerRef::function(1)).ok());
    CHECK(pool.free(*a, OwnerRef::function(1)).code == Errc::double_free);
    CHECK(stats.double_frees.load() == 1);
}

TEST_CASE("transfer moves exclusive ownership") {
    RunStats stats;
    MemoryPool pool(1, 0, 2, 64, &stats);
    auto a = pool.alloc(OwnerRef::function(1));
    REQUIRE(pool.transfer(*a, OwnerRef::function(1), OwnerRef::engine(0)).ok());
    CHECK(pool.owner_of(a->buffer_id) == OwnerRef::engine(0));
    // stale holder can no longer free
    CHECK(pool.free(*a, OwnerRef::function(1)).code == Errc::not_owner);
    // wrong-from transfer rejected
    CHECK(pool.transfer(*a, OwnerRef::function(1), OwnerRef::fabric()).code ==
          Errc::not_owner);
    CHECK(pool.free(*a, OwnerRef::engine(0)).ok());
}

TEST_CASE("manager polices cross-tenant allocation and forged descriptors") {
    RunStats stats;
    MemoryManager mm(0, &stats);
    REQUIRE(mm.create_pool(1, 4, 64).ok());
    REQUIRE(mm.create_pool(2, 4, 64).ok());
    mm.bind_function(10, 1);
    mm.bind_function(20, 2);

    // function 10 (tenant 1) may not allocate from tenant 2's pool
    auto bad = mm.alloc(2, OwnerRef::function(10));
    CHECK_FALSE(bad.ok());
    CHECK(bad.error() == Errc::tenant_mismatch);
    CHECK(stats.cross_tenant_rejects.load() == 1);

    auto ok = mm.alloc(1, OwnerRef::function(10));
    REQUIRE(ok.ok());

    // forged tenant id on a descriptor is rejected and counted
    BufferDescriptor forged = *ok;
    forged.tenant_id = 9;
    CHECK_FALSE(mm.resolve(forged).ok());
    CHECK(stats.cross_tenant_rejects.load() == 2);
}

TEST_CASE("export/import handshake gates fabric registration state") {
    RunStats stats;
    MemoryManager mm(0, &stats);
    REQUIRE(mm.create_pool(1, 4, 64).ok());
    CHECK_FALSE(mm.pool(1)->mapped());

    auto blob = mm.export_pool(1);
    REQUIRE(blob.ok());
    auto handle = mm.import_pool(*blob, 0);
    REQUIRE(handle.ok());
    CHECK(mm.pool(1)->mapped());
    CHECK(handle->tenant == 1);

    // importing twice is an error
    auto again = mm.import_pool(*blob, 0);
    CHECK(again.error() == Errc::already_mapped);

    // garbage blob is rejected
    std::vector<uint8_t> junk = {1, 2, 3};
    CHECK(mm.import_pool(junk, 0).error() == Errc::malformed_blob);
}

TEST_CASE("copy_payload is the counted copy path; dma paths are exempt") {
    RunStats stats;
    MemoryPool pool(1, 0, 2, 64, &stats);
    auto a = pool.alloc(OwnerRef::engine(0));
    std::vector<uint8_t> src = {9, 8, 7};
    REQUIRE(copy_payload(pool, *a, OwnerRef::engine(0), src, &stats).ok());
    CHECK(stats.sw_copies.load() == 1);
    REQUIRE(pool.dma_write(a->buffer_id, src).ok());
    REQUIRE(pool.raw_region_write(0, src).ok());
    CHECK(stats.sw_copies.load() == 1);
}

// Randomized ownership/conservation property: descriptors move between
// owners under adversarial interleavings (including forged descriptors and
// wrong-owner operations); the protocol must never corrupt accounting.
TEST_CASE("property: ownership uniqueness and conservation under random ops") {
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        RunStats stats;
        MemoryManager mm0(0, &stats), mm1(1, &stats);
        std::vector<MemoryManager*> mms = {&mm0, &mm1};
        for (MemoryManager* mm : mms)
            for (TenantId t = 1; t <= 3; ++t) {
                REQUIRE(mm->create_pool(t, 32, 64).ok());
                mm->bind_function(FnId(t * 10), t);
            }

        std::mt19937_64 rng(seed);
        std::vector<OwnerRef> owners = {
            OwnerRef::function(10), OwnerRef::function(20),
            OwnerRef::function(30), OwnerRef::engine(0),
            OwnerRef::engine(1),    OwnerRef::fabric(),
            OwnerRef::ingress_worker(0)};
        struct Held {
            MemoryManager* mm;
            BufferDescriptor d;
            OwnerRef owner;
        };
        std::vector<Held> held;

        for (int op = 0; op < 20000; ++op) {
            switch (rng() % 5) {
                case 0: {  // alloc
                    MemoryManager* mm = mms[rng() % 2];
                    TenantId t = TenantId(1 + rng() % 3);
                    OwnerRef who = owners[rng() % owners.size()];
                    auto d = mm->alloc(t, who);
                    if (d.ok()) held.push_back({mm, *d, who});
                    break;
                }
                case 1: {  // legal free
                    if (held.empty()) break;
                    size_t i = rng() % held.size();
                    REQUIRE(held[i].mm->free(held[i].d, held[i].owner).ok());
                    held.erase(held.begin() + ptrdiff_t(i));
                    break;
                }
                case 2: {  // legal transfer
                    if (held.empty()) break;
                    size_t i = rng() % held.size();
                    OwnerRef to = owners[rng() % owners.size()];
                    if (to == held[i].owner) break;
                    REQUIRE(held[i]
                                .mm->transfer(held[i].d, held[i].owner, to)
                                .ok());
                    held[i].owner = to;
                    break;
                }
                case 3: {  // adversarial: wrong-owner op must be rejected
                    if (held.empty()) break;
                    size_t i = rng() % held.size();
                    OwnerRef wrong = owners[rng() % owners.size()];
                    if (wrong == held[i].owner) break;
                    CHECK_FALSE(held[i].mm->free(held[i].d, wrong).ok());
                    CHECK(held[i].mm->pool(held[i].d.tenant_id)
                              ->owner_of(held[i].d.buffer_id) ==
                          held[i].owner);
                    break;
                }
                default: {  // adversarial: forged tenant id
                    if (held.empty()) break;
                    size_t i = rng() % held.size();
                    BufferDescriptor forged = held[i].d;
                    forged.tenant_id = TenantId(4 + rng() % 3);
                    CHECK_FALSE(held[i].mm->resolve(forged).ok());
                    break;
                }
            }
        }
        // drain and check conservation
        for (const Held& h : held) REQUIRE(h.mm->free(h.d, h.owner).ok());
        for (MemoryManager* mm : mms)
            for (TenantId t = 1; t <= 3; ++t)
                CHECK(mm->pool(t)->free_count() == 32);
        CHECK(stats.ownership_violations.load() > 0);  // adversarial ops hit
        CHECK(stats.double_frees.load() == 0);
    }
}
