#include "doctest.h"

#include "zcdp/fabric.hpp"

using namespace zcdp;

namespace {

struct Rig {
    SimKernel kernel;
    RunStats stats;
    MemoryManager mm0{0, &stats};
    MemoryManager mm1{1, &stats};
    std::unique_ptr<SimFabric> fabric;

    explicit Rig(FabricConfig cfg = {}) {
        fabric = std::make_unique<SimFabric>(&kernel, &stats, cfg);
        fabric->add_node(0, &mm0);
        fabric->add_node(1, &mm1);
        for (MemoryManager* mm : {&mm0, &mm1}) {
            REQUIRE(mm->create_pool(1, 16, 256).ok());
            auto blob = mm->export_pool(1);
            REQUIRE(blob.ok());
            REQUIRE(mm->import_pool(*blob, mm->node()).ok());
            REQUIRE(fabric->register_memory(1, mm->node()).ok());
        }
    }

    uint64_t connected_qp(NodeId from = 0, NodeId to = 1) {
        auto qp = fabric->create_qp(1, from, to);
        REQUIRE(qp.ok());
        kernel.run_until(kernel.now() + fabric->config().link.connect_delay_ns);
        return *qp;
    }
};

}  // namespace

TEST_CASE("qp creation handshake takes connect_delay before use") {
    Rig rig;
    auto qp = rig.fabric->create_qp(1, 0, 1);
    REQUIRE(qp.ok());
    CHECK(rig.fabric->qp_info(*qp).state == QpState::connecting);

    auto d = rig.mm0.alloc(1, OwnerRef::engine(0));
    WorkRequest wr;
    wr.opcode = Opcode::send;
    wr.descriptor = *d;
    CHECK(rig.fabric->post_send(*qp, wr, OwnerRef::engine(0)).code ==
          Errc::qp_not_ready);

    rig.kernel.run_until(rig.fabric->config().link.connect_delay_ns);
    CHECK(rig.fabric->qp_info(*qp).state == QpState::inactive);
    CHECK(rig.fabric->post_send(*qp, wr, OwnerRef::engine(0)).ok());
}

TEST_CASE("create_qp rejects self-connection and unknown nodes") {
    Rig rig;
    CHECK(rig.fabric->create_qp(1, 0, 0).error() == Errc::unknown_node);
    CHECK(rig.fabric->create_qp(1, 0, 9).error() == Errc::unknown_node);
    CHECK(rig.fabric->create_qp(7, 0, 1).error() == Errc::unknown_tenant);
}

TEST_CASE("two-sided send matches a posted receive and completes both ends") {
    Rig rig;
    uint64_t qp = rig.connected_qp();

    auto recv = rig.mm1.alloc(1, OwnerRef::engine(1));
    REQUIRE(rig.fabric->post_recv(1, 1, *recv, OwnerRef::engine(1)).ok());
    CHECK(rig.fabric->rq_depth(1, 1) == 1);

    auto send = rig.mm0.alloc(1, OwnerRef::engine(0));
    uint8_t payload[] = {0xaa, 0xbb, 0xcc};
    REQUIRE(rig.mm0.pool(1)->write(*send, OwnerRef::engine(0), payload).ok());
    WorkRequest wr;
    wr.opcode = Opcode::send;
    wr.descriptor = *send;
    wr.descriptor.length = 3;
    wr.descriptor.src_fn = 10;
    wr.descriptor.dst_fn = 20;
    REQUIRE(rig.fabric->post_send(qp, wr, OwnerRef::engine(0)).ok());
    CHECK(rig.mm0.pool(1)->owner_of(send->buffer_id) == OwnerRef::fabric());

    rig.kernel.run_all();

    auto cq1 = rig.fabric->poll_cq(1, 8);
    REQUIRE(cq1.size() == 1);
    CHECK(cq1[0].direction == CqDirection::rx_done);
    CHECK(cq1[0].byte_len == 3);
    CHECK(cq1[0].remote_meta.src_fn == 10);
    CHECK(cq1[0].remote_meta.dst_fn == 20);
    // payload landed via emulated DMA, no software copy
    auto got = rig.mm1.pool(1)->read(*recv, OwnerRef::engine(1));
    REQUIRE(got.ok());
    CHECK((*got)[0] == 0xaa);
    CHECK((*got)[2] == 0xcc);
    CHECK(rig.stats.sw_copies.load() == 0);

    auto cq0 = rig.fabric->poll_cq(0, 8);
    REQUIRE(cq0.size() == 1);
    CHECK(cq0[0].direction == CqDirection::tx_done);
    CHECK(rig.mm0.pool(1)->owner_of(send->buffer_id) == OwnerRef::engine(0));
    CHECK(rig.fabric->qp_info(qp).outstanding == 0);
}

TEST_CASE("sends on one QP deliver in posting order regardless of size") {
    Rig rig;
    uint64_t qp = rig.connected_qp();
    for (int i = 0; i < 3; ++i) {
        auto r = rig.mm1.alloc(1, OwnerRef::engine(1));
        REQUIRE(rig.fabric->post_recv(1, 1, *r, OwnerRef::engine(1)).ok());
    }
    // big slow message first, then small fast ones
    uint32_t sizes[] = {200, 1, 1};
    for (uint32_t len : sizes) {
        auto s = rig.mm0.alloc(1, OwnerRef::engine(0));
        WorkRequest wr;
        wr.opcode = Opcode::send;
        wr.descriptor = *s;
        wr.descriptor.length = len;
        REQUIRE(rig.fabric->post_send(qp, wr, OwnerRef::engine(0)).ok());
    }
    rig.kernel.run_all();
    auto cq = rig.fabric->poll_cq(1, 8);
    REQUIRE(cq.size() == 3);
    CHECK(cq[0].byte_len == 200);
    CHECK(cq[1].byte_len == 1);
    CHECK(cq[2].byte_len == 1);
}

TEST_CASE("RNR: unmatched send stalls, a late post_recv rescues it") {
    Rig rig;
    uint64_t qp = rig.connected_qp();
    auto s = rig.mm0.alloc(1, OwnerRef::engine(0));
    WorkRequest wr;
    wr.opcode = Opcode::send;
    wr.descriptor = *s;
    wr.descriptor.length = 8;
    REQUIRE(rig.fabric->post_send(qp, wr, OwnerRef::engine(0)).ok());

    // arrival happens, no receive posted -> waiting
    rig.kernel.run_until(rig.kernel.now() + 1'000'000);
    CHECK(rig.fabric->rq_waiting(1, 1) == 1);
    CHECK(rig.fabric->poll_cq(1, 8).empty());

    auto r = rig.mm1.alloc(1, OwnerRef::engine(1));
    REQUIRE(rig.fabric->post_recv(1, 1, *r, OwnerRef::engine(1)).ok());
    CHECK(rig.fabric->rq_waiting(1, 1) == 0);
    CHECK(rig.fabric->poll_cq(1, 8).size() == 1);
    CHECK(rig.stats.rnr_timeouts.load() == 0);
}

TEST_CASE("RNR: stall past the timeout fails the send") {
    Rig rig;
    uint64_t qp = rig.connected_qp();
    auto s = rig.mm0.alloc(1, OwnerRef::engine(0));
    WorkRequest wr;
    wr.opcode = Opcode::send;
    wr.descriptor = *s;
    wr.descriptor.length = 8;
    REQUIRE(rig.fabric->post_send(qp, wr, OwnerRef::engine(0)).ok());
    rig.kernel.run_all();

    CHECK(rig.stats.rnr_timeouts.load() == 1);
    auto cq = rig.fabric->poll_cq(0, 8);
    REQUIRE(cq.size() == 1);
    CHECK(cq[0].status == CqStatus::rnr_timeout);
    // buffer returned to the sender's engine, not leaked
    CHECK(rig.mm0.pool(1)->owner_of(s->buffer_id) == OwnerRef::engine(0));
    CHECK(rig.fabric->rq_waiting(1, 1) == 0);
}

TEST_CASE("per-QP outstanding cap yields QP_BUSY") {
    FabricConfig cfg;
    cfg.max_outstanding = 2;
    Rig rig(cfg);
    uint64_t qp = rig.connected_qp();
    WorkRequest wrs[3];
    for (int i = 0; i < 3; ++i) {
        auto s = rig.mm0.alloc(1, OwnerRef::engine(0));
        wrs[i].opcode = Opcode::send;
        wrs[i].descriptor = *s;
        wrs[i].descriptor.length = 1;
    }
    CHECK(rig.fabric->post_send(qp, wrs[0], OwnerRef::engine(0)).ok());
    CHECK(rig.fabric->post_send(qp, wrs[1], OwnerRef::engine(0)).ok());
    CHECK(rig.fabric->post_send(qp, wrs[2], OwnerRef::engine(0)).code ==
          Errc::qp_busy);
}

TEST_CASE("cross-tenant receive posting is rejected") {
    Rig rig;
    auto d = rig.mm1.alloc(1, OwnerRef::engine(1));
    BufferDescriptor forged = *d;
    forged.tenant_id = 2;
    CHECK(rig.fabric->post_recv(1, 2, forged, OwnerRef::engine(1)).error() ==
          Errc::unknown_tenant);
    // descriptor lies about its tenant vs the RQ it targets
    CHECK(rig.fabric->post_recv(1, 1, forged, OwnerRef::engine(1)).error() ==
          Errc::tenant_mismatch);
    CHECK(rig.stats.cross_tenant_rejects.load() == 1);
}

TEST_CASE("one-sided write is gated and frames the slot image") {
    FabricConfig cfg;
    cfg.one_sided_enabled = false;
    {
        Rig rig(cfg);
        uint64_t qp = rig.connected_qp();
        auto s = rig.mm0.alloc(1, OwnerRef::engine(0));
        WorkRequest wr;
        wr.opcode = Opcode::write;
        wr.descriptor = *s;
        CHECK(rig.fabric->post_write(qp, wr, 0, 0, OwnerRef::engine(0)).code ==
              Errc::mode_disabled);
    }
    cfg.one_sided_enabled = true;
    Rig rig(cfg);
    uint64_t qp = rig.connected_qp();
    auto s = rig.mm0.alloc(1, OwnerRef::engine(0));
    uint8_t payload[] = {1, 2, 3, 4};
    REQUIRE(rig.mm0.pool(1)->write(*s, OwnerRef::engine(0), payload).ok());
    WorkRequest wr;
    wr.opcode = Opcode::write;
    wr.descriptor = *s;
    wr.descriptor.length = 4;
    const uint32_t slot = 64;
    REQUIRE(rig.fabric->post_write(qp, wr, 256, slot, OwnerRef::engine(0)).ok());
    rig.kernel.run_all();

    // only the sender gets a completion; the receiver must poll memory
    CHECK(rig.fabric->poll_cq(1, 8).empty());
    CHECK(rig.fabric->poll_cq(0, 8).size() == 1);
    auto img = rig.mm1.pool(1)->raw_region_read(256, slot);
    BufferDescriptor hdr = decode_descriptor(img.data());
    CHECK(hdr.length == 4);
    CHECK(img[kDescriptorWireSize] == 1);
    CHECK(img[kDescriptorWireSize + 3] == 4);
    CHECK(img[slot - 1] == 1);  // completion flag at the tail

    // out-of-range writes are bounds-checked
    auto s2 = rig.mm0.alloc(1, OwnerRef::engine(0));
    WorkRequest wr2;
    wr2.opcode = Opcode::write;
    wr2.descriptor = *s2;
    wr2.descriptor.length = 4;
    CHECK(rig.fabric
              ->post_write(qp, wr2, rig.mm1.pool(1)->extent() - 8, slot,
                           OwnerRef::engine(0))
              .code == Errc::offset_out_of_range);
}
