#ifndef ZCDP_COMMON_HPP
#define ZCDP_COMMON_HPP

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>

namespace zcdp {

using TenantId = uint16_t;
using FnId = uint16_t;
using NodeId = uint16_t;
using BufferId = uint32_t;
using SimTime = uint64_t;  // nanoseconds

// fn_id 0 is reserved for the ingress gateway endpoint on every node.
inline constexpr FnId kIngressFn = 0;

enum class Errc : uint8_t {
    ok = 0,
    duplicate_registration,
    unknown_pool,
    unknown_tenant,
    unknown_node,
    not_owner,
    qp_not_ready,
    qp_busy,
    rnr_timeout,
    tenant_mismatch,
    offset_out_of_range,
    mode_disabled,
    duplicate_pool,
    zero_capacity,
    pool_exhausted,
    double_free,
    malformed_blob,
    already_mapped,
    no_route,
    active_cap_exceeded,
    rbr_miss,
    unknown_dst_fn,
    duplicate_fn,
    not_found,
    channel_full,
    disconnected,
    lock_timeout,
    rdma_pool_exhausted,
    stale_response,
    config_invalid,
    io_error,
};

const char* to_string(Errc e);

struct Status {
    Errc code = Errc::ok;
    Status() = default;
    Status(Errc c) : code(c) {}
    bool ok() const { return code == Errc::ok; }
    explicit operator bool() const { return ok(); }
};

template <typename T>
class Result {
  public:
    Result(T v) : val_(std::move(v)), err_(Errc::ok) {}
    Result(Errc e) : err_(e) {}
    bool ok() const { return err_ == Errc::ok; }
    explicit operator bool() const { return ok(); }
    T& value() { return *val_; }
    const T& value() const { return *val_; }
    T& operator*() { return *val_; }
    const T* operator->() const { return &*val_; }
    T* operator->() { return &*val_; }
    Errc error() const { return err_; }

  private:
    std::optional<T> val_;
    Errc err_;
};

// Counters shared by every component of one run. Software copies made by
// engine/function/ingress code are counted here; payload movement done by the
// emulated link (the stand-in for NIC DMA) is exempt.
struct RunStats {
    std::atomic<uint64_t> sw_copies{0};          // all software payload copies
    std::atomic<uint64_t> ingress_copies_in{0};  // HTTP body -> fabric buffer
    std::atomic<uint64_t> ingress_copies_out{0}; // fabric buffer -> HTTP body
    std::atomic<uint64_t> owrc_copies{0};        // staging-pool -> unified pool

    std::atomic<uint64_t> fabric_data_ops{0};    // sends + one-sided writes
    std::atomic<uint64_t> lock_ops{0};           // OWDL acquire/release messages
    std::atomic<uint64_t> poll_discoveries{0};   // receiver-side flag polls that hit

    std::atomic<uint64_t> ownership_violations{0};
    std::atomic<uint64_t> double_frees{0};
    std::atomic<uint64_t> cross_tenant_rejects{0};

    std::atomic<uint64_t> fn_exchanges{0};       // descriptor deliveries to functions
    std::atomic<uint64_t> dead_letters{0};
    std::atomic<uint64_t> rnr_timeouts{0};
    std::atomic<uint64_t> lock_timeouts{0};
    std::atomic<uint64_t> stale_responses{0};
    std::atomic<uint64_t> rbr_misses{0};

    // copies on function-to-function paths (excludes the permitted ingress
    // boundary copies and the OWRC staging copy, which are counted above)
    uint64_t other_copies() const {
        return sw_copies.load() - ingress_copies_in.load() -
               ingress_copies_out.load() - owrc_copies.load();
    }
    uint64_t violation_total() const {
        return ownership_violations.load() + double_frees.load() +
               cross_tenant_rejects.load() + rbr_misses.load();
    }
};

}  // namespace zcdp

#endif
