#ifndef ZCDP_IPC_HPP
#define ZCDP_IPC_HPP

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>

#include "zcdp/common.hpp"
#include "zcdp/descriptor.hpp"

namespace zcdp {

enum class Wait { poll, event };

// Bounded FIFO of descriptors owned by one function. Single producer per
// direction; safe across two contexts. Only 16-byte descriptors traverse the
// queue, never payloads.
class Endpoint {
  public:
    Endpoint(FnId fn, size_t capacity) : fn_(fn), capacity_(capacity) {}

    FnId fn() const { return fn_; }

    Status push(const BufferDescriptor& d) {
        {
            std::lock_guard lk(mu_);
            if (q_.size() >= capacity_) return Errc::channel_full;
            q_.push_back(d);
            bytes_moved_ += kDescriptorWireSize;
        }
        cv_.notify_one();
        if (notify_) notify_();
        return Errc::ok;
    }

    std::optional<BufferDescriptor> pop(Wait wait = Wait::poll) {
        std::unique_lock lk(mu_);
        if (wait == Wait::event) cv_.wait(lk, [&] { return !q_.empty() || closed_; });
        if (q_.empty()) return std::nullopt;
        BufferDescriptor d = q_.front();
        q_.pop_front();
        return d;
    }

    void close() {
        {
            std::lock_guard lk(mu_);
            closed_ = true;
        }
        cv_.notify_all();
    }

    size_t depth() const {
        std::lock_guard lk(mu_);
        return q_.size();
    }
    uint64_t bytes_moved() const {
        std::lock_guard lk(mu_);
        return bytes_moved_;
    }

    // Readiness hook; in SIM mode the harness uses it to schedule the owning
    // function.
    void set_notify(std::function<void()> fn) { notify_ = std::move(fn); }

  private:
    FnId fn_;
    size_t capacity_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<BufferDescriptor> q_;
    uint64_t bytes_moved_ = 0;
    bool closed_ = false;
    std::function<void()> notify_;
};

// sockmap analogue: per-node fn_id -> endpoint table, written only during
// deployment.
class EndpointRegistry {
  public:
    Result<Endpoint*> register_endpoint(FnId fn, size_t capacity) {
        if (endpoints_.count(fn)) return Errc::duplicate_fn;
        auto ep = std::make_unique<Endpoint>(fn, capacity);
        Endpoint* p = ep.get();
        endpoints_[fn] = std::move(ep);
        return p;
    }

    Result<Endpoint*> lookup(FnId fn) {
        auto it = endpoints_.find(fn);
        if (it == endpoints_.end()) return Errc::not_found;
        return it->second.get();
    }

    const std::map<FnId, std::unique_ptr<Endpoint>>& all() const {
        return endpoints_;
    }

  private:
    std::map<FnId, std::unique_ptr<Endpoint>> endpoints_;
};

enum class ComchSide { function, engine };

// Event-driven engine<->function channel. The function->engine direction is
// an SPSC queue the engine polls inside its loop; the engine->function
// direction delivers straight into the function's endpoint so local and
// remote arrivals merge FIFO-by-arrival.
class ComchChannel {
  public:
    ComchChannel(FnId fn, TenantId tenant, Endpoint* fn_endpoint,
                 size_t capacity)
        : fn_(fn), tenant_(tenant), fn_endpoint_(fn_endpoint),
          capacity_(capacity) {}

    FnId fn() const { return fn_; }
    TenantId tenant() const { return tenant_; }

    Status send(ComchSide side, const BufferDescriptor& d) {
        if (severed_) return Errc::disconnected;
        if (side == ComchSide::function) {
            std::lock_guard lk(mu_);
            if (to_engine_.size() >= capacity_) return Errc::channel_full;
            to_engine_.push_back(d);
            bytes_moved_ += kDescriptorWireSize;
            return Errc::ok;
        }
        return fn_endpoint_->push(d);
    }

    // Engine-side non-blocking poll.
    std::optional<BufferDescriptor> engine_poll() {
        std::lock_guard lk(mu_);
        if (to_engine_.empty()) return std::nullopt;
        BufferDescriptor d = to_engine_.front();
        to_engine_.pop_front();
        return d;
    }

    std::optional<BufferDescriptor> recv(ComchSide side, Wait wait) {
        if (side == ComchSide::engine) return engine_poll();
        return fn_endpoint_->pop(wait);
    }

    // The engine may sever a misbehaving tenant's channel; subsequent sends
    // fail with DISCONNECTED.
    void sever() { severed_ = true; }
    bool severed() const { return severed_; }

    size_t engine_backlog() const {
        std::lock_guard lk(mu_);
        return to_engine_.size();
    }
    uint64_t bytes_moved() const {
        std::lock_guard lk(mu_);
        return bytes_moved_;
    }

  private:
    FnId fn_;
    TenantId tenant_;
    Endpoint* fn_endpoint_;
    size_t capacity_;
    mutable std::mutex mu_;
    std::deque<BufferDescriptor> to_engine_;
    uint64_t bytes_moved_ = 0;
    std::atomic<bool> severed_{false};
};

}  // namespace zcdp

#endif
