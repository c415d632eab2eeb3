#ifndef ZCDP_CLOCK_HPP
#define ZCDP_CLOCK_HPP

#include <cstdint>
#include <functional>
#include <queue>
#include <vector>

#include "zcdp/common.hpp"

namespace zcdp {

// Discrete-event kernel with a virtual nanosecond clock. Events at equal
// times fire in scheduling order (ties broken by a sequence number), which
// keeps runs bit-reproducible.
class SimKernel {
  public:
    using Handler = std::function<void()>;

    SimTime now() const { return now_; }

    void at(SimTime t, Handler h) {
        if (t < now_) t = now_;
        queue_.push(Event{t, seq_++, std::move(h)});
    }
    void after(SimTime dt, Handler h) { at(now_ + dt, std::move(h)); }

    bool empty() const { return queue_.empty(); }
    size_t pending() const { return queue_.size(); }

    // Runs the next event; returns false when the queue is empty.
    bool step() {
        if (queue_.empty()) return false;
        Event ev = std::move(const_cast<Event&>(queue_.top()));
        queue_.pop();
        now_ = ev.time;
        ev.handler();
        return true;
    }

    // Runs events with time <= t, then advances the clock to t.
    void run_until(SimTime t) {
        while (!queue_.empty() && queue_.top().time <= t) step();
        if (now_ < t) now_ = t;
    }

    void run_all() {
        while (step()) {}
    }

  private:
    struct Event {
        SimTime time;
        uint64_t seq;
        Handler handler;
        bool operator>(const Event& o) const {
            if (time != o.time) return time > o.time;
            return seq > o.seq;
        }
    };

    SimTime now_ = 0;
    uint64_t seq_ = 0;
    std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
};

}  // namespace zcdp

#endif
