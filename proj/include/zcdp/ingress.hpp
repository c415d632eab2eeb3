#ifndef ZCDP_INGRESS_HPP
#define ZCDP_INGRESS_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "zcdp/http.hpp"
#include "zcdp/ipc.hpp"
#include "zcdp/iolib.hpp"
#include "zcdp/mempool.hpp"

namespace zcdp {

// Connection 4-tuple used for receive-side scaling.
struct ConnKey {
    uint32_t src_ip = 0;
    uint32_t dst_ip = 0;
    uint16_t src_port = 0;
    uint16_t dst_port = 0;
};

// FNV-1a over the 4-tuple; connections hash-pin to a worker.
uint32_t rss_hash(const ConnKey& k);

struct AutoscalerConfig {
    double spawn_threshold = 0.60;   // avg utilization >= this -> +1 worker
    double retire_threshold = 0.30;  // avg utilization <  this -> -1 worker
    uint32_t min_workers = 1;
    uint32_t max_workers = 8;
};

// Pure hysteresis policy, one step per evaluation.
class Autoscaler {
  public:
    explicit Autoscaler(AutoscalerConfig cfg) : cfg_(cfg) {}
    // returns the worker-count delta: +1, 0, or -1
    int decide(double avg_utilization, uint32_t current) const;
    const AutoscalerConfig& config() const { return cfg_; }

  private:
    AutoscalerConfig cfg_;
};

struct IngressConfig {
    uint32_t worker_capacity = 64;  // in-flight requests per worker
    AutoscalerConfig autoscaler;
    bool abrupt_retire = false;  // retire without draining in-flight work
};

// Protocol-conversion bookkeeping for one in-flight HTTP request.
struct ConversionEntry {
    uint64_t token = 0;
    uint64_t conn_id = 0;
    bool keep_alive = true;
};

// HTTP front door for one node. Terminates connections, converts request
// bodies into pooled fabric buffers (the inbound boundary copy), dispatches
// them to functions via the node engine, and converts responses back (the
// outbound boundary copy). Requests carry an 8-byte correlation token at the
// head of the payload which functions must echo back; the token's top 16
// bits name the owning worker.
class IngressMaster {
  public:
    IngressMaster(IngressConfig cfg, MemoryManager* mm, ComchChannel* comch,
                  Endpoint* endpoint, NodeId node, RunStats* stats);

    using OutputFn = std::function<void(std::string_view)>;

    uint64_t open_connection(const ConnKey& key, OutputFn out);
    Status on_data(uint64_t conn_id, std::string_view bytes);
    void close_connection(uint64_t conn_id);

    // Drains function responses queued on the gateway endpoint.
    void pump();
    // One autoscaler evaluation: spawn or begin retiring one worker.
    void tick();

    uint32_t worker_count() const;
    uint32_t live_worker_count() const;  // excludes draining workers
    double avg_utilization() const;
    size_t inflight_total() const;
    uint64_t responses_sent() const { return responses_sent_; }

  private:
    struct Worker {
        uint32_t id = 0;
        bool draining = false;
        uint64_t next_seq = 1;
        std::map<uint64_t, ConversionEntry> pending;  // token -> entry
        size_t pinned_conns = 0;
    };
    struct Connection {
        uint64_t id = 0;
        uint32_t worker = 0;
        OutputFn out;
        HttpRequestParser parser;
        bool open = true;
    };

    Worker* worker(uint32_t id);
    Worker& pick_worker(const ConnKey& key);
    void spawn_worker();
    void handle_request(Connection& c, Worker& w, const HttpRequest& req);
    void respond(Connection& c, int status, std::string_view reason,
                 std::string_view body, bool keep_alive);
    void finish_retire();

    IngressConfig cfg_;
    MemoryManager* mm_;
    ComchChannel* comch_;
    Endpoint* endpoint_;
    NodeId node_;
    RunStats* stats_;
    Autoscaler scaler_;

    std::vector<std::unique_ptr<Worker>> workers_;
    std::map<uint64_t, Connection> conns_;
    uint64_t next_conn_id_ = 1;
    uint32_t next_worker_id_ = 0;
    uint64_t responses_sent_ = 0;
};

}  // namespace zcdp

#endif
