#ifndef ZCDP_HTTP_HPP
#define ZCDP_HTTP_HPP

#include <deque>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace zcdp {

struct HttpRequest {
    std::string method;
    std::string target;
    std::string version;
    std::map<std::string, std::string> headers;  // keys lowercased
    std::string body;
    bool keep_alive = true;

    std::string header(const std::string& key) const {
        auto it = headers.find(key);
        return it == headers.end() ? std::string() : it->second;
    }
};

// Incremental HTTP/1.1 request parser. Supports GET and POST with
// Content-Length framing (no chunked encoding) and connection keep-alive;
// pipelined requests on one connection are parsed in order.
class HttpRequestParser {
  public:
    // Appends connection bytes; complete requests become poppable via next().
    void feed(std::string_view bytes);
    std::optional<HttpRequest> next();
    bool failed() const { return failed_; }
    size_t buffered() const { return buf_.size(); }

  private:
    bool try_parse_one();

    std::string buf_;
    std::deque<HttpRequest> ready_;
    bool failed_ = false;
};

std::string render_response(int status, std::string_view reason,
                            std::string_view body, bool keep_alive);

}  // namespace zcdp

#endif
