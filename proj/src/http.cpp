#include "zcdp/http.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace zcdp {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t'))
        s.remove_suffix(1);
    return s;
}

}  // namespace

void HttpRequestParser::feed(std::string_view bytes) {
    if (failed_) return;
    buf_.append(bytes);
    while (try_parse_one()) {}
}

bool HttpRequestParser::try_parse_one() {
    if (failed_) return false;
    size_t head_end = buf_.find("\r\n\r\n");
    if (head_end == std::string::npos) return false;

    std::string_view head(buf_.data(), head_end);
    size_t line_end = head.find("\r\n");
    std::string_view start =
        line_end == std::string_view::npos ? head : head.substr(0, line_end);

    HttpRequest req;
    size_t sp1 = start.find(' ');
    size_t sp2 = sp1 == std::string_view::npos ? std::string_view::npos
                                               : start.find(' ', sp1 + 1);
    if (sp2 == std::string_view::npos) {
        failed_ = true;
        return false;
    }
    req.method = std::string(start.substr(0, sp1));
    req.target = std::string(start.substr(sp1 + 1, sp2 - sp1 - 1));
    req.version = std::string(start.substr(sp2 + 1));
    if ((req.method != "GET" && req.method != "POST") ||
        req.version.rfind("HTTP/1.", 0) != 0 || req.target.empty()) {
        failed_ = true;
        return false;
    }

    size_t pos = line_end == std::string_view::npos ? head.size() : line_end + 2;
    while (pos < head.size()) {
        size_t eol = head.find("\r\n", pos);
        if (eol == std::string_view::npos) eol = head.size();
        std::string_view line = head.substr(pos, eol - pos);
        pos = eol + 2;
        size_t colon = line.find(':');
        if (colon == std::string_view::npos) {
            failed_ = true;
            return false;
        }
        req.headers[lower(trim(line.substr(0, colon)))] =
            std::string(trim(line.substr(colon + 1)));
    }

    size_t body_len = 0;
    auto cl = req.headers.find("content-length");
    if (cl != req.headers.end()) {
        auto [p, ec] = std::from_chars(cl->second.data(),
                                       cl->second.data() + cl->second.size(),
                                       body_len);
        if (ec != std::errc() || p != cl->second.data() + cl->second.size()) {
            failed_ = true;
            return false;
        }
    }
    if (req.method == "GET" && body_len != 0) {
        failed_ = true;
        return false;
    }
    size_t total = head_end + 4 + body_len;
    if (buf_.size() < total) return false;  // body still in flight

    req.body = buf_.substr(head_end + 4, body_len);
    std::string conn = lower(req.header("connection"));
    // HTTP/1.0 defaults to close, 1.1 to keep-alive; the header overrides
    req.keep_alive =
        req.version == "HTTP/1.0" ? conn == "keep-alive" : conn != "close";
    buf_.erase(0, total);
    ready_.push_back(std::move(req));
    return true;
}

std::optional<HttpRequest> HttpRequestParser::next() {
    if (ready_.empty()) return std::nullopt;
    HttpRequest r = std::move(ready_.front());
    ready_.pop_front();
    return r;
}

std::string render_response(int status, std::string_view reason,
                            std::string_view body, bool keep_alive) {
    std::string out = "HTTP/1.1 " + std::to_string(status) + " " +
                      std::string(reason) + "\r\n";
    out += "Content-Length: " + std::to_string(body.size()) + "\r\n";
    out += keep_alive ? "Connection: keep-alive\r\n" : "Connection: close\r\n";
    out += "\r\n";
    out.append(body);
    return out;
}

}  // namespace zcdp
