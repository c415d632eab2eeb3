#include "doctest.h"

#include "zcdp/http.hpp"

using namespace zcdp;

TEST_CASE("parses a POST with Content-Length body") {
    HttpRequestParser p;
    p.feed("POST /f/7 HTTP/1.1\r\nHost: x\r\nContent-Length: 5\r\n\r\nhello");
    auto r = p.next();
    REQUIRE(r.has_value());
    CHECK(r->method == "POST");
    CHECK(r->target == "/f/7");
    CHECK(r->version == "HTTP/1.1");
    CHECK(r->body == "hello");
    CHECK(r->keep_alive);
    CHECK(r->header("host") == "x");
    CHECK(p.buffered() == 0);
    CHECK_FALSE(p.next().has_value());
}

TEST_CASE("byte-at-a-time feeding yields the same request") {
    std::string wire =
        "POST /f/1 HTTP/1.1\r\nContent-Length: 3\r\n\r\nabc";
    HttpRequestParser p;
    for (char c : wire) p.feed(std::string_view(&c, 1));
    auto r = p.next();
    REQUIRE(r.has_value());
    CHECK(r->body == "abc");
}

TEST_CASE("header names are case-insensitive, values trimmed") {
    HttpRequestParser p;
    p.feed("GET / HTTP/1.1\r\nX-Thing:   v1  \r\nCONNECTION: close\r\n\r\n");
    auto r = p.next();
    REQUIRE(r.has_value());
    CHECK(r->header("x-thing") == "v1");
    CHECK_FALSE(r->keep_alive);
}

TEST_CASE("pipelined requests pop in order") {
    HttpRequestParser p;
    p.feed(
        "POST /f/1 HTTP/1.1\r\nContent-Length: 1\r\n\r\nA"
        "POST /f/2 HTTP/1.1\r\nContent-Length: 1\r\n\r\nB");
    auto a = p.next();
    auto b = p.next();
    REQUIRE((a && b));
    CHECK(a->target == "/f/1");
    CHECK(a->body == "A");
    CHECK(b->target == "/f/2");
    CHECK(b->body == "B");
}

TEST_CASE("incomplete body stays buffered until the rest arrives") {
    HttpRequestParser p;
    p.feed("POST /f/1 HTTP/1.1\r\nContent-Length: 4\r\n\r\nab");
    CHECK_FALSE(p.next().has_value());
    p.feed("cd");
    auto r = p.next();
    REQUIRE(r.has_value());
    CHECK(r->body == "abcd");
}

TEST_CASE("malformed input sets the failed flag") {
    SUBCASE("garbage start line") {
        HttpRequestParser p;
        p.feed("NOT A REQUEST\r\n\r\n");
        CHECK_FALSE(p.next().has_value());
        CHECK(p.failed());
    }
    SUBCASE("GET with a body is rejected") {
        HttpRequestParser p;
        p.feed("GET /f/1 HTTP/1.1\r\nContent-Length: 2\r\n\r\nhi");
        CHECK_FALSE(p.next().has_value());
        CHECK(p.failed());
    }
    SUBCASE("non-numeric content length") {
        HttpRequestParser p;
        p.feed("POST / HTTP/1.1\r\nContent-Length: xx\r\n\r\n");
        CHECK_FALSE(p.next().has_value());
        CHECK(p.failed());
    }
}

TEST_CASE("HTTP/1.0 defaults to close, keep-alive header overrides") {
    HttpRequestParser p;
    p.feed("GET / HTTP/1.0\r\n\r\nGET / HTTP/1.0\r\nConnection: keep-alive\r\n\r\n");
    auto a = p.next();
    auto b = p.next();
    REQUIRE((a && b));
    CHECK_FALSE(a->keep_alive);
    CHECK(b->keep_alive);
}

TEST_CASE("render_response produces parseable framing") {
    std::string wire = render_response(200, "OK", "payload", true);
    CHECK(wire.rfind("HTTP/1.1 200 OK\r\n", 0) == 0);
    CHECK(wire.find("Content-Length: 7\r\n") != std::string::npos);
    CHECK(wire.find("Connection: keep-alive\r\n") != std::string::npos);
    CHECK(wire.substr(wire.size() - 7) == "payload");

    std::string closed = render_response(503, "Service Unavailable", "", false);
    CHECK(closed.find("Connection: close\r\n") != std::string::npos);
    CHECK(closed.find("Content-Length: 0\r\n") != std::string::npos);
}
