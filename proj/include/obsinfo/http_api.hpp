#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>

#include "obsinfo/session.hpp"

namespace obsinfo {

inline constexpr int kApiVersion = 1;

struct ApiRequest {
    std::string method;  // "GET", "POST"
    std::string path;
    std::map<std::string, std::string> query;
    std::map<std::string, std::string> headers;  // lower-case names
    std::string body;
};

struct ApiResponse {
    int status = 200;
    json body;
};

// The v1 session API without a transport:
//
//   POST /v1/sessions                      {"config": {...}} or {"preset": "gamma"|"normal"}
//   GET  /v1/sessions
//   GET  /v1/sessions/{id}
//   POST /v1/sessions/{id}/runs            {"points", "responses", "counts"?, "expected_runs"?}
//   GET  /v1/sessions/{id}/recommendation  ?method=&m=
//   POST /v1/sessions/{id}/what-if         {"method", "m", "hypothetical"?, "commit"?}
//   GET  /healthz
//
// Every body carries "v". Errors are {"v", "code", "message", "detail"}.
class Api {
public:
    explicit Api(SessionStore& store) : store_(store) {}

    // Never throws.
    ApiResponse handle(const ApiRequest& request) const;

private:
    ApiResponse route(const ApiRequest& request) const;

    SessionStore& store_;
};

// HTTP/1.1 front end for Api.
class HttpServer {
public:
    using Logger = std::function<void(const std::string&)>;

    explicit HttpServer(SessionStore& store, Logger log = {});
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Port 0 picks a free port. Returns the bound port; throws IoError.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace obsinfo
