#include "obsinfo/http_api.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <vector>

#include "httplib.h"
#include "obsinfo/serialize.hpp"

namespace obsinfo {

namespace {

ApiResponse reply(int status, json body) {
    body["v"] = kApiVersion;
    return {status, std::move(body)};
}

ApiResponse error(int status, std::string code, const std::string& message, json detail = json::object()) {
    return reply(status, {{"code", std::move(code)}, {"message", message}, {"detail", std::move(detail)}});
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (pos <= path.size()) {
        const std::size_t slash = path.find('/', pos);
        const std::size_t end = slash == std::string::npos ? path.size() : slash;
        if (end > pos) parts.push_back(path.substr(pos, end - pos));
        if (slash == std::string::npos) break;
        pos = slash + 1;
    }
    return parts;
}

json parse_body(const ApiRequest& r) {
    if (r.body.empty()) return json::object();
    json j = json::parse(r.body);  // json::parse_error maps to 400
    if (!j.is_object()) throw RequestError("request body must be a JSON object");
    return j;
}

int parse_int(const std::string& text, const char* name) {
    int v = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || end != text.data() + text.size()) {
        throw RequestError(std::string("query parameter '") + name + "' must be an integer");
    }
    return v;
}

Method parse_method(const std::string& name) {
    try {
        return method_from_string(name);
    } catch (const Error&) {
        throw RequestError("unknown method '" + name + "' (expected flod, load, moad or aod)");
    }
}

// Default run size: m1 before the first run, the schedule's run size after.
int default_m(const SessionState& s) {
    return s.runs().empty() ? s.config().schedule.m1 : s.config().schedule.run_size;
}

json run_json(const SessionState& s) {
    const RecordedRun& r = s.runs().back();
    json j = r.submission.to_json();
    j["j"] = r.index;
    j["recorded_at"] = r.recorded_at;
    return j;
}

}  // namespace

ApiResponse Api::handle(const ApiRequest& request) const {
    try {
        return route(request);
    } catch (const ConfigError& e) {
        return error(400, "invalid_config", e.what(), {{"field", e.field()}});
    } catch (const RequestError& e) {
        return error(400, "bad_request", e.what());
    } catch (const DimensionError& e) {
        return error(400, "bad_request", e.what());
    } catch (const json::exception& e) {
        return error(400, "bad_request", std::string("malformed JSON: ") + e.what());
    } catch (const NotFoundError& e) {
        return error(404, "not_found", e.what());
    } catch (const ConflictError& e) {
        return error(409, "conflict", e.what());
    } catch (const DomainError& e) {
        return error(422, "domain_error", e.what());
    } catch (const SolverError& e) {
        return error(422, "solver_failure", e.what());
    } catch (const DegenerateError& e) {
        return error(422, "degenerate", e.what());
    } catch (const IoError& e) {
        return error(500, "io_error", e.what());
    } catch (const std::exception& e) {
        return error(500, "internal", e.what());
    }
}

ApiResponse Api::route(const ApiRequest& req) const {
    const std::vector<std::string> p = split_path(req.path);
    const bool get = req.method == "GET";
    const bool post = req.method == "POST";

    if (p.size() == 1 && p[0] == "healthz") {
        if (!get) return error(405, "method_not_allowed", "use GET");
        return reply(200, {{"status", "ok"}, {"sessions", store_.list().size()}});
    }
    if (p.size() < 2 || p[0] != "v1" || p[1] != "sessions") return error(404, "not_found", "no route " + req.path);

    if (p.size() == 2) {
        if (get) {
            json items = json::array();
            for (const auto& s : store_.list()) items.push_back(s->index_entry());
            return reply(200, {{"sessions", items}});
        }
        if (!post) return error(405, "method_not_allowed", "use GET or POST");
        const json body = parse_body(req);
        ExperimentConfig cfg;
        if (body.contains("config")) {
            cfg = ExperimentConfig::from_json(body.at("config"));
        } else if (body.contains("preset")) {
            const std::string preset = body.at("preset").get<std::string>();
            if (preset == "gamma") {
                cfg = gamma_study_config();
            } else if (preset == "normal") {
                cfg = normal_study_config();
            } else {
                throw ConfigError("preset", "unknown preset '" + preset + "' (expected gamma or normal)");
            }
        } else {
            throw ConfigError("config", "missing");
        }
        std::optional<std::string> key;
        if (body.contains("idempotency_key")) key = body.at("idempotency_key").get<std::string>();
        if (const auto h = req.headers.find("idempotency-key"); h != req.headers.end()) key = h->second;
        const auto c = store_.create(cfg, key);
        return reply(c.created ? 201 : 200, {{"id", c.session->id()},
                                             {"created", c.created},
                                             {"session", c.session->to_json()},
                                             {"recommendation", to_json(c.first_run)}});
    }

    const std::string& id = p[2];
    if (p.size() == 3) {
        if (!get) return error(405, "method_not_allowed", "use GET");
        return reply(200, store_.get(id)->to_json());
    }
    if (p.size() != 4) return error(404, "not_found", "no route " + req.path);
    const std::string& leaf = p[3];

    if (leaf == "runs") {
        if (!post) return error(405, "method_not_allowed", "use POST");
        const json body = parse_body(req);
        const RunSubmission run = RunSubmission::from_json(body);
        std::optional<std::size_t> expected;
        if (body.contains("expected_runs") && !body.at("expected_runs").is_null()) {
            expected = body.at("expected_runs").get<std::size_t>();
        }
        const auto s = store_.record_run(id, run, expected);
        return reply(201, {{"id", id},
                           {"run", run_json(*s)},
                           {"diagnostics", to_json(s->trajectory().back())},
                           {"runs", s->runs().size()},
                           {"n", s->data().total()}});
    }

    if (leaf == "recommendation") {
        if (!get) return error(405, "method_not_allowed", "use GET");
        const auto s = store_.get(id);
        const auto mq = req.query.find("method");
        const Method method = mq == req.query.end() ? s->config().method : parse_method(mq->second);
        const auto m_it = req.query.find("m");
        const int m = m_it == req.query.end() ? default_m(*s) : parse_int(m_it->second, "m");
        return reply(200, {{"id", id}, {"recommendation", to_json(s->recommend(method, m))}});
    }

    if (leaf == "what-if") {
        if (!post) return error(405, "method_not_allowed", "use POST");
        const json body = parse_body(req);
        const auto s = store_.get(id);
        const Method method =
            body.contains("method") ? parse_method(body.at("method").get<std::string>()) : s->config().method;
        const int m = body.contains("m") ? body.at("m").get<int>() : default_m(*s);
        std::optional<RunSubmission> hypothetical;
        if (body.contains("hypothetical") && !body.at("hypothetical").is_null()) {
            hypothetical = RunSubmission::from_json(body.at("hypothetical"));
        }
        const bool commit = body.value("commit", false);
        const Recommendation r = store_.what_if(id, method, m, hypothetical, commit);
        return reply(commit ? 201 : 200, {{"id", id}, {"recommendation", to_json(r)}, {"committed", commit}});
    }

    return error(404, "not_found", "no route " + req.path);
}

struct HttpServer::Impl {
    Api api;
    Logger log;
    httplib::Server server;

    Impl(SessionStore& store, Logger l) : api(store), log(std::move(l)) {
        auto handler = [this](const httplib::Request& in, httplib::Response& out) {
            ApiRequest r;
            r.method = in.method;
            r.path = in.path;
            for (const auto& [k, v] : in.params) r.query.emplace(k, v);
            for (const auto& [k, v] : in.headers) {
                std::string name = k;
                std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
                r.headers.emplace(std::move(name), v);
            }
            r.body = in.body;
            const ApiResponse res = api.handle(r);
            out.status = res.status;
            out.set_content(res.body.dump(), "application/json");
        };
        server.Get(".*", handler);
        server.Post(".*", handler);
        server.Put(".*", handler);
        server.Delete(".*", handler);
        server.Patch(".*", handler);
        server.set_logger([this](const httplib::Request& in, const httplib::Response& out) {
            if (log) log(utc_timestamp() + " " + in.method + " " + in.path + " " + std::to_string(out.status));
        });
    }
};

HttpServer::HttpServer(SessionStore& store, Logger log) : impl_(std::make_unique<Impl>(store, std::move(log))) {}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound <= 0) throw IoError("cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void HttpServer::listen() {
    if (!impl_->server.listen_after_bind()) throw IoError("server stopped with an error");
}

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace obsinfo
