#include "obsinfo/session.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ctime>
#include <fstream>
#include <random>
#include <sstream>

#include "obsinfo/information.hpp"
#include "obsinfo/serialize.hpp"

namespace obsinfo {

namespace {

constexpr std::array<std::pair<EventType, std::string_view>, 4> kEventNames{{
    {EventType::SessionCreated, "SessionCreated"},
    {EventType::ConfigLocked, "ConfigLocked"},
    {EventType::RunRecorded, "RunRecorded"},
    {EventType::RecommendationIssued, "RecommendationIssued"},
}};

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

RunPlan plan_for(const PolicyState& state, Method method, int m) {
    if (m < 1) throw RequestError("m must be at least 1");
    RunPlan plan;
    if (state.history().empty()) {
        plan = first_run(state, m);
    } else {
        switch (method) {
            case Method::FLOD: plan = flod_next_run(state, m); break;
            case Method::LOAD: plan = load_next_run(state, m); break;
            case Method::MOAD: plan = moad_next_run(state, m); break;
            case Method::AOD: plan = aod_next_run(state, m); break;
        }
    }
    plan.method = method;
    return plan;
}

// Ratio of observed to expected information added by `plan` is one by
// construction, so q_i grows by the planned count.
Forecast forecast(const PolicyState& state, const RunPlan& plan) {
    const ResponseModel& model = state.model();
    const Theta& theta = state.theta0();
    const RegressorMap& map = state.map();
    const DataSet& data = state.history();

    Forecast f;
    Matrix j = Matrix::Zero(static_cast<Eigen::Index>(map.dimension()), static_cast<Eigen::Index>(map.dimension()));
    std::vector<double> q;
    if (!data.empty()) {
        j = observed_information(model, theta, map, data);
        for (const auto& g : data.groups()) {
            f.support.push_back(g.x);
            q.push_back(q_ratio(model, theta, map, g));
        }
    }
    for (std::size_t i = 0; i < plan.points.size(); ++i) {
        const int c = plan.counts[i];
        if (c == 0) continue;
        const Vector fx = map(plan.points[i]);
        j.noalias() += c * model.expected_elemental_info(linear_predictor(theta, plan.points[i], map)) * (fx * fx.transpose());
        std::size_t k = 0;
        while (k < f.support.size() && f.support[k] != plan.points[i]) ++k;
        if (k == f.support.size()) {
            f.support.push_back(plan.points[i]);
            q.push_back(0.0);
        }
        q[k] += c;
    }
    for (double v : q) f.q_total += v;
    if (f.q_total != 0.0) {
        for (double v : q) f.omega.push_back(v / f.q_total);
    }
    const double denom = psi(state.criterion(), InfoMatrix(j));
    const double num = psi(state.criterion(), efi(model, theta, map, state.flod()).scaled(f.q_total));
    f.degenerate = f.q_total <= 0.0 || is_degenerate(denom) || is_degenerate(num);
    f.eff_theta0 = f.degenerate ? 0.0 : num / denom;
    return f;
}

RunDiagnostics diagnose(const PolicyState& state, int run_index) {
    RunDiagnostics d;
    d.run_index = run_index;
    d.n = static_cast<int>(state.history().total());
    for (const auto& g : state.history().groups()) d.support.push_back(g.x);
    d.summary = summarize(state, state.history(), state.theta0(), state.flod(), true);
    return d;
}

Recommendation recommendation_on(const PolicyState& state, Method method, int m) {
    Recommendation r;
    r.method = method;
    r.m = m;
    r.plan = plan_for(state, method, m);
    r.forecast = forecast(state, r.plan);
    return r;
}

void validate_submission(const PolicyState& state, const RunSubmission& run) {
    if (run.points.empty()) throw RequestError("a run needs at least one point");
    if (run.points.size() != run.responses.size()) {
        throw RequestError("count mismatch: " + std::to_string(run.points.size()) + " points but " +
                           std::to_string(run.responses.size()) + " response lists");
    }
    if (run.counts) {
        if (run.counts->size() != run.points.size()) throw RequestError("count mismatch: counts and points differ in length");
        for (std::size_t i = 0; i < run.points.size(); ++i) {
            if ((*run.counts)[i] != static_cast<int>(run.responses[i].size())) {
                throw RequestError("count mismatch at point " + std::to_string(i) + ": planned " +
                                   std::to_string((*run.counts)[i]) + ", got " +
                                   std::to_string(run.responses[i].size()) + " responses");
            }
        }
    }
    std::size_t total = 0;
    for (std::size_t i = 0; i < run.points.size(); ++i) {
        if (run.points[i].size() != state.map().input_dimension()) {
            throw RequestError("point " + std::to_string(i) + " has dimension " + std::to_string(run.points[i].size()) +
                               ", expected " + std::to_string(state.map().input_dimension()));
        }
        for (double x : run.points[i]) {
            if (!std::isfinite(x)) throw RequestError("point coordinates must be finite");
        }
        for (double y : run.responses[i]) state.model().check_response(y);
        total += run.responses[i].size();
    }
    if (total == 0) throw RequestError("a run needs at least one response");
}

std::string random_id() {
    std::random_device rd;
    const std::uint64_t v = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return std::string("s") + buf;
}

}  // namespace

std::string_view to_string(EventType type) {
    for (const auto& [t, name] : kEventNames) {
        if (t == type) return name;
    }
    return "?";
}

EventType event_type_from_string(std::string_view name) {
    for (const auto& [t, n] : kEventNames) {
        if (n == name) return t;
    }
    throw IoError("unknown event type '" + std::string(name) + "'");
}

json SessionEvent::to_json() const {
    return {{"seq", seq}, {"type", std::string(obsinfo::to_string(type))}, {"ts", timestamp}, {"body", body}};
}

SessionEvent SessionEvent::from_json(const json& j) {
    try {
        SessionEvent e;
        e.seq = j.at("seq").get<std::uint64_t>();
        e.type = event_type_from_string(j.at("type").get<std::string>());
        e.timestamp = j.at("ts").get<std::string>();
        e.body = j.at("body");
        return e;
    } catch (const json::exception& ex) {
        throw IoError(std::string("malformed event: ") + ex.what());
    }
}

std::vector<DataSet::Allocation> RunSubmission::allocations() const {
    std::vector<DataSet::Allocation> out;
    for (std::size_t i = 0; i < points.size(); ++i) out.push_back({points[i], responses[i]});
    return out;
}

RunSubmission RunSubmission::from_json(const json& j) {
    if (!j.is_object()) throw RequestError("run must be a JSON object");
    RunSubmission r;
    try {
        r.points = j.at("points").get<std::vector<DesignPoint>>();
        r.responses = j.at("responses").get<std::vector<std::vector<double>>>();
        if (j.contains("counts") && !j.at("counts").is_null()) r.counts = j.at("counts").get<std::vector<int>>();
        if (j.contains("recommendation") && !j.at("recommendation").is_null()) {
            r.recommendation = j.at("recommendation").get<std::uint64_t>();
        }
    } catch (const json::exception& e) {
        throw RequestError(std::string("malformed run: ") + e.what());
    }
    return r;
}

json RunSubmission::to_json() const {
    json j = {{"points", points}, {"responses", responses}};
    std::vector<int> c;
    for (const auto& r : responses) c.push_back(static_cast<int>(r.size()));
    j["counts"] = counts ? *counts : c;
    if (recommendation) j["recommendation"] = *recommendation;
    return j;
}

json to_json(const RunDiagnostics& d) {
    json j = {{"j", d.run_index},
              {"n", d.n},
              {"support", d.support},
              {"omega", d.summary.omega},
              {"Q", d.summary.q_total},
              {"eff_theta0", d.summary.eff_theta},
              {"eff_degenerate", d.summary.eff_degenerate}};
    j["theta_hat"] = d.summary.theta_hat ? to_json(*d.summary.theta_hat) : json(nullptr);
    j["eff_mle"] = d.summary.eff_mle ? number(*d.summary.eff_mle) : json(nullptr);
    return j;
}

json to_json(const Recommendation& r) {
    json j = {{"method", std::string(to_string(r.method))}, {"m", r.m}, {"plan", to_json(r.plan)}};
    j["forecast"] = {{"Q", r.forecast.q_total},
                     {"support", r.forecast.support},
                     {"omega", r.forecast.omega},
                     {"eff_theta0", r.forecast.eff_theta0},
                     {"degenerate", r.forecast.degenerate}};
    if (r.projected) j["projected"] = to_json(*r.projected);
    j["seq"] = r.seq ? json(*r.seq) : json(nullptr);
    return j;
}

SessionState SessionState::fold(const std::vector<SessionEvent>& events) {
    SessionState s;
    for (const auto& e : events) s.apply(e);
    if (!s.policy_) throw IoError("session log has no SessionCreated event");
    return s;
}

const PolicyState& SessionState::policy() const {
    if (!policy_) throw IoError("session not created");
    return *policy_;
}

void SessionState::apply(const SessionEvent& e) {
    if (e.seq != last_seq_ + 1) {
        throw IoError("event sequence gap: expected " + std::to_string(last_seq_ + 1) + ", got " + std::to_string(e.seq));
    }
    if ((e.type == EventType::SessionCreated) != (last_seq_ == 0)) throw IoError("SessionCreated must be the first event");
    switch (e.type) {
        case EventType::SessionCreated: {
            id_ = e.body.at("id").get<std::string>();
            config_ = ExperimentConfig::from_json(e.body.at("config"));
            config_hash_ = config_.hash();
            created_at_ = e.timestamp;
            if (e.body.contains("idempotency_key")) idempotency_key_ = e.body.at("idempotency_key").get<std::string>();
            policy_.emplace(config_.policy(config_.method, config_.criterion));
            break;
        }
        case EventType::ConfigLocked:
            if (e.body.at("config_hash").get<std::string>() != config_hash_) {
                throw IoError("config hash in log does not match the replayed config");
            }
            locked_ = true;
            break;
        case EventType::RunRecorded: {
            if (!locked_) throw IoError("run recorded before the config was locked");
            RecordedRun run;
            run.index = static_cast<int>(runs_.size()) + 1;
            run.recorded_at = e.timestamp;
            run.submission = RunSubmission::from_json(e.body.at("run"));
            validate_submission(*policy_, run.submission);
            policy_->history().append_run(run.submission.allocations(), policy_->model());
            runs_.push_back(std::move(run));
            trajectory_.push_back(diagnose(*policy_, static_cast<int>(runs_.size())));
            committed_.reset();
            break;
        }
        case EventType::RecommendationIssued: {
            Recommendation r = recommendation_on(*policy_, method_from_string(e.body.at("method").get<std::string>()),
                                                 e.body.at("m").get<int>());
            const auto counts = e.body.at("counts").get<std::vector<int>>();
            if (counts != r.plan.counts) {
                r.plan.counts = counts;
                r.plan.provenance.flags.push_back("logged plan differs from the replayed recommendation");
            }
            r.seq = e.seq;
            committed_ = std::move(r);
            break;
        }
    }
    last_seq_ = e.seq;
}

void SessionState::validate(const RunSubmission& run) const { validate_submission(policy(), run); }

Recommendation SessionState::recommend(Method method, int m) const { return recommendation_on(policy(), method, m); }

Recommendation SessionState::what_if(Method method, int m, const std::optional<RunSubmission>& hypothetical) const {
    if (!hypothetical) return recommend(method, m);
    validate_submission(policy(), *hypothetical);
    PolicyState copy = policy();
    copy.history().append_run(hypothetical->allocations(), copy.model());
    Recommendation r = recommendation_on(copy, method, m);
    r.projected = diagnose(copy, static_cast<int>(runs_.size()) + 1);
    return r;
}

json SessionState::to_json() const {
    json runs = json::array();
    for (const auto& r : runs_) {
        json j = r.submission.to_json();
        j["j"] = r.index;
        j["recorded_at"] = r.recorded_at;
        runs.push_back(std::move(j));
    }
    json traj = json::array();
    for (const auto& d : trajectory_) traj.push_back(obsinfo::to_json(d));
    json j = {{"v", 1},
              {"id", id_},
              {"created_at", created_at_},
              {"config", config_.to_json()},
              {"config_hash", config_hash_},
              {"locked", locked_},
              {"last_seq", last_seq_},
              {"flod", obsinfo::to_json(policy().flod())},
              {"n", data().total()},
              {"runs", runs},
              {"trajectory", traj}};
    j["committed"] = committed_ ? obsinfo::to_json(*committed_) : json(nullptr);
    return j;
}

json SessionState::index_entry() const {
    return {{"id", id_},
            {"created_at", created_at_},
            {"config_hash", config_hash_},
            {"family", std::string(obsinfo::to_string(config_.model.family))},
            {"runs", runs_.size()},
            {"n", data().total()}};
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    const std::size_t k = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    std::snprintf(buf + k, sizeof buf - k, ".%03dZ", static_cast<int>(ms));
    return buf;
}

std::shared_ptr<const SessionState> SessionStore::Entry::load() const {
    std::lock_guard lk(snapshot_mutex);
    return snapshot;
}

void SessionStore::Entry::store(std::shared_ptr<const SessionState> s) {
    std::lock_guard lk(snapshot_mutex);
    snapshot = std::move(s);
}

SessionStore::SessionStore(std::filesystem::path root, Clock clock) : root_(std::move(root)), clock_(std::move(clock)) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) throw IoError("cannot create store '" + root_.string() + "': " + ec.message());
    const auto probe = root_ / ".probe";
    {
        std::ofstream out(probe);
        if (!out) throw IoError("store '" + root_.string() + "' is not writable");
    }
    std::filesystem::remove(probe, ec);

    for (const auto& f : std::filesystem::directory_iterator(root_)) {
        if (f.path().extension() != ".jsonl") continue;
        std::ifstream in(f.path(), std::ios::binary);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        std::vector<SessionEvent> events;
        std::size_t pos = 0;
        while (pos < text.size()) {
            const std::size_t nl = text.find('\n', pos);
            if (nl == std::string::npos) {
                // A crash mid-append leaves an unterminated line; drop it.
                std::filesystem::resize_file(f.path(), pos);
                break;
            }
            try {
                events.push_back(SessionEvent::from_json(json::parse(text.substr(pos, nl - pos))));
            } catch (const json::exception& e) {
                throw IoError("corrupt log '" + f.path().string() + "': " + e.what());
            }
            pos = nl + 1;
        }
        if (events.empty()) continue;
        auto state = std::make_shared<const SessionState>(SessionState::fold(events));
        auto e = std::make_shared<Entry>();
        e->log = f.path();
        e->snapshot = state;
        if (state->idempotency_key()) by_key_[*state->idempotency_key()] = state->id();
        sessions_[state->id()] = std::move(e);
    }
}

std::shared_ptr<SessionStore::Entry> SessionStore::entry(const std::string& id) const {
    std::shared_lock lk(index_mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFoundError("no session '" + id + "'");
    return it->second;
}

void SessionStore::append(Entry& e, const SessionEvent& event) const {
    const std::string line = event.to_json().dump() + "\n";
    const int fd = ::open(e.log.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) throw IoError("cannot open '" + e.log.string() + "': " + std::strerror(errno));
    std::size_t done = 0;
    while (done < line.size()) {
        const ssize_t w = ::write(fd, line.data() + done, line.size() - done);
        if (w < 0) {
            if (errno == EINTR) continue;
            const int err = errno;
            ::close(fd);
            throw IoError("write to '" + e.log.string() + "' failed: " + std::strerror(err));
        }
        done += static_cast<std::size_t>(w);
    }
    if (::fsync(fd) != 0) {
        const int err = errno;
        ::close(fd);
        throw IoError("fsync of '" + e.log.string() + "' failed: " + std::strerror(err));
    }
    ::close(fd);
}

SessionStore::Created SessionStore::create(const ExperimentConfig& config, const std::optional<std::string>& key) {
    std::lock_guard create_lock(create_mutex_);
    auto first = [](const SessionState& s) {
        PolicyState fresh = s.policy();
        fresh.history() = DataSet{};
        return recommendation_on(fresh, s.config().method, s.config().schedule.m1);
    };
    if (key) {
        std::shared_lock lk(index_mutex_);
        const auto it = by_key_.find(*key);
        if (it != by_key_.end()) {
            auto s = sessions_.at(it->second)->load();
            return {s, false, first(*s)};
        }
    }

    std::string id = key ? "s" + fnv1a_hex("key:" + *key) : random_id();
    {
        std::shared_lock lk(index_mutex_);
        while (!key && sessions_.count(id)) id = random_id();
        if (sessions_.count(id)) throw ConflictError("session id collision for idempotency key");
    }

    // Fold in memory first so an invalid config never reaches the disk.
    SessionEvent created{1, EventType::SessionCreated, clock_(), {{"id", id}, {"config", config.to_json()}}};
    if (key) created.body["idempotency_key"] = *key;
    SessionState state;
    state.apply(created);
    SessionEvent locked{2, EventType::ConfigLocked, clock_(),
                        {{"config_hash", state.config_hash()}, {"flod", to_json(state.policy().flod())}}};
    state.apply(locked);

    auto e = std::make_shared<Entry>();
    e->log = root_ / (id + ".jsonl");
    append(*e, created);
    append(*e, locked);
    auto snap = std::make_shared<const SessionState>(std::move(state));
    e->snapshot = snap;
    {
        std::unique_lock lk(index_mutex_);
        sessions_[id] = e;
        if (key) by_key_[*key] = id;
    }
    return {snap, true, first(*snap)};
}

std::shared_ptr<const SessionState> SessionStore::get(const std::string& id) const { return entry(id)->load(); }

std::vector<std::shared_ptr<const SessionState>> SessionStore::list() const {
    std::shared_lock lk(index_mutex_);
    std::vector<std::shared_ptr<const SessionState>> out;
    for (const auto& [id, e] : sessions_) out.push_back(e->load());
    return out;
}

std::shared_ptr<const SessionState> SessionStore::record_run(const std::string& id, const RunSubmission& run,
                                                             std::optional<std::size_t> expected_runs) {
    auto e = entry(id);
    std::unique_lock lk(e->write, std::try_to_lock);
    if (!lk.owns_lock()) throw ConflictError("session '" + id + "' is being modified by another request");
    auto current = e->load();
    if (expected_runs && *expected_runs != current->runs().size()) {
        throw ConflictError("session '" + id + "' has " + std::to_string(current->runs().size()) + " runs, expected " +
                            std::to_string(*expected_runs));
    }
    current->validate(run);
    SessionEvent event{current->last_seq() + 1, EventType::RunRecorded, clock_(), {{"run", run.to_json()}}};
    auto next = std::make_shared<SessionState>(*current);
    next->apply(event);
    append(*e, event);
    e->store(next);
    return next;
}

Recommendation SessionStore::recommend(const std::string& id, Method method, int m) const {
    return get(id)->recommend(method, m);
}

Recommendation SessionStore::what_if(const std::string& id, Method method, int m,
                                     const std::optional<RunSubmission>& hypothetical, bool commit) {
    if (!commit) return get(id)->what_if(method, m, hypothetical);
    if (hypothetical) throw RequestError("a recommendation with hypothetical responses cannot be committed");
    auto e = entry(id);
    std::unique_lock lk(e->write, std::try_to_lock);
    if (!lk.owns_lock()) throw ConflictError("session '" + id + "' is being modified by another request");
    auto current = e->load();
    Recommendation r = current->recommend(method, m);
    SessionEvent event{current->last_seq() + 1, EventType::RecommendationIssued, clock_(),
                       {{"method", std::string(to_string(method))},
                        {"m", m},
                        {"points", r.plan.points},
                        {"counts", r.plan.counts}}};
    auto next = std::make_shared<SessionState>(*current);
    next->apply(event);
    append(*e, event);
    e->store(next);
    return *next->committed();
}

std::vector<SessionEvent> SessionStore::events(const std::string& id) const {
    auto e = entry(id);
    std::lock_guard lk(e->write);
    std::ifstream in(e->log);
    if (!in) throw IoError("cannot read '" + e->log.string() + "'");
    std::vector<SessionEvent> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) out.push_back(SessionEvent::from_json(json::parse(line)));
    }
    return out;
}

}  // namespace obsinfo
