#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "obsinfo/adaptive.hpp"
#include "obsinfo/config.hpp"
#include "obsinfo/errors.hpp"

namespace obsinfo {

// Malformed request that is not a config problem (count mismatch, ...).
class RequestError : public Error {
public:
    using Error::Error;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

// Another write to the same session is in progress, or the caller's view of
// the session is stale.
class ConflictError : public Error {
public:
    using Error::Error;
};

enum class EventType { SessionCreated, ConfigLocked, RunRecorded, RecommendationIssued };

std::string_view to_string(EventType type);
EventType event_type_from_string(std::string_view name);

// One line of a session log.
struct SessionEvent {
    std::uint64_t seq = 0;  // 1, 2, ... within the session
    EventType type = EventType::SessionCreated;
    std::string timestamp;  // ISO-8601 UTC
    json body;

    json to_json() const;
    static SessionEvent from_json(const json& j);
};

// Observations of one run in the order they were submitted.
struct RunSubmission {
    std::vector<DesignPoint> points;
    std::vector<std::vector<double>> responses;  // per point
    std::optional<std::vector<int>> counts;      // checked against responses when given
    std::optional<std::uint64_t> recommendation; // seq of the committed recommendation followed

    std::vector<DataSet::Allocation> allocations() const;
    static RunSubmission from_json(const json& j);
    json to_json() const;
};

struct RecordedRun {
    int index = 0;  // j
    std::string recorded_at;
    RunSubmission submission;
};

// Diagnostics of the data after a run: omega and Q at theta0, observed
// efficiency at theta0 and, when the MLE exists, at theta_hat.
struct RunDiagnostics {
    int run_index = 0;
    int n = 0;
    std::vector<DesignPoint> support;  // data groups, in first-seen order
    RunSummary summary;
};

json to_json(const RunDiagnostics& d);

// Expected-information projection of a plan at theta0: responses assumed to
// carry exactly their expected information.
struct Forecast {
    double q_total = 0.0;
    std::vector<DesignPoint> support;
    std::vector<double> omega;
    double eff_theta0 = 0.0;
    bool degenerate = false;
};

struct Recommendation {
    Method method = Method::FLOD;
    int m = 0;
    RunPlan plan;
    Forecast forecast;
    // what-if with hypothetical responses: diagnostics of the extended data.
    std::optional<RunDiagnostics> projected;
    // Set when this recommendation was committed to the log.
    std::optional<std::uint64_t> seq;
};

json to_json(const Recommendation& r);

// Derived state of a session: a pure fold over its event log.
class SessionState {
public:
    // Throws ConfigError, SolverError or IoError when the log is unusable.
    static SessionState fold(const std::vector<SessionEvent>& events);
    void apply(const SessionEvent& event);

    const std::string& id() const noexcept { return id_; }
    const ExperimentConfig& config() const noexcept { return config_; }
    const std::string& config_hash() const noexcept { return config_hash_; }
    const std::string& created_at() const noexcept { return created_at_; }
    const std::optional<std::string>& idempotency_key() const noexcept { return idempotency_key_; }
    bool locked() const noexcept { return locked_; }
    std::uint64_t last_seq() const noexcept { return last_seq_; }

    const PolicyState& policy() const;
    const DataSet& data() const { return policy().history(); }
    const std::vector<RecordedRun>& runs() const noexcept { return runs_; }
    const std::vector<RunDiagnostics>& trajectory() const noexcept { return trajectory_; }
    // The recommendation committed since the last recorded run, if any.
    const std::optional<Recommendation>& committed() const noexcept { return committed_; }

    // Read-only planning on the current data.
    Recommendation recommend(Method method, int m) const;
    // Same on a copy extended by `hypothetical` (one extra run).
    Recommendation what_if(Method method, int m, const std::optional<RunSubmission>& hypothetical) const;
    // Validates a submission against the config without applying it.
    void validate(const RunSubmission& run) const;

    json to_json() const;
    json index_entry() const;

private:
    std::string id_;
    ExperimentConfig config_;
    std::string config_hash_;
    std::string created_at_;
    std::optional<std::string> idempotency_key_;
    bool locked_ = false;
    std::uint64_t last_seq_ = 0;
    std::optional<PolicyState> policy_;
    std::vector<RecordedRun> runs_;
    std::vector<RunDiagnostics> trajectory_;
    std::optional<Recommendation> committed_;
};

// ISO-8601 UTC with milliseconds, e.g. 2024-05-01T12:00:00.000Z.
std::string utc_timestamp();

// Event-sourced session store. Each session is an append-only JSON-lines log
// <root>/<id>.jsonl, fsynced per event, replayed on construction. Writes to
// one session are serialized by a per-session lock taken with try_lock, so a
// concurrent writer gets ConflictError instead of waiting. Reads return the
// last folded snapshot without locking out writers.
class SessionStore {
public:
    using Clock = std::function<std::string()>;

    explicit SessionStore(std::filesystem::path root, Clock clock = utc_timestamp);

    struct Created {
        std::shared_ptr<const SessionState> session;
        bool created = false;  // false: idempotent replay of an earlier create
        Recommendation first_run;
    };
    Created create(const ExperimentConfig& config, const std::optional<std::string>& idempotency_key = {});

    std::shared_ptr<const SessionState> get(const std::string& id) const;
    std::vector<std::shared_ptr<const SessionState>> list() const;

    // expected_runs: optimistic concurrency check against runs().size().
    std::shared_ptr<const SessionState> record_run(const std::string& id, const RunSubmission& run,
                                                   std::optional<std::size_t> expected_runs = {});

    Recommendation recommend(const std::string& id, Method method, int m) const;
    // commit appends RecommendationIssued; only allowed without hypotheticals.
    Recommendation what_if(const std::string& id, Method method, int m, const std::optional<RunSubmission>& hypothetical,
                           bool commit = false);

    // The raw log of a session, as stored.
    std::vector<SessionEvent> events(const std::string& id) const;

    const std::filesystem::path& root() const noexcept { return root_; }

private:
    struct Entry {
        std::mutex write;
        mutable std::mutex snapshot_mutex;
        std::shared_ptr<const SessionState> snapshot;
        std::filesystem::path log;

        std::shared_ptr<const SessionState> load() const;
        void store(std::shared_ptr<const SessionState> s);
    };

    std::shared_ptr<Entry> entry(const std::string& id) const;
    void append(Entry& e, const SessionEvent& event) const;

    std::filesystem::path root_;
    Clock clock_;
    mutable std::shared_mutex index_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::map<std::string, std::string> by_key_;  // idempotency key -> id
    std::mutex create_mutex_;
};

}  // namespace obsinfo
