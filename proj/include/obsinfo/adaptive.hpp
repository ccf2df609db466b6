#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "obsinfo/criteria.hpp"
#include "obsinfo/data.hpp"
#include "obsinfo/design_opt.hpp"
#include "obsinfo/mle.hpp"
#include "obsinfo/model.hpp"
#include "obsinfo/rng.hpp"

namespace obsinfo {

enum class Method { FLOD, LOAD, MOAD, AOD };

std::string_view to_string(Method method);
Method method_from_string(std::string_view name);

// Why a plan looks the way it does. Vectors indexed like RunPlan::points unless
// noted; fields that do not apply to the method stay empty.
struct Provenance {
    std::vector<double> w_star;   // FLOD weights at theta0 on the plan points (FLOD, LOAD)
    std::vector<double> q;        // observed-to-expected sums (LOAD)
    std::vector<double> omega;    // q / Q (LOAD)
    double q_total = 0.0;         // Q (LOAD: over the FLOD support; MOAD: over all history)
    std::vector<double> raw;      // w' before clipping (LOAD)
    std::vector<double> clipped;  // w~ after clipping (LOAD)
    std::optional<Theta> theta_hat;
    bool mle_fallback = false;                  // theta0 used because the fit failed
    std::optional<double> beta;                 // MOAD / AOD blend weight
    std::vector<double> candidate_objectives;   // Psi with the whole run at each candidate (MOAD / AOD)
    std::optional<double> objective;            // Psi of the chosen plan (MOAD / AOD)
    bool solver_fallback = false;               // degenerate objective: equal weights
    std::vector<std::string> flags;
};

struct RunPlan {
    int run_index = 1;  // j, counted from 1
    Method method = Method::FLOD;
    std::vector<DesignPoint> points;
    std::vector<int> counts;
    Provenance provenance;

    int total() const noexcept;
    bool flagged() const noexcept { return !provenance.flags.empty(); }
};

// Everything a policy needs besides the data. The FLOD at theta0 is solved on
// construction and cached.
class PolicyState {
public:
    PolicyState(Method method, Criterion criterion, ResponseModel model, RegressorMap map, CandidateSet candidates,
                Theta theta0, bool exact = true, MleOptions mle = {});

    Method method() const noexcept { return method_; }
    Criterion criterion() const noexcept { return criterion_; }
    const ResponseModel& model() const noexcept { return model_; }
    const RegressorMap& map() const noexcept { return map_; }
    const CandidateSet& candidates() const noexcept { return candidates_; }
    const Theta& theta0() const noexcept { return theta0_; }
    bool exact() const noexcept { return exact_; }
    const MleOptions& mle_options() const noexcept { return mle_; }
    const ContinuousDesign& flod() const noexcept { return flod_; }
    const SolverDiagnostics& flod_diagnostics() const noexcept { return flod_diag_; }

    const DataSet& history() const noexcept { return history_; }
    DataSet& history() noexcept { return history_; }

private:
    Method method_;
    Criterion criterion_;
    ResponseModel model_;
    RegressorMap map_;
    CandidateSet candidates_;
    Theta theta0_;
    bool exact_;
    MleOptions mle_;
    ContinuousDesign flod_;
    SolverDiagnostics flod_diag_;
    DataSet history_;
};

// floor(m1/d) at each FLOD support point, remainder to the largest FLOD
// weights (ties: lower index). Flagged when m1 < d.
RunPlan first_run(const PolicyState& state, int m1);

// w' = w* + Q (w* - omega) / m on the FLOD support, clipped, renormalized and
// rounded to m. Q = 0 falls back to w* (flagged).
RunPlan load_next_run(const PolicyState& state, int m);

// Augmented design at the MLE with prior J(history); theta0 when the fit fails.
RunPlan moad_next_run(const PolicyState& state, int m);

// Augmented design at the MLE with prior equal to the count-weighted EFI of the
// realized design. For families whose EFI ignores theta returns the FLOD
// allocation, flagged.
RunPlan aod_next_run(const PolicyState& state, int m);

// Greedy tracking of n w*: each unit goes to the largest deficit N w*_i - c_i
// (N counting the unit), ties to the lower index.
RunPlan flod_next_run(const PolicyState& state, int m);

// Dispatch on state.method(); first_run when the history is empty.
RunPlan next_run(const PolicyState& state, int m);

// Local quantities of a dataset at a parameter value.
struct RunSummary {
    std::vector<double> omega;  // per data group (empty when Q = 0)
    double q_total = 0.0;
    double eff_theta = 0.0;  // observed efficiency at theta
    bool eff_degenerate = false;
    std::optional<Theta> theta_hat;
    std::optional<double> eff_mle;
};

// `with_mle` adds the fit and the efficiency at theta_hat (FLOD re-solved
// there when the EFI depends on theta).
RunSummary summarize(const PolicyState& state, const DataSet& data, const Theta& theta,
                     const ContinuousDesign& flod_at_theta, bool with_mle);

struct TrajectoryEntry {
    RunPlan plan;
    RunSummary summary;
};

// Draws responses for a replication. Every candidate point has its own stream
// keyed by (seed, replication, point index), so two policies visiting a point
// in different orders still see the same k-th response there.
class ResponseSource {
public:
    ResponseSource(const ResponseModel& model, const RegressorMap& map, const CandidateSet& candidates,
                   const Theta& truth, std::uint64_t seed, std::uint64_t replication);

    double draw(std::size_t candidate);
    // Rewinds every stream to its start.
    void reset();

private:
    const ResponseModel* model_;
    std::vector<double> eta_;
    std::vector<Rng> streams_;
    std::uint64_t seed_;
    std::uint64_t replication_;
};

// Plans the run, samples its responses from `source` and appends it.
RunPlan step(PolicyState& state, int m, ResponseSource& source);

struct ExperimentOptions {
    bool trajectory = true;
    bool trajectory_mle = false;
};

struct ExperimentResult {
    DataSet data;
    std::vector<TrajectoryEntry> trajectory;
};

// Runs schedule m_1..m_J against responses generated at `truth`. Diagnostics
// are evaluated at `truth`.
ExperimentResult run_experiment(PolicyState state, const std::vector<int>& schedule, const Theta& truth,
                                std::uint64_t seed, std::uint64_t replication = 0,
                                const ExperimentOptions& options = {});

}  // namespace obsinfo
