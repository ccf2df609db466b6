#include "obsinfo/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "obsinfo/errors.hpp"
#include "obsinfo/information.hpp"
#include "obsinfo/mle.hpp"

namespace obsinfo {

std::string_view to_string(Method method) {
    switch (method) {
        case Method::FLOD: return "flod";
        case Method::LOAD: return "load";
        case Method::MOAD: return "moad";
        case Method::AOD: return "aod";
    }
    return "unknown";
}

Method method_from_string(std::string_view name) {
    std::string s(name);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "flod") return Method::FLOD;
    if (s == "load") return Method::LOAD;
    if (s == "moad") return Method::MOAD;
    if (s == "aod") return Method::AOD;
    throw DomainError("unknown method '" + std::string(name) + "' (expected flod, load, moad or aod)");
}

int RunPlan::total() const noexcept { return std::accumulate(counts.begin(), counts.end(), 0); }

PolicyState::PolicyState(Method method, Criterion criterion, ResponseModel model, RegressorMap map,
                         CandidateSet candidates, Theta theta0, bool exact, MleOptions mle)
    : method_(method),
      criterion_(criterion),
      model_(model),
      map_(std::move(map)),
      candidates_(std::move(candidates)),
      theta0_(std::move(theta0)),
      exact_(exact),
      mle_(mle) {
    if (theta0_.size() != static_cast<Eigen::Index>(map_.dimension())) {
        throw DimensionError("theta0 length does not match regressor map");
    }
    if (candidates_.point(0).size() != map_.input_dimension()) {
        throw DimensionError("candidate points do not match regressor input dimension");
    }
    ContinuousSolution s = flod_continuous(criterion_, model_, theta0_, map_, candidates_);
    flod_ = std::move(s.design);
    flod_diag_ = s.diagnostics;
}

namespace {

void check_run_size(int m) {
    if (m < 1) throw DomainError("run size must be at least 1");
}

RunPlan make_plan(const PolicyState& s, Method method, std::vector<DesignPoint> points, std::vector<int> counts) {
    RunPlan plan;
    plan.run_index = static_cast<int>(s.history().run_count()) + 1;
    plan.method = method;
    plan.points = std::move(points);
    plan.counts = std::move(counts);
    return plan;
}

// Observations already taken at each FLOD support point.
std::vector<int> support_counts(const PolicyState& s) {
    std::vector<int> c;
    for (const auto& x : s.flod().points()) {
        const auto g = s.history().find(x);
        c.push_back(g ? static_cast<int>(s.history().group(*g).stats.count) : 0);
    }
    return c;
}

struct Fit {
    Theta theta;
    bool fallback = false;
};

Fit fit_or_fallback(const PolicyState& s) {
    try {
        MleResult r = fit_mle(s.model(), s.map(), s.history(), s.theta0(), s.mle_options());
        if (r.converged) return {std::move(r.theta_hat), false};
    } catch (const SolverError&) {
    }
    return {s.theta0(), true};
}

// Solves the augmented problem over the candidates and fills MOAD/AOD
// provenance.
RunPlan augmented_plan(const PolicyState& s, Method method, const Theta& theta, const AugmentedProblem& problem) {
    const int m = problem.run_size();
    std::vector<int> counts;
    bool fallback = false;
    double value = 0.0;
    if (s.exact()) {
        ExactSolution e = augmented_exact(s.criterion(), s.model(), theta, s.map(), s.candidates(), problem);
        counts = e.design.counts();
        fallback = e.diagnostics.fallback;
        value = e.diagnostics.psi;
    } else {
        ContinuousSolution c = augmented_continuous(s.criterion(), s.model(), theta, s.map(), s.candidates(), problem);
        std::vector<double> w(s.candidates().size(), 0.0);
        for (std::size_t i = 0; i < c.design.size(); ++i) w[*s.candidates().index_of(c.design.point(i))] = c.design.weight(i);
        counts = round_weights(w, m);
        fallback = c.diagnostics.fallback;
        value = augmented_psi(s.criterion(), s.model(), theta, s.map(), s.candidates(), problem.prior(), counts);
    }
    RunPlan plan = make_plan(s, method, s.candidates().points(), std::move(counts));
    Provenance& pv = plan.provenance;
    pv.beta = problem.beta();
    pv.q_total = problem.prior_size();
    pv.objective = value;
    pv.solver_fallback = fallback;
    if (fallback) pv.flags.push_back("degenerate objective for every design; equal allocation");
    for (std::size_t k = 0; k < s.candidates().size(); ++k) {
        std::vector<int> single(s.candidates().size(), 0);
        single[k] = m;
        pv.candidate_objectives.push_back(
            augmented_psi(s.criterion(), s.model(), theta, s.map(), s.candidates(), problem.prior(), single));
    }
    return plan;
}

}  // namespace

RunPlan first_run(const PolicyState& state, int m1) {
    check_run_size(m1);
    const ContinuousDesign& xi = state.flod();
    const int d = static_cast<int>(xi.size());
    std::vector<int> counts(xi.size(), m1 / d);
    std::vector<std::size_t> order(xi.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xi.weight(a) > xi.weight(b); });
    for (int r = 0; r < m1 % d; ++r) ++counts[order[static_cast<std::size_t>(r)]];
    RunPlan plan = make_plan(state, state.method(), xi.points(), std::move(counts));
    plan.provenance.w_star = xi.weights();
    if (m1 < d) plan.provenance.flags.push_back("first run smaller than the FLOD support; largest weights used");
    return plan;
}

RunPlan load_next_run(const PolicyState& state, int m) {
    check_run_size(m);
    if (state.history().empty()) return first_run(state, m);
    const ContinuousDesign& xi = state.flod();
    const std::size_t d = xi.size();
    Provenance pv;
    pv.w_star = xi.weights();
    pv.q.assign(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        if (const auto g = state.history().find(xi.point(i))) {
            pv.q[i] = q_ratio(state.model(), state.theta0(), state.map(), state.history().group(*g));
        }
        pv.q_total += pv.q[i];
    }
    std::vector<double> target;
    if (pv.q_total == 0.0) {
        pv.flags.push_back("Q = 0; FLOD weights used");
        target = pv.w_star;
    } else {
        const double md = m;
        for (std::size_t i = 0; i < d; ++i) {
            pv.omega.push_back(pv.q[i] / pv.q_total);
            pv.raw.push_back(pv.w_star[i] * (1.0 + pv.q_total / md) - pv.q[i] / md);
        }
        double pos = 0.0;
        for (double v : pv.raw) pos += std::max(v, 0.0);
        for (double v : pv.raw) pv.clipped.push_back(std::max(v, 0.0) / pos);
        target = pv.clipped;
    }
    RunPlan plan = make_plan(state, Method::LOAD, xi.points(), round_weights(target, m));
    plan.provenance = std::move(pv);
    return plan;
}

RunPlan moad_next_run(const PolicyState& state, int m) {
    check_run_size(m);
    if (state.history().empty()) return first_run(state, m);
    const Fit fit = fit_or_fallback(state);
    const Matrix j = observed_information(state.model(), fit.theta, state.map(), state.history());
    double q_total = 0.0;
    bool skipped = false;
    for (const auto& g : state.history().groups()) {
        try {
            q_total += q_ratio(state.model(), fit.theta, state.map(), g);
        } catch (const DegenerateError&) {
            skipped = true;
        }
    }
    const AugmentedProblem problem(j, std::max(q_total, 0.0), m);
    RunPlan plan = augmented_plan(state, Method::MOAD, fit.theta, problem);
    plan.provenance.q_total = q_total;
    plan.provenance.theta_hat = fit.theta;
    plan.provenance.mle_fallback = fit.fallback;
    if (fit.fallback) plan.provenance.flags.push_back("MLE unavailable; theta0 used");
    if (skipped) plan.provenance.flags.push_back("zero expected information at a history point; excluded from Q");
    if (q_total < 0.0) plan.provenance.flags.push_back("Q < 0; blend weight computed with Q = 0");
    return plan;
}

RunPlan aod_next_run(const PolicyState& state, int m) {
    check_run_size(m);
    if (state.history().empty()) return first_run(state, m);
    if (!state.model().expected_info_depends_on_eta()) {
        RunPlan plan = flod_next_run(state, m);
        plan.method = Method::AOD;
        plan.provenance.flags.push_back("expected information does not depend on theta; AOD equals FLOD");
        return plan;
    }
    const Fit fit = fit_or_fallback(state);
    const auto p = static_cast<Eigen::Index>(state.map().dimension());
    Matrix prior = Matrix::Zero(p, p);
    for (const auto& g : state.history().groups()) {
        if (g.stats.count == 0) continue;
        const Vector f = state.map()(g.x);
        prior.noalias() +=
            (static_cast<double>(g.stats.count) * state.model().expected_elemental_info(fit.theta.dot(f))) *
            (f * f.transpose());
    }
    const AugmentedProblem problem(prior, static_cast<double>(state.history().total()), m);
    RunPlan plan = augmented_plan(state, Method::AOD, fit.theta, problem);
    plan.provenance.theta_hat = fit.theta;
    plan.provenance.mle_fallback = fit.fallback;
    if (fit.fallback) plan.provenance.flags.push_back("MLE unavailable; theta0 used");
    return plan;
}

RunPlan flod_next_run(const PolicyState& state, int m) {
    check_run_size(m);
    const ContinuousDesign& xi = state.flod();
    std::vector<int> cum = support_counts(state);
    int n = std::accumulate(cum.begin(), cum.end(), 0);
    std::vector<int> counts(xi.size(), 0);
    for (int u = 0; u < m; ++u) {
        ++n;
        std::size_t best = 0;
        double gap = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < xi.size(); ++i) {
            const double deficit = n * xi.weight(i) - cum[i];
            if (deficit > gap + 1e-12) {
                gap = deficit;
                best = i;
            }
        }
        ++cum[best];
        ++counts[best];
    }
    RunPlan plan = make_plan(state, Method::FLOD, xi.points(), std::move(counts));
    plan.provenance.w_star = xi.weights();
    return plan;
}

RunPlan next_run(const PolicyState& state, int m) {
    if (state.history().empty()) return first_run(state, m);
    switch (state.method()) {
        case Method::FLOD: return flod_next_run(state, m);
        case Method::LOAD: return load_next_run(state, m);
        case Method::MOAD: return moad_next_run(state, m);
        case Method::AOD: return aod_next_run(state, m);
    }
    throw DomainError("unknown method");
}

RunSummary summarize(const PolicyState& state, const DataSet& data, const Theta& theta,
                     const ContinuousDesign& flod_at_theta, bool with_mle) {
    RunSummary s;
    if (data.empty()) return s;
    try {
        OmegaWeights w = omega_weights(state.model(), theta, state.map(), data);
        s.omega = std::move(w.omega);
        s.q_total = w.total;
    } catch (const DegenerateError&) {
    }
    try {
        const EfficiencyReport e =
            observed_efficiency(state.criterion(), state.model(), theta, state.map(), flod_at_theta, data);
        s.eff_theta = e.value;
        s.eff_degenerate = e.degenerate;
    } catch (const DegenerateError&) {
        s.eff_degenerate = true;
    }
    if (!with_mle) return s;
    try {
        const MleResult fit = fit_mle(state.model(), state.map(), data, state.theta0(), state.mle_options());
        if (!fit.converged) return s;
        s.theta_hat = fit.theta_hat;
        const ContinuousDesign xi =
            state.model().expected_info_depends_on_eta()
                ? flod_continuous(state.criterion(), state.model(), fit.theta_hat, state.map(), state.candidates()).design
                : state.flod();
        const EfficiencyReport e =
            observed_efficiency(state.criterion(), state.model(), fit.theta_hat, state.map(), xi, data);
        if (!e.degenerate) s.eff_mle = e.value;
    } catch (const Error&) {
    }
    return s;
}

ResponseSource::ResponseSource(const ResponseModel& model, const RegressorMap& map, const CandidateSet& candidates,
                               const Theta& truth, std::uint64_t seed, std::uint64_t replication)
    : model_(&model), seed_(seed), replication_(replication) {
    for (const auto& x : candidates.points()) eta_.push_back(linear_predictor(truth, x, map));
    reset();
}

double ResponseSource::draw(std::size_t candidate) {
    return model_->response_from_draw(eta_.at(candidate), model_->standard_draw(streams_.at(candidate)));
}

void ResponseSource::reset() {
    streams_.clear();
    for (std::size_t k = 0; k < eta_.size(); ++k) streams_.push_back(make_stream(seed_, replication_, k));
}

RunPlan step(PolicyState& state, int m, ResponseSource& source) {
    RunPlan plan = next_run(state, m);
    std::vector<DataSet::Allocation> run;
    for (std::size_t i = 0; i < plan.points.size(); ++i) {
        if (plan.counts[i] == 0) continue;
        const auto k = state.candidates().index_of(plan.points[i]);
        if (!k) throw DomainError("planned point is not a candidate");
        DataSet::Allocation a{plan.points[i], {}};
        for (int c = 0; c < plan.counts[i]; ++c) a.responses.push_back(source.draw(*k));
        run.push_back(std::move(a));
    }
    state.history().append_run(run, state.model());
    return plan;
}

ExperimentResult run_experiment(PolicyState state, const std::vector<int>& schedule, const Theta& truth,
                                std::uint64_t seed, std::uint64_t replication, const ExperimentOptions& options) {
    if (schedule.empty()) throw DomainError("schedule needs at least one run");
    if (!state.history().empty()) throw DomainError("experiment must start from an empty history");
    ResponseSource source(state.model(), state.map(), state.candidates(), truth, seed, replication);
    const ContinuousDesign flod_truth =
        truth == state.theta0() ? state.flod()
                                : flod_continuous(state.criterion(), state.model(), truth, state.map(), state.candidates()).design;
    ExperimentResult out;
    for (int m : schedule) {
        RunPlan plan = step(state, m, source);
        if (options.trajectory) {
            RunSummary s = summarize(state, state.history(), truth, flod_truth, options.trajectory_mle);
            out.trajectory.push_back({std::move(plan), std::move(s)});
        }
    }
    out.data = std::move(state.history());
    return out;
}

}  // namespace obsinfo
