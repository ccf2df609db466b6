#include "obsinfo/serialize.hpp"

#include <cmath>

#include "obsinfo/errors.hpp"

namespace obsinfo {

namespace {

// JSON has no infinity; degenerate objective values are emitted as null.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json numbers(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(number(x));
    return a;
}

}  // namespace

json to_json(const Theta& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Theta theta_from_json(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json to_json(const ContinuousDesign& xi) {
    json support = json::array();
    for (std::size_t i = 0; i < xi.size(); ++i) support.push_back({{"x", xi.point(i)}, {"weight", xi.weight(i)}});
    return {{"support", support}};
}

json to_json(const ExactDesign& xi) {
    json support = json::array();
    for (std::size_t i = 0; i < xi.size(); ++i) support.push_back({{"x", xi.point(i)}, {"count", xi.count(i)}});
    return {{"support", support}};
}

ContinuousDesign continuous_design_from_json(const json& j) {
    std::vector<DesignPoint> points;
    std::vector<double> weights;
    for (const auto& s : j.at("support")) {
        points.push_back(s.at("x").get<DesignPoint>());
        weights.push_back(s.at("weight").get<double>());
    }
    return ContinuousDesign(std::move(points), std::move(weights));
}

ExactDesign exact_design_from_json(const json& j) {
    std::vector<DesignPoint> points;
    std::vector<int> counts;
    for (const auto& s : j.at("support")) {
        points.push_back(s.at("x").get<DesignPoint>());
        counts.push_back(s.at("count").get<int>());
    }
    return ExactDesign(std::move(points), std::move(counts));
}

json to_json(const InfoMatrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.dimension(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.dimension(); ++c) row.push_back(m.matrix()(r, c));
        rows.push_back(row);
    }
    return {{"rows", rows}, {"definiteness", std::string(to_string(m.definiteness()))}};
}

json to_json(const SolverDiagnostics& d) {
    return {{"iterations", d.iterations},
            {"gap", number(d.gap)},
            {"enumerated", d.enumerated},
            {"fallback", d.fallback},
            {"psi", number(d.psi)}};
}

json to_json(const Provenance& p) {
    json j = json::object();
    if (!p.w_star.empty()) j["w_star"] = p.w_star;
    if (!p.q.empty()) j["q"] = p.q;
    if (!p.omega.empty()) j["omega"] = p.omega;
    j["Q"] = p.q_total;
    if (!p.raw.empty()) j["w_raw"] = p.raw;
    if (!p.clipped.empty()) j["w_clipped"] = p.clipped;
    if (p.theta_hat) j["theta_hat"] = to_json(*p.theta_hat);
    j["mle_fallback"] = p.mle_fallback;
    if (p.beta) j["beta"] = *p.beta;
    if (!p.candidate_objectives.empty()) j["candidate_objectives"] = numbers(p.candidate_objectives);
    if (p.objective) j["objective"] = number(*p.objective);
    j["solver_fallback"] = p.solver_fallback;
    j["flags"] = p.flags;
    return j;
}

json to_json(const RunPlan& plan) {
    return {{"j", plan.run_index},
            {"method", std::string(to_string(plan.method))},
            {"points", plan.points},
            {"counts", plan.counts},
            {"provenance", to_json(plan.provenance)}};
}

json to_json(const RunSummary& s) {
    json j = {{"omega", s.omega}, {"Q", s.q_total}, {"eff_theta", s.eff_theta}, {"eff_degenerate", s.eff_degenerate}};
    j["eff_mle"] = s.eff_mle ? json(*s.eff_mle) : json(nullptr);
    if (s.theta_hat) j["theta_hat"] = to_json(*s.theta_hat);
    return j;
}

json to_json(const TrajectoryEntry& e) {
    json j = {{"j", e.plan.run_index},         {"plan", to_json(e.plan)},
              {"omega", e.summary.omega},      {"Q", e.summary.q_total},
              {"eff_theta", e.summary.eff_theta}};
    j["eff_mle"] = e.summary.eff_mle ? json(*e.summary.eff_mle) : json(nullptr);
    if (e.summary.theta_hat) j["theta_hat"] = to_json(*e.summary.theta_hat);
    return j;
}

void write_trajectory_jsonl(std::ostream& out, const std::vector<TrajectoryEntry>& trajectory) {
    for (const auto& e : trajectory) out << to_json(e).dump() << '\n';
    if (!out) throw IoError("failed to write trajectory");
}

}  // namespace obsinfo
