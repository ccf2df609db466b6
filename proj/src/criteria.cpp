#include "obsinfo/criteria.hpp"

#include <cmath>

#include "obsinfo/errors.hpp"
#include "obsinfo/mle.hpp"

namespace obsinfo {

std::string_view to_string(CriterionKind kind) { return kind == CriterionKind::D ? "D" : "A"; }

Criterion criterion_from_string(std::string_view name) {
    if (name == "D" || name == "d") return {CriterionKind::D};
    if (name == "A" || name == "a") return {CriterionKind::A};
    throw DomainError("unknown criterion '" + std::string(name) + "' (expected D or A)");
}

double psi(Criterion criterion, const InfoMatrix& m) {
    if (!m.positive_definite()) return kDegenerate;
    const Vector& ev = m.eigenvalues();
    if (criterion.kind == CriterionKind::D) {
        return std::exp(-ev.array().log().mean());
    }
    return ev.cwiseInverse().sum();
}

double psi(Criterion criterion, const Matrix& m) { return psi(criterion, InfoMatrix(m)); }

EfficiencyReport psi_efficiency(Criterion criterion, const InfoMatrix& optimum, const InfoMatrix& design) {
    if (!optimum.positive_definite()) throw DegenerateError("optimal information matrix is not positive definite");
    EfficiencyReport r;
    r.numerator = psi(criterion, optimum);
    r.denominator = psi(criterion, design);
    if (is_degenerate(r.denominator)) {
        r.degenerate = true;
        r.value = 0.0;
    } else {
        r.value = r.numerator / r.denominator;
    }
    return r;
}

EfficiencyReport observed_efficiency(Criterion criterion, const ResponseModel& model, const Theta& theta,
                                     const RegressorMap& map, const ContinuousDesign& flod, const DataSet& data) {
    const InfoMatrix opt = efi(model, theta, map, flod);
    if (!opt.positive_definite()) throw DegenerateError("optimal design information is not positive definite");
    EfficiencyReport r;
    r.numerator = psi(criterion, opt);
    double q_total = 0.0;
    for (const auto& g : data.groups()) q_total += q_ratio(model, theta, map, g);
    const InfoMatrix j(observed_information(model, theta, map, data));
    if (!(q_total > 0.0) || !j.positive_definite()) {
        r.degenerate = true;
        r.denominator = kDegenerate;
        r.value = 0.0;
        return r;
    }
    const TauDesign tau = tau_design(model, theta, map, data);
    r.denominator = psi(criterion, efi(model, theta, map, tau.design));
    if (is_degenerate(r.denominator)) {
        r.degenerate = true;
        r.value = 0.0;
        return r;
    }
    r.value = r.numerator / r.denominator;

    const double alt = psi(criterion, q_total * opt.matrix()) / psi(criterion, j);
    r.form_gap = std::abs(alt - r.value);
    return r;
}

EfficiencyReport observed_efficiency_at(Criterion criterion, const ResponseModel& model, const Theta& theta_hat,
                                        const RegressorMap& map, const FlodSolver& flod_solver, const DataSet& data) {
    return observed_efficiency(criterion, model, theta_hat, map, flod_solver(theta_hat), data);
}

EfficiencyReport observed_efficiency_at_mle(Criterion criterion, const ResponseModel& model, const RegressorMap& map,
                                            const FlodSolver& flod_solver, const DataSet& data, const Theta& init) {
    const MleResult fit = fit_mle(model, map, data, init);
    if (!fit.converged) throw SolverError("maximum likelihood fit did not converge");
    return observed_efficiency_at(criterion, model, fit.theta_hat, map, flod_solver, data);
}

double relative_efficiency(Criterion criterion, const Matrix& var_ref, const Matrix& var_alt) {
    const InfoMatrix ref(var_ref);
    const InfoMatrix alt(var_alt);
    if (!ref.positive_definite() || !alt.positive_definite()) {
        throw DegenerateError("relative efficiency needs positive definite covariance matrices");
    }
    if (criterion.kind == CriterionKind::D) {
        const double p = static_cast<double>(ref.dimension());
        const double log_ratio = ref.eigenvalues().array().log().sum() - alt.eigenvalues().array().log().sum();
        return std::exp(log_ratio / p);
    }
    return var_ref.trace() / var_alt.trace();
}

}  // namespace obsinfo
