#pragma once

#include <functional>
#include <limits>
#include <string_view>

#include "obsinfo/data.hpp"
#include "obsinfo/information.hpp"
#include "obsinfo/model.hpp"

namespace obsinfo {

enum class CriterionKind { D, A };

struct Criterion {
    CriterionKind kind = CriterionKind::D;

    friend bool operator==(const Criterion&, const Criterion&) = default;
};

std::string_view to_string(CriterionKind kind);
Criterion criterion_from_string(std::string_view name);

// Psi of a singular or non-positive-definite matrix. Compares worse than every
// finite value, so minimizers never select it.
inline constexpr double kDegenerate = std::numeric_limits<double>::infinity();

inline bool is_degenerate(double psi_value) noexcept { return psi_value == kDegenerate; }

// |M^-1|^(1/p) for D, Tr(M^-1) for A; kDegenerate unless M is positive definite.
// Throws DomainError for asymmetric input.
double psi(Criterion criterion, const InfoMatrix& m);
double psi(Criterion criterion, const Matrix& m);

struct EfficiencyReport {
    double value = 0.0;
    double numerator = 0.0;    // Psi of the optimum
    double denominator = 0.0;  // Psi of the evaluated matrix (kDegenerate when degenerate)
    bool degenerate = false;
    // |difference| between the tau-based and J-based forms of the observed
    // efficiency; zero when only one form applies.
    double form_gap = 0.0;
};

// Psi(M_opt) / Psi(M_design); a degenerate denominator gives value 0 with the
// flag set. Throws DegenerateError if M_opt is not positive definite.
EfficiencyReport psi_efficiency(Criterion criterion, const InfoMatrix& optimum, const InfoMatrix& design);

// Local observed efficiency Psi[M(xi*)] / Psi[M(tau)]. Degenerate (value 0,
// flagged) when Q <= 0 or J is not positive definite. When finite, the form
// Psi[Q M(xi*)] / Psi[J] is evaluated as well and the discrepancy reported.
EfficiencyReport observed_efficiency(Criterion criterion, const ResponseModel& model, const Theta& theta,
                                     const RegressorMap& map, const ContinuousDesign& flod, const DataSet& data);

using FlodSolver = std::function<ContinuousDesign(const Theta&)>;

// Observed efficiency with theta replaced by `theta_hat` everywhere, including
// the optimal design (re-solved through `flod_solver`).
EfficiencyReport observed_efficiency_at(Criterion criterion, const ResponseModel& model, const Theta& theta_hat,
                                        const RegressorMap& map, const FlodSolver& flod_solver, const DataSet& data);

// Fits the MLE from `init`, then evaluates observed_efficiency_at. Throws
// SolverError when the fit does not converge.
EfficiencyReport observed_efficiency_at_mle(Criterion criterion, const ResponseModel& model, const RegressorMap& map,
                                            const FlodSolver& flod_solver, const DataSet& data, const Theta& init);

// D: (|V_ref| / |V_alt|)^(1/p); A: Tr(V_ref) / Tr(V_alt). Values above one
// favour the alternative.
double relative_efficiency(Criterion criterion, const Matrix& var_ref, const Matrix& var_alt);

}  // namespace obsinfo
