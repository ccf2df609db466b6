#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "obsinfo/criteria.hpp"
#include "obsinfo/data.hpp"
#include "obsinfo/linalg.hpp"
#include "obsinfo/model.hpp"

namespace obsinfo {

// Finite discretization of the design region.
class CandidateSet {
public:
    explicit CandidateSet(std::vector<DesignPoint> points);

    std::size_t size() const noexcept { return points_.size(); }
    const std::vector<DesignPoint>& points() const noexcept { return points_; }
    const DesignPoint& point(std::size_t i) const { return points_.at(i); }
    std::optional<std::size_t> index_of(std::span<const double> x) const;

private:
    std::vector<DesignPoint> points_;
};

// Objective Psi{m M(lambda) + prior} for a run of size m, where `prior` is an
// unnormalized information matrix (J of the history for MOAD, the count-
// weighted EFI of the realized design for AOD) carrying `prior_size`
// observations' worth of information. By homogeneity of Psi this has the same
// minimizer as Psi{beta M(lambda) + (1 - beta) prior / prior_size} with
// beta = m / (m + prior_size).
class AugmentedProblem {
public:
    AugmentedProblem(Matrix prior, double prior_size, int run_size);

    // No prior: beta = 1, the plain FLOD problem.
    static AugmentedProblem none(Eigen::Index p, int run_size);
    // From a normalized prior and blend weight beta in (0, 1].
    static AugmentedProblem from_blend(const Matrix& normalized_prior, double beta, int run_size);

    const Matrix& prior() const noexcept { return prior_; }
    double prior_size() const noexcept { return prior_size_; }
    int run_size() const noexcept { return run_size_; }
    double beta() const noexcept { return run_size_ / (run_size_ + prior_size_); }

private:
    Matrix prior_;
    double prior_size_;
    int run_size_;
};

struct SolverDiagnostics {
    int iterations = 0;
    double gap = 0.0;         // relative equivalence-theorem gap (continuous), 0 for enumeration
    bool enumerated = false;  // exact solver: exhaustive over all compositions
    bool fallback = false;    // objective degenerate for every tried design; equal weights returned
    double psi = 0.0;         // objective value at the returned design
};

struct ContinuousSolution {
    ContinuousDesign design;
    SolverDiagnostics diagnostics;
};

struct ExactSolution {
    ExactDesign design;
    SolverDiagnostics diagnostics;
};

struct SolverOptions {
    double gap_tolerance = 1e-9;
    int max_iterations = 100000;
    double prune_threshold = 1e-8;
    double enumeration_limit = 1e5;
};

// Continuous locally optimal design over the candidates. Throws SolverError
// when no design over the candidates has a positive definite EFI.
ContinuousSolution flod_continuous(Criterion criterion, const ResponseModel& model, const Theta& theta,
                                   const RegressorMap& map, const CandidateSet& candidates,
                                   const SolverOptions& options = {});

// Exact optimum with n observations. The returned design lists every
// candidate (zero counts allowed). Throws DomainError when n < p.
ExactSolution flod_exact(Criterion criterion, const ResponseModel& model, const Theta& theta, const RegressorMap& map,
                         const CandidateSet& candidates, int n, const SolverOptions& options = {});

// Continuous minimizer of the augmented objective; equal weights flagged as
// fallback when the objective is degenerate everywhere it was probed.
ContinuousSolution augmented_continuous(Criterion criterion, const ResponseModel& model, const Theta& theta,
                                        const RegressorMap& map, const CandidateSet& candidates,
                                        const AugmentedProblem& problem, const SolverOptions& options = {});

// Exact allocation of problem.run_size() observations.
ExactSolution augmented_exact(Criterion criterion, const ResponseModel& model, const Theta& theta,
                              const RegressorMap& map, const CandidateSet& candidates,
                              const AugmentedProblem& problem, const SolverOptions& options = {});

// Psi{sum_i n_i mu_i f_i f_i' + prior} for counts on the candidates.
double augmented_psi(Criterion criterion, const ResponseModel& model, const Theta& theta, const RegressorMap& map,
                     const CandidateSet& candidates, const Matrix& prior, std::span<const int> counts);

// Efficient rounding of a continuous design to n observations. Starts from
// ceil((n - d/2) w_i) and adjusts one unit at a time: increments go to the
// smallest n_i / w_i, decrements to the largest (n_i - 1) / w_i. Ties go to
// the larger weight, then the lower index. Zero-weight points get no count.
ExactDesign round_design(const ContinuousDesign& xi, int n);
std::vector<int> round_weights(std::span<const double> weights, int n);

// Equivalence-theorem sensitivity of each candidate at a design with
// positive definite EFI M: mu f'M^-1 f for D, mu f'M^-2 f for A. The design is
// optimal iff the maximum equals p (D) or Tr M^-1 (A).
std::vector<double> sensitivities(Criterion criterion, const ResponseModel& model, const Theta& theta,
                                  const RegressorMap& map, const CandidateSet& candidates, const Matrix& m);

}  // namespace obsinfo
