#pragma once

#include <string_view>
#include <vector>

#include "obsinfo/data.hpp"
#include "obsinfo/linalg.hpp"
#include "obsinfo/model.hpp"

namespace obsinfo {

enum class Definiteness { PositiveDefinite, PositiveSemidefinite, Indefinite };

std::string_view to_string(Definiteness d);

// Symmetric p x p information matrix with its eigen-classification.
// Classification: smallest eigenvalue > tol is PD, >= -tol is singular PSD,
// otherwise indefinite, where tol = 1e-10 * |trace| / p.
class InfoMatrix {
public:
    InfoMatrix() = default;
    explicit InfoMatrix(Matrix entries);

    static InfoMatrix zero(Eigen::Index p) { return InfoMatrix(Matrix::Zero(p, p)); }

    const Matrix& matrix() const noexcept { return entries_; }
    Eigen::Index dimension() const noexcept { return entries_.rows(); }
    Definiteness definiteness() const noexcept { return definiteness_; }
    bool positive_definite() const noexcept { return definiteness_ == Definiteness::PositiveDefinite; }
    // Ascending.
    const Vector& eigenvalues() const noexcept { return eigenvalues_; }
    const Matrix& eigenvectors() const noexcept { return eigenvectors_; }

    InfoMatrix scaled(double c) const { return InfoMatrix(c * entries_); }

private:
    Matrix entries_;
    Vector eigenvalues_;
    Matrix eigenvectors_;
    Definiteness definiteness_ = Definiteness::PositiveSemidefinite;
};

// Normalized expected information sum_i w_i mu_eta(x_i) f f'. Weights are used
// as given, so signed "designs" are accepted.
InfoMatrix efi(const ResponseModel& model, const Theta& theta, const RegressorMap& map,
               const ContinuousDesign& design);
InfoMatrix efi(const ResponseModel& model, const Theta& theta, const RegressorMap& map, const ExactDesign& design);

// Normalized observed information (1/n) sum_ij I_eta(x_i, y_ij) f f'.
InfoMatrix ofi(const ResponseModel& model, const Theta& theta, const RegressorMap& map, const DataSet& data);

// Unnormalized observed information J_theta(D) = n * ofi.
Matrix observed_information(const ResponseModel& model, const Theta& theta, const RegressorMap& map,
                            const DataSet& data);

// sum_j I_eta(x, y_j) / mu_eta(x) over one support point.
double q_ratio(const ResponseModel& model, const Theta& theta, const RegressorMap& map,
               const DataSet::Group& group);

struct OmegaWeights {
    std::vector<double> q;      // per group
    double total = 0.0;         // Q
    std::vector<double> omega;  // q_i / Q
};

// Throws DegenerateError when Q = 0.
OmegaWeights omega_weights(const ResponseModel& model, const Theta& theta, const RegressorMap& map,
                           const DataSet& data);

struct TauDesign {
    ContinuousDesign design;
    double total = 0.0;  // Q
    bool proper = true;  // false when some omega_i < 0
};

// The "design" on the observed support whose EFI is proportional to the OFI.
TauDesign tau_design(const ResponseModel& model, const Theta& theta, const RegressorMap& map, const DataSet& data);

// (m w + Q omega) / (m + Q)
double zeta_blend(double w, double run_size, double total_ratio, double omega);

// Expected observed information after the next run: m M(lambda) + J(history)
// (unnormalized). An empty history contributes a zero matrix.
InfoMatrix k_matrix(const ResponseModel& model, const Theta& theta, const RegressorMap& map,
                    const ContinuousDesign& next_run, int run_size, const DataSet& history);

// nu(w): the blended design on the union of next-run and history support,
// weights zeta_blend(w_i, m, Q, omega_i); its EFI times (m + Q) equals k_matrix.
ContinuousDesign nu_design(const ResponseModel& model, const Theta& theta, const RegressorMap& map,
                           const ContinuousDesign& next_run, int run_size, const DataSet& history);

}  // namespace obsinfo
