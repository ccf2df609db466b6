#include "obsinfo/information.hpp"

#include <cmath>

#include "obsinfo/errors.hpp"

namespace obsinfo {

std::string_view to_string(Definiteness d) {
    switch (d) {
        case Definiteness::PositiveDefinite: return "positive_definite";
        case Definiteness::PositiveSemidefinite: return "positive_semidefinite";
        case Definiteness::Indefinite: return "indefinite";
    }
    return "unknown";
}

InfoMatrix::InfoMatrix(Matrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() != entries_.cols()) throw DimensionError("information matrix must be square");
    const Eigen::Index p = entries_.rows();
    if (p == 0) throw DimensionError("information matrix must be nonempty");
    if (!entries_.allFinite()) throw DomainError("information matrix has non-finite entries");
    const double scale = 1.0 + entries_.cwiseAbs().maxCoeff();
    if ((entries_ - entries_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw DomainError("information matrix is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(entries_);
    eigenvalues_ = eig.eigenvalues();
    eigenvectors_ = eig.eigenvectors();
    const double tol = 1e-10 * std::abs(entries_.trace()) / static_cast<double>(p);
    const double smallest = eigenvalues_[0];
    if (smallest > tol) {
        definiteness_ = Definiteness::PositiveDefinite;
    } else if (smallest >= -tol) {
        definiteness_ = Definiteness::PositiveSemidefinite;
    } else {
        definiteness_ = Definiteness::Indefinite;
    }
}

InfoMatrix efi(const ResponseModel& model, const Theta& theta, const RegressorMap& map,
               const ContinuousDesign& design) {
    if (design.empty()) throw DimensionError("design has no support points");
    const auto p = static_cast<Eigen::Index>(map.dimension());
    if (theta.size() != p) throw DimensionError("theta length does not match regressor map");
    Matrix m = Matrix::Zero(p, p);
    for (std::size_t i = 0; i < design.size(); ++i) {
        const Vector f = map(design.point(i));
        const double mu = model.expected_elemental_info(theta.dot(f));
        m.noalias() += (design.weight(i) * mu) * (f * f.transpose());
    }
    return InfoMatrix(std::move(m));
}

InfoMatrix efi(const ResponseModel& model, const Theta& theta, const RegressorMap& map, const ExactDesign& design) {
    return efi(model, theta, map, design.normalized());
}

Matrix observed_information(const ResponseModel& model, const Theta& theta, const RegressorMap& map,
                            const DataSet& data) {
    const auto p = static_cast<Eigen::Index>(map.dimension());
    if (theta.size() != p) throw DimensionError("theta length does not match regressor map");
    Matrix j = Matrix::Zero(p, p);
    for (const auto& g : data.groups()) {
        if (g.stats.count == 0) continue;
        const Vector f = map(g.x);
        const double info = model.group_observed_info(theta.dot(f), g.stats);
        j.noalias() += info * (f * f.transpose());
    }
    return j;
}

InfoMatrix ofi(const ResponseModel& model, const Theta& theta, const RegressorMap& map, const DataSet& data) {
    if (data.empty()) throw DimensionError("observed information needs at least one observation");
    return InfoMatrix(observed_information(model, theta, map, data) / static_cast<double>(data.total()));
}

double q_ratio(const ResponseModel& model, const Theta& theta, const RegressorMap& map,
               const DataSet::Group& group) {
    const double eta = linear_predictor(theta, group.x, map);
    const double mu = model.expected_elemental_info(eta);
    if (mu == 0.0) {
        throw DegenerateError("expected elemental information is zero at a support point");
    }
    if (group.stats.count == 0) return 0.0;
    return model.group_observed_info(eta, group.stats) / mu;
}

OmegaWeights omega_weights(const ResponseModel& model, const Theta& theta, const RegressorMap& map,
                           const DataSet& data) {
    OmegaWeights out;
    out.q.reserve(data.group_count());
    for (const auto& g : data.groups()) {
        out.q.push_back(q_ratio(model, theta, map, g));
        out.total += out.q.back();
    }
    if (out.total == 0.0) throw DegenerateError("total observed-to-expected ratio Q is zero");
    out.omega.reserve(out.q.size());
    for (double q : out.q) out.omega.push_back(q / out.total);
    return out;
}

TauDesign tau_design(const ResponseModel& model, const Theta& theta, const RegressorMap& map, const DataSet& data) {
    if (data.group_count() == 0) throw DimensionError("tau design needs data");
    OmegaWeights w = omega_weights(model, theta, map, data);
    std::vector<DesignPoint> pts;
    pts.reserve(data.group_count());
    for (const auto& g : data.groups()) pts.push_back(g.x);
    // Renormalize against rounding so the design invariant holds exactly.
    double s = 0.0;
    for (double o : w.omega) s += o;
    for (double& o : w.omega) o /= s;
    TauDesign tau{ContinuousDesign(std::move(pts), w.omega), w.total, true};
    tau.proper = tau.design.is_proper();
    return tau;
}

double zeta_blend(double w, double run_size, double total_ratio, double omega) {
    const double denom = run_size + total_ratio;
    if (denom == 0.0) throw DegenerateError("m + Q is zero");
    return (run_size * w + total_ratio * omega) / denom;
}

InfoMatrix k_matrix(const ResponseModel& model, const Theta& theta, const RegressorMap& map,
                    const ContinuousDesign& next_run, int run_size, const DataSet& history) {
    if (run_size < 1) throw DomainError("run size must be at least 1");
    Matrix k = run_size * efi(model, theta, map, next_run).matrix();
    if (!history.empty()) k += observed_information(model, theta, map, history);
    return InfoMatrix(std::move(k));
}

ContinuousDesign nu_design(const ResponseModel& model, const Theta& theta, const RegressorMap& map,
                           const ContinuousDesign& next_run, int run_size, const DataSet& history) {
    std::vector<DesignPoint> pts = next_run.points();
    std::vector<double> w = next_run.weights();
    std::vector<double> omega(pts.size(), 0.0);
    double total = 0.0;
    if (!history.empty()) {
        const OmegaWeights ow = omega_weights(model, theta, map, history);
        total = ow.total;
        for (std::size_t g = 0; g < history.group_count(); ++g) {
            std::size_t idx = pts.size();
            for (std::size_t i = 0; i < pts.size(); ++i) {
                if (pts[i] == history.group(g).x) idx = i;
            }
            if (idx == pts.size()) {
                pts.push_back(history.group(g).x);
                w.push_back(0.0);
                omega.push_back(0.0);
            }
            omega[idx] = ow.omega[g];
        }
    }
    std::vector<double> zeta;
    zeta.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) zeta.push_back(zeta_blend(w[i], run_size, total, omega[i]));
    return ContinuousDesign(std::move(pts), std::move(zeta));
}

}  // namespace obsinfo
