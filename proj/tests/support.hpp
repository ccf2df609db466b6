#pragma once

// Shared fixtures and independent oracles. Oracles here are written from the
// model definitions directly and never call the library's information or
// criterion code.

#include <cmath>
#include <functional>
#include <vector>

#include "obsinfo/adaptive.hpp"
#include "obsinfo/data.hpp"
#include "obsinfo/design_opt.hpp"
#include "obsinfo/model.hpp"

namespace testing_support {

using namespace obsinfo;

inline std::vector<DesignPoint> vertices() { return {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}; }
inline RegressorMap linear2() { return RegressorMap::linear(2); }
inline Theta ones() { return Theta::Ones(3); }

inline Vector features(const DesignPoint& x) {
    Vector f(3);
    f << 1.0, x[0], x[1];
    return f;
}

inline double eta_of(const Theta& t, const DesignPoint& x) { return features(x).dot(t); }

// -d2/deta2 log f(y | eta), written out per family.
inline double oracle_obs_info(const ResponseModel& m, double eta, double y) {
    const double a = m.nuisance();
    if (m.family() == Family::GammaLog) return a * y * std::exp(-eta);
    return 2.0 / (a * a) * (3.0 * eta * eta - y);
}

inline double oracle_exp_info(const ResponseModel& m, double eta) {
    const double a = m.nuisance();
    if (m.family() == Family::GammaLog) return a;
    return 4.0 * eta * eta / (a * a);
}

inline double oracle_log_density(const ResponseModel& m, double eta, double y) {
    const double a = m.nuisance();
    if (m.family() == Family::GammaLog) {
        // shape a, mean e^eta: rate a e^-eta
        return a * std::log(a) - a * eta + (a - 1.0) * std::log(y) - a * y * std::exp(-eta) - std::lgamma(a);
    }
    const double r = y - eta * eta;
    return -0.5 * std::log(2.0 * M_PI * a * a) - r * r / (2.0 * a * a);
}

// Unnormalized J from raw responses.
inline Matrix oracle_j(const ResponseModel& m, const Theta& t, const DataSet& data) {
    Matrix j = Matrix::Zero(3, 3);
    for (const auto& g : data.groups()) {
        const Vector f = features(g.x);
        for (double y : g.responses) j += oracle_obs_info(m, eta_of(t, g.x), y) * f * f.transpose();
    }
    return j;
}

// sum_i c_i mu_i f f' over points with counts (or weights).
template <class W>
Matrix oracle_efi(const ResponseModel& m, const Theta& t, const std::vector<DesignPoint>& pts, const std::vector<W>& w) {
    Matrix s = Matrix::Zero(3, 3);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vector f = features(pts[i]);
        s += static_cast<double>(w[i]) * oracle_exp_info(m, eta_of(t, pts[i])) * f * f.transpose();
    }
    return s;
}

// Psi from determinant / trace of the inverse; +inf unless positive definite.
inline double oracle_psi(CriterionKind k, const Matrix& m) {
    const Matrix s = 0.5 * (m + m.transpose());
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) return INFINITY;
    const Matrix l = llt.matrixL();
    if (l.diagonal().minCoeff() <= 1e-12 * std::sqrt(std::abs(s.trace()))) return INFINITY;
    if (k == CriterionKind::D) {
        const double det = l.diagonal().prod();
        return std::pow(det * det, -1.0 / static_cast<double>(s.rows()));
    }
    return llt.solve(Matrix::Identity(s.rows(), s.cols())).trace();
}

// All compositions of n into d nonnegative parts.
inline void compositions(int n, int d, const std::function<void(const std::vector<int>&)>& visit) {
    std::vector<int> c(static_cast<std::size_t>(d), 0);
    std::function<void(int, int)> rec = [&](int i, int left) {
        if (i == d - 1) {
            c[static_cast<std::size_t>(i)] = left;
            visit(c);
            return;
        }
        for (int k = left; k >= 0; --k) {
            c[static_cast<std::size_t>(i)] = k;
            rec(i + 1, left - k);
        }
    };
    rec(0, n);
}

// Draws counts[i] responses at pts[i] from the truth.
inline DataSet simulate(const ResponseModel& m, const Theta& truth, const std::vector<DesignPoint>& pts,
                        const std::vector<int>& counts, Rng& rng) {
    DataSet d;
    std::vector<DataSet::Allocation> run;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (counts[i] == 0) continue;
        DataSet::Allocation a{pts[i], {}};
        for (int k = 0; k < counts[i]; ++k) a.responses.push_back(m.sample_response(eta_of(truth, pts[i]), rng));
        run.push_back(std::move(a));
    }
    d.append_run(run, m);
    return d;
}

// Data whose responses carry exactly their expected information: y = e^eta
// for gamma, y = eta^2 for normal.
inline DataSet mean_data(const ResponseModel& m, const Theta& t, const std::vector<DesignPoint>& pts,
                         const std::vector<int>& counts) {
    DataSet d;
    std::vector<DataSet::Allocation> run;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (counts[i] == 0) continue;
        const double e = eta_of(t, pts[i]);
        const double y = m.family() == Family::GammaLog ? std::exp(e) : e * e;
        run.push_back({pts[i], std::vector<double>(static_cast<std::size_t>(counts[i]), y)});
    }
    d.append_run(run, m);
    return d;
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

inline double max_rel_diff(const Matrix& a, const Matrix& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()));
}

}  // namespace testing_support
