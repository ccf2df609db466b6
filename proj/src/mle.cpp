#include "obsinfo/mle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "obsinfo/errors.hpp"

namespace obsinfo {

namespace {

// Feature vectors and stats of the non-empty groups, computed once per fit.
struct Problem {
    const ResponseModel& model;
    std::vector<Vector> f;
    std::vector<const GroupStats*> stats;
    Eigen::Index p;

    Problem(const ResponseModel& m, const RegressorMap& map, const DataSet& data)
        : model(m), p(static_cast<Eigen::Index>(map.dimension())) {
        for (const auto& g : data.groups()) {
            if (g.stats.count == 0) continue;
            f.push_back(map(g.x));
            stats.push_back(&g.stats);
        }
    }

    double loglik(const Theta& t) const {
        double l = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) l += model.group_log_density(t.dot(f[i]), *stats[i]);
        return std::isfinite(l) ? l : -std::numeric_limits<double>::infinity();
    }

    Vector gradient(const Theta& t) const {
        Vector g = Vector::Zero(p);
        for (std::size_t i = 0; i < f.size(); ++i) g += model.group_score(t.dot(f[i]), *stats[i]) * f[i];
        return g;
    }

    // Observed information J = -Hessian.
    Matrix info(const Theta& t) const {
        Matrix j = Matrix::Zero(p, p);
        for (std::size_t i = 0; i < f.size(); ++i) {
            j.noalias() += model.group_observed_info(t.dot(f[i]), *stats[i]) * (f[i] * f[i].transpose());
        }
        return j;
    }
};

MleResult newton(const Problem& prob, Theta t, const MleOptions& opt) {
    MleResult r;
    double l = prob.loglik(t);
    Vector g = prob.gradient(t);
    int it = 0;
    for (; it < opt.max_iterations; ++it) {
        if (!std::isfinite(l) || !g.allFinite()) break;
        if (g.norm() <= opt.gradient_tolerance * std::max(1.0, std::abs(l))) {
            r.converged = true;
            break;
        }
        // Ascent direction from a positive definite modification of J.
        Eigen::SelfAdjointEigenSolver<Matrix> eig(prob.info(t));
        Vector lam = eig.eigenvalues();
        const double top = std::max(lam.cwiseAbs().maxCoeff(), 1e-300);
        for (Eigen::Index k = 0; k < lam.size(); ++k) lam[k] = std::max(std::abs(lam[k]), 1e-8 * top);
        const Matrix& v = eig.eigenvectors();
        const Vector dir = v * (v.transpose() * g).cwiseQuotient(lam);

        double step = 1.0;
        Theta next;
        double l_next = -std::numeric_limits<double>::infinity();
        // Near the optimum the gain drops below the rounding noise of l; a
        // step is then still taken if it shrinks the gradient.
        const double noise = 1e-13 * (1.0 + std::abs(l));
        Vector g_next;
        bool accepted = false;
        for (int h = 0; h < 60; ++h, step *= 0.5) {
            next = t + step * dir;
            l_next = prob.loglik(next);
            if (l_next >= l) {
                accepted = true;
                break;
            }
            if (l_next >= l - noise) {
                g_next = prob.gradient(next);
                if (g_next.norm() < g.norm()) {
                    accepted = true;
                    break;
                }
            }
        }
        if (!accepted || next == t) break;
        t = std::move(next);
        l = l_next;
        g = prob.gradient(t);
    }
    if (!r.converged && std::isfinite(l) && g.allFinite() &&
        g.norm() <= opt.gradient_tolerance * std::max(1.0, std::abs(l))) {
        r.converged = true;
    }
    r.theta_hat = std::move(t);
    r.log_likelihood = l;
    r.gradient_norm = g.norm();
    r.iterations = it;
    return r;
}

// Least-squares fit of eta_i = target_i over the observed support.
Theta ls_start(const Problem& prob, const std::vector<double>& target) {
    const auto k = static_cast<Eigen::Index>(prob.f.size());
    Matrix a(k, prob.p);
    Vector b(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        a.row(i) = prob.f[static_cast<std::size_t>(i)].transpose();
        b[i] = target[static_cast<std::size_t>(i)];
    }
    return a.colPivHouseholderQr().solve(b);
}

bool better(const MleResult& a, const MleResult& b, const Theta& init) {
    if (a.converged != b.converged) return a.converged;
    const double tol = 1e-10 * (1.0 + std::abs(b.log_likelihood));
    if (a.log_likelihood > b.log_likelihood + tol) return true;
    if (a.log_likelihood < b.log_likelihood - tol) return false;
    return (a.theta_hat - init).norm() < (b.theta_hat - init).norm();
}

}  // namespace

double log_likelihood(const ResponseModel& model, const Theta& theta, const RegressorMap& map, const DataSet& data) {
    if (theta.size() != static_cast<Eigen::Index>(map.dimension())) throw DimensionError("theta length mismatch");
    double l = 0.0;
    for (const auto& g : data.groups()) {
        if (g.stats.count > 0) l += model.group_log_density(linear_predictor(theta, g.x, map), g.stats);
    }
    return l;
}

Vector log_likelihood_gradient(const ResponseModel& model, const Theta& theta, const RegressorMap& map,
                               const DataSet& data) {
    if (theta.size() != static_cast<Eigen::Index>(map.dimension())) throw DimensionError("theta length mismatch");
    return Problem(model, map, data).gradient(theta);
}

Matrix log_likelihood_hessian(const ResponseModel& model, const Theta& theta, const RegressorMap& map,
                              const DataSet& data) {
    if (theta.size() != static_cast<Eigen::Index>(map.dimension())) throw DimensionError("theta length mismatch");
    return -Problem(model, map, data).info(theta);
}

MleResult fit_mle(const ResponseModel& model, const RegressorMap& map, const DataSet& data, const Theta& init,
                  const MleOptions& options) {
    const Problem prob(model, map, data);
    if (init.size() != prob.p) throw DimensionError("initial theta length does not match regressor map");
    if (!init.allFinite()) throw DomainError("initial theta must be finite");

    Matrix span = Matrix::Zero(prob.p, prob.p);
    for (const auto& f : prob.f) span += f * f.transpose();
    if (prob.f.empty() || Eigen::FullPivLU<Matrix>(span).rank() < prob.p) {
        throw SolverError("observed support does not identify theta");
    }

    std::vector<double> target;
    for (const GroupStats* s : prob.stats) target.push_back(s->sum / static_cast<double>(s->count));

    MleResult best;
    bool have = false;
    auto consider = [&](const Theta& start) {
        MleResult r = newton(prob, start, options);
        if (!have || better(r, best, init)) {
            best = std::move(r);
            have = true;
        }
    };

    if (!options.multi_start) {
        consider(init);
    } else if (model.family() == Family::GammaLog) {
        for (double& v : target) v = std::log(v);
        const Theta ls = ls_start(prob, target);
        // Concave likelihood: run from whichever start is already higher.
        const bool use_init = prob.loglik(init) >= prob.loglik(ls);
        consider(use_init ? init : ls);
    } else {
        // l(theta) = l(-theta), so flipping the first coordinate is redundant.
        const Eigen::Index flips = std::min<Eigen::Index>(prob.p - 1, 3);
        for (int mask = 0; mask < (1 << flips); ++mask) {
            Theta s = init;
            for (Eigen::Index k = 0; k < flips; ++k) {
                if (mask & (1 << k)) s[k + 1] = -s[k + 1];
            }
            consider(s);
        }
        for (double& v : target) v = std::sqrt(std::max(v, 0.0));
        consider(ls_start(prob, target));
        if ((-best.theta_hat - init).norm() < (best.theta_hat - init).norm()) best.theta_hat = -best.theta_hat;
    }
    best.hessian = -prob.info(best.theta_hat);
    return best;
}

}  // namespace obsinfo
