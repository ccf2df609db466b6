#include <gtest/gtest.h>

#include "obsinfo/errors.hpp"
#include "obsinfo/mle.hpp"
#include "support.hpp"

using namespace obsinfo;
using namespace testing_support;

namespace {

double oracle_loglik(const ResponseModel& m, const Theta& t, const DataSet& d) {
    double s = 0;
    for (const auto& g : d.groups()) {
        for (double y : g.responses) s += oracle_log_density(m, eta_of(t, g.x), y);
    }
    return s;
}

}  // namespace

TEST(FitMle, NoiselessDataRecoverTruth) {
    const Theta truth = Vector::LinSpaced(3, 0.4, -0.6);
    {
        const auto gm = ResponseModel::gamma_log(0.1);
        const MleResult r = fit_mle(gm, linear2(), mean_data(gm, truth, vertices(), {2, 1, 1, 3}), ones());
        ASSERT_TRUE(r.converged);
        EXPECT_LT((r.theta_hat - truth).cwiseAbs().maxCoeff(), 1e-8);
    }
    {
        const auto nm = ResponseModel::normal_sqrt(5.0);
        const DataSet d = mean_data(nm, truth, vertices(), {2, 1, 1, 3});
        const MleResult r = fit_mle(nm, linear2(), d, Theta(Vector::LinSpaced(3, 0.5, -0.5)));
        ASSERT_TRUE(r.converged);
        EXPECT_LT((r.theta_hat - truth).cwiseAbs().maxCoeff(), 1e-6);
        // The sign follows the start.
        const MleResult flipped = fit_mle(nm, linear2(), d, Theta(Vector::LinSpaced(3, -0.5, 0.5)));
        EXPECT_LT((flipped.theta_hat + truth).cwiseAbs().maxCoeff(), 1e-6);
    }
}

// Gamma log-likelihood is concave in theta: the fit must beat every point of a
// 0.01 grid over [0, 2]^3 and sit within one grid step of the grid argmax.
TEST(FitMle, GammaBeatsFullGrid) {
    const auto gm = ResponseModel::gamma_log(2.0);
    Rng rng(41);
    const DataSet d = simulate(gm, ones(), vertices(), {10, 10, 10, 10}, rng);
    const MleResult r = fit_mle(gm, linear2(), d, ones());
    ASSERT_TRUE(r.converged);
    ASSERT_GT(r.theta_hat.minCoeff(), 0.05);
    ASSERT_LT(r.theta_hat.maxCoeff(), 1.95);

    // sum over groups of -a n eta - a e^-eta sum(y), the theta-dependent part.
    std::vector<double> n, sy;
    for (const auto& g : d.groups()) {
        n.push_back(static_cast<double>(g.responses.size()));
        double s = 0;
        for (double y : g.responses) s += y;
        sy.push_back(s);
    }
    const double a = 2.0;
    double best = -INFINITY;
    Vector arg(3);
    for (int i = 0; i <= 200; ++i) {
        for (int j = 0; j <= 200; ++j) {
            for (int k = 0; k <= 200; ++k) {
                const Theta t = Vector{{i * 0.01, j * 0.01, k * 0.01}};
                double v = 0;
                for (std::size_t g = 0; g < n.size(); ++g) {
                    const double e = eta_of(t, d.group(g).x);
                    v += -a * n[g] * e - a * std::exp(-e) * sy[g];
                }
                if (v > best) best = v, arg = t;
            }
        }
    }
    double at_fit = 0;
    for (std::size_t g = 0; g < n.size(); ++g) {
        const double e = eta_of(r.theta_hat, d.group(g).x);
        at_fit += -a * n[g] * e - a * std::exp(-e) * sy[g];
    }
    EXPECT_GE(at_fit, best - 1e-9);
    EXPECT_LE((r.theta_hat - arg).cwiseAbs().maxCoeff(), 0.01 + 1e-9);
    EXPECT_NEAR(r.log_likelihood, oracle_loglik(gm, r.theta_hat, d), 1e-8 * std::abs(r.log_likelihood));
}

TEST(LogLikelihood, GradientAndHessianMatchOracles) {
    Rng rng(42);
    for (const auto& m : {ResponseModel::gamma_log(0.7), ResponseModel::normal_sqrt(2.0)}) {
        const DataSet d = simulate(m, ones(), vertices(), {3, 2, 4, 1}, rng);
        const Theta t = Vector{{0.8, 0.3, -0.2}};
        const Vector g = log_likelihood_gradient(m, t, linear2(), d);
        const double h = 1e-6;
        for (int i = 0; i < 3; ++i) {
            Theta up = t, dn = t;
            up[i] += h;
            dn[i] -= h;
            const double fd = (oracle_loglik(m, up, d) - oracle_loglik(m, dn, d)) / (2 * h);
            EXPECT_NEAR(g[i], fd, 1e-5 * std::max(1.0, std::abs(fd)));
        }
        EXPECT_LT(max_rel_diff(log_likelihood_hessian(m, t, linear2(), d), -oracle_j(m, t, d)), 1e-12);
    }
}

TEST(FitMle, StationaryWithNegativeDefiniteHessian) {
    Rng rng(43);
    for (int rep = 0; rep < 30; ++rep) {
        for (const auto& m : {ResponseModel::gamma_log(0.1), ResponseModel::normal_sqrt(5.0)}) {
            const DataSet d = simulate(m, ones(), vertices(), {5, 5, 5, 5}, rng);
            const MleResult r = fit_mle(m, linear2(), d, ones());
            if (!r.converged) continue;
            const Vector g = log_likelihood_gradient(m, r.theta_hat, linear2(), d);
            EXPECT_LT(g.norm(), 1e-6 * std::max(1.0, std::abs(r.log_likelihood)));
            const Eigen::SelfAdjointEigenSolver<Matrix> es(r.hessian);
            EXPECT_LE(es.eigenvalues().maxCoeff(), 1e-8 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()));
        }
    }
}

TEST(FitMle, ConsistentWithManyObservations) {
    Rng rng(44);
    const Theta truth = Vector{{1.0, 0.5, -0.5}};
    for (const auto& m : {ResponseModel::gamma_log(0.1), ResponseModel::normal_sqrt(5.0)}) {
        const DataSet d = simulate(m, truth, vertices(), {3000, 3000, 3000, 3000}, rng);
        const MleResult r = fit_mle(m, linear2(), d, ones());
        ASSERT_TRUE(r.converged);
        EXPECT_LT((r.theta_hat - truth).cwiseAbs().maxCoeff(), 0.1);
    }
}

TEST(FitMle, NonSpanningSupportThrows) {
    const auto gm = ResponseModel::gamma_log(1.0);
    const DataSet d = mean_data(gm, ones(), {{1, 1}, {-1, -1}}, {5, 5});
    EXPECT_THROW(fit_mle(gm, linear2(), d, ones()), SolverError);
    EXPECT_THROW(fit_mle(gm, linear2(), DataSet{}, ones()), SolverError);
}

// A single start never beats the multi-start fit and still ends stationary.
TEST(FitMle, SingleStartIsLocalOptimum) {
    const auto nm = ResponseModel::normal_sqrt(5.0);
    Rng rng(45);
    MleOptions single;
    single.multi_start = false;
    int differ = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const DataSet d = simulate(nm, ones(), vertices(), {3, 3, 3, 3}, rng);
        const MleResult multi = fit_mle(nm, linear2(), d, ones());
        const MleResult one = fit_mle(nm, linear2(), d, ones(), single);
        if (!one.converged || !multi.converged) continue;
        EXPECT_LE(one.log_likelihood, multi.log_likelihood + 1e-9);
        EXPECT_LT(log_likelihood_gradient(nm, one.theta_hat, linear2(), d).norm(),
                  1e-6 * std::max(1.0, std::abs(one.log_likelihood)));
        differ += (one.theta_hat - multi.theta_hat).norm() > 1e-6;
    }
    // Small normal samples have several local optima.
    EXPECT_GT(differ, 0);
}
