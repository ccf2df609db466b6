#include "obsinfo/design_opt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "obsinfo/errors.hpp"

namespace obsinfo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool same_point(std::span<const double> a, std::span<const double> b) {
    return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

// Rank-one pieces mu_i f_i f_i' of every candidate, evaluated once per solve.
struct Pieces {
    std::vector<Vector> f;
    std::vector<double> mu;
    std::vector<Matrix> a;
    Eigen::Index p = 0;

    Pieces(const ResponseModel& model, const Theta& theta, const RegressorMap& map, const CandidateSet& c)
        : p(static_cast<Eigen::Index>(map.dimension())) {
        if (theta.size() != p) throw DimensionError("theta length does not match regressor map");
        for (const auto& x : c.points()) {
            f.push_back(map(x));
            mu.push_back(model.expected_elemental_info(theta.dot(f.back())));
            a.push_back(mu.back() * f.back() * f.back().transpose());
        }
    }

    std::size_t size() const { return f.size(); }

    template <typename W>
    Matrix combine(const W& w, double scale, const Matrix& prior) const {
        Matrix b = prior;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (w[i] != 0) b.noalias() += (scale * static_cast<double>(w[i])) * a[i];
        }
        return b;
    }
};

// Objective on a raw matrix: kInf unless positive definite.
double objective(Criterion c, const Matrix& b) {
    if (!b.allFinite()) return kInf;
    const double scale = 1.0 + b.cwiseAbs().maxCoeff();
    if ((b - b.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        return psi(c, Matrix(0.5 * (b + b.transpose())));
    }
    return psi(c, b);
}

// Inverse of b when it is positive definite in the InfoMatrix sense.
std::optional<Matrix> pd_inverse(const Matrix& b) {
    const InfoMatrix m(0.5 * (b + b.transpose()));
    if (!m.positive_definite()) return std::nullopt;
    const Matrix& v = m.eigenvectors();
    return v * m.eigenvalues().cwiseInverse().asDiagonal() * v.transpose();
}

// Sensitivities s_i (larger is better to add) and the weighted average.
void sensitivity(Criterion c, const Pieces& pc, const Matrix& binv, std::vector<double>& s) {
    s.resize(pc.size());
    if (c.kind == CriterionKind::D) {
        for (std::size_t i = 0; i < pc.size(); ++i) s[i] = pc.mu[i] * pc.f[i].dot(binv * pc.f[i]);
    } else {
        const Matrix b2 = binv * binv;
        for (std::size_t i = 0; i < pc.size(); ++i) s[i] = pc.mu[i] * pc.f[i].dot(b2 * pc.f[i]);
    }
}

struct Continuous {
    std::vector<double> w;
    SolverDiagnostics diag;
};

// Minimizes Psi(scale * sum w_i A_i + prior) over the simplex starting from a
// design `w` at which the objective is finite.
Continuous solve_continuous(Criterion c, const Pieces& pc, double scale, const Matrix& prior, std::vector<double> w,
                            const SolverOptions& opt) {
    const std::size_t d = pc.size();
    Continuous out;
    std::vector<double> s;
    auto value = [&](const std::vector<double>& ww) { return objective(c, pc.combine(ww, scale, prior)); };

    double cur = value(w);
    int it = 0;

    // Multiplicative warm-up, kept only while it decreases the objective.
    for (int k = 0; k < 200; ++k, ++it) {
        const auto binv = pd_inverse(pc.combine(w, scale, prior));
        if (!binv) break;
        sensitivity(c, pc, *binv, s);
        std::vector<double> next(d);
        double tot = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double g = c.kind == CriterionKind::D ? s[i] : std::sqrt(std::max(s[i], 0.0));
            next[i] = w[i] * g;
            tot += next[i];
        }
        if (!(tot > 0.0)) break;
        for (double& v : next) v /= tot;
        const double nv = value(next);
        if (!(nv < cur)) break;
        w = std::move(next);
        cur = nv;
    }

    // Vertex exchange with an exact line search on the directional derivative.
    double gap = kInf;
    for (; it < opt.max_iterations; ++it) {
        const Matrix b = pc.combine(w, scale, prior);
        const auto binv = pd_inverse(b);
        if (!binv) break;
        sensitivity(c, pc, *binv, s);
        double avg = 0.0;
        for (std::size_t i = 0; i < d; ++i) avg += w[i] * s[i];
        std::size_t best = 0;
        for (std::size_t i = 1; i < d; ++i) {
            if (s[i] > s[best]) best = i;
        }
        std::size_t worst = d;
        for (std::size_t i = 0; i < d; ++i) {
            if (w[i] > 0.0 && i != best && (worst == d || s[i] < s[worst])) worst = i;
        }
        gap = avg != 0.0 ? (s[best] - avg) / std::abs(avg) : kInf;
        if (gap <= opt.gap_tolerance) break;
        if (worst == d) break;  // all weight already on `best`

        // Derivative of the objective along w_best += t, w_worst -= t has the
        // sign of s_worst(t) - s_best(t); find its root in [0, w_worst].
        auto slope = [&](double t) {
            Matrix bt = b + (scale * t) * (pc.a[best] - pc.a[worst]);
            const auto inv = pd_inverse(bt);
            if (!inv) return kInf;
            if (c.kind == CriterionKind::D) {
                return pc.mu[worst] * pc.f[worst].dot(*inv * pc.f[worst]) -
                       pc.mu[best] * pc.f[best].dot(*inv * pc.f[best]);
            }
            const Matrix i2 = *inv * *inv;
            return pc.mu[worst] * pc.f[worst].dot(i2 * pc.f[worst]) - pc.mu[best] * pc.f[best].dot(i2 * pc.f[best]);
        };
        double lo = 0.0;
        double hi = w[worst];
        double t;
        if (slope(hi) <= 0.0) {
            t = hi;
        } else {
            for (int k = 0; k < 100 && hi - lo > 1e-17; ++k) {
                const double mid = 0.5 * (lo + hi);
                (slope(mid) <= 0.0 ? lo : hi) = mid;
            }
            t = lo;
        }
        if (t <= 0.0) break;
        w[best] += t;
        w[worst] -= t;
        if (w[worst] < 1e-15) {
            w[best] += w[worst];
            w[worst] = 0.0;
        }
    }
    out.w = std::move(w);
    out.diag.iterations = it;
    out.diag.gap = gap;
    out.diag.psi = value(out.w);
    return out;
}

ContinuousDesign to_design(const CandidateSet& cands, const std::vector<double>& w, double threshold) {
    std::vector<DesignPoint> pts;
    std::vector<double> ws;
    double tot = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] >= threshold) {
            pts.push_back(cands.point(i));
            ws.push_back(w[i]);
            tot += w[i];
        }
    }
    for (double& v : ws) v /= tot;
    return ContinuousDesign(std::move(pts), std::move(ws));
}

// Continuous weights on all candidates (zero off-support) from a design.
std::vector<double> on_candidates(const CandidateSet& cands, const ContinuousDesign& xi) {
    std::vector<double> w(cands.size(), 0.0);
    for (std::size_t i = 0; i < xi.size(); ++i) {
        const auto k = cands.index_of(xi.point(i));
        if (k) w[*k] = xi.weight(i);
    }
    return w;
}

double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

bool improves(double candidate, double incumbent) {
    if (candidate == kInf) return false;
    if (incumbent == kInf) return true;
    return candidate < incumbent - 1e-12 * std::abs(incumbent);
}

struct ExactSearch {
    std::vector<int> counts;
    double value = kInf;
    bool enumerated = false;
    int iterations = 0;
};

// Lexicographic enumeration of compositions of n into d parts; the first
// minimizer (up to a relative 1e-12) wins.
ExactSearch enumerate(Criterion c, const Pieces& pc, const Matrix& prior, int n) {
    const std::size_t d = pc.size();
    ExactSearch out;
    out.enumerated = true;
    std::vector<int> cur(d, 0);
    // Start at (n, 0, ..., 0) and walk in descending lexicographic order of
    // the leading parts, which is ascending order of (c_d, ..., c_1).
    std::function<void(std::size_t, int, Matrix&)> rec = [&](std::size_t i, int left, Matrix& b) {
        if (i + 1 == d) {
            cur[i] = left;
            Matrix full = b + static_cast<double>(left) * pc.a[i];
            const double v = objective(c, full);
            ++out.iterations;
            if (improves(v, out.value)) {
                out.value = v;
                out.counts = cur;
            }
            return;
        }
        for (int k = left; k >= 0; --k) {
            cur[i] = k;
            Matrix next = b + static_cast<double>(k) * pc.a[i];
            rec(i + 1, left - k, next);
        }
    };
    Matrix b = prior;
    rec(0, n, b);
    return out;
}

// Best-improvement one-unit exchange from `start`.
ExactSearch exchange(Criterion c, const Pieces& pc, const Matrix& prior, std::vector<int> start, int max_iter) {
    const std::size_t d = pc.size();
    ExactSearch out;
    out.counts = std::move(start);
    Matrix b = pc.combine(out.counts, 1.0, prior);
    out.value = objective(c, b);
    for (; out.iterations < max_iter; ++out.iterations) {
        double best = out.value;
        std::size_t from = d;
        std::size_t to = d;
        for (std::size_t i = 0; i < d; ++i) {
            if (out.counts[i] == 0) continue;
            for (std::size_t j = 0; j < d; ++j) {
                if (j == i) continue;
                const double v = objective(c, b - pc.a[i] + pc.a[j]);
                if (improves(v, best)) {
                    best = v;
                    from = i;
                    to = j;
                }
            }
        }
        if (from == d) break;
        --out.counts[from];
        ++out.counts[to];
        b = pc.combine(out.counts, 1.0, prior);
        out.value = best;
    }
    return out;
}

ExactSearch solve_exact(Criterion c, const Pieces& pc, const Matrix& prior, int n,
                        const std::vector<double>& relaxed, const SolverOptions& opt) {
    const int d = static_cast<int>(pc.size());
    if (binomial(n + d - 1, d - 1) <= opt.enumeration_limit) return enumerate(c, pc, prior, n);
    return exchange(c, pc, prior, round_weights(relaxed, n), opt.max_iterations);
}

}  // namespace

CandidateSet::CandidateSet(std::vector<DesignPoint> points) : points_(std::move(points)) {
    if (points_.empty()) throw DimensionError("candidate set is empty");
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (points_[i].size() != points_[0].size()) throw DimensionError("candidate points differ in dimension");
        for (double v : points_[i]) {
            if (!std::isfinite(v)) throw DomainError("candidate coordinates must be finite");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (same_point(points_[i], points_[j])) {
                throw DimensionError("candidate points must be distinct (duplicate at index " + std::to_string(i) +
                                     ")");
            }
        }
    }
}

std::optional<std::size_t> CandidateSet::index_of(std::span<const double> x) const {
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (same_point(points_[i], x)) return i;
    }
    return std::nullopt;
}

AugmentedProblem::AugmentedProblem(Matrix prior, double prior_size, int run_size)
    : prior_(std::move(prior)), prior_size_(prior_size), run_size_(run_size) {
    if (run_size_ < 1) throw DomainError("run size must be at least 1");
    if (prior_.rows() != prior_.cols() || prior_.rows() == 0) throw DimensionError("prior must be square");
    if (!prior_.allFinite()) throw DomainError("prior matrix has non-finite entries");
    if (!(prior_size_ >= 0.0) || !std::isfinite(prior_size_)) {
        throw DomainError("prior effective size must be finite and nonnegative");
    }
}

AugmentedProblem AugmentedProblem::none(Eigen::Index p, int run_size) {
    return AugmentedProblem(Matrix::Zero(p, p), 0.0, run_size);
}

AugmentedProblem AugmentedProblem::from_blend(const Matrix& normalized_prior, double beta, int run_size) {
    if (!(beta > 0.0 && beta <= 1.0)) throw DomainError("blend weight must lie in (0, 1]");
    const double size = run_size * (1.0 - beta) / beta;
    return AugmentedProblem(size * normalized_prior, size, run_size);
}

ContinuousSolution flod_continuous(Criterion criterion, const ResponseModel& model, const Theta& theta,
                                   const RegressorMap& map, const CandidateSet& candidates,
                                   const SolverOptions& options) {
    const Pieces pc(model, theta, map, candidates);
    const std::vector<double> uniform(pc.size(), 1.0 / static_cast<double>(pc.size()));
    const Matrix zero = Matrix::Zero(pc.p, pc.p);
    if (objective(criterion, pc.combine(uniform, 1.0, zero)) == kInf) {
        throw SolverError("candidate set does not support a positive definite information matrix");
    }
    Continuous r = solve_continuous(criterion, pc, 1.0, zero, uniform, options);
    ContinuousDesign xi = to_design(candidates, r.w, options.prune_threshold);
    r.diag.psi = psi(criterion, efi(model, theta, map, xi));
    return {std::move(xi), r.diag};
}

ExactSolution flod_exact(Criterion criterion, const ResponseModel& model, const Theta& theta, const RegressorMap& map,
                         const CandidateSet& candidates, int n, const SolverOptions& options) {
    const auto p = static_cast<int>(map.dimension());
    if (n < p) throw DomainError("exact design needs n >= p = " + std::to_string(p));
    const ContinuousSolution relaxed = flod_continuous(criterion, model, theta, map, candidates, options);
    const Pieces pc(model, theta, map, candidates);
    const Matrix zero = Matrix::Zero(pc.p, pc.p);
    ExactSearch s = solve_exact(criterion, pc, zero, n, on_candidates(candidates, relaxed.design), options);
    if (s.value == kInf) throw SolverError("no exact design with n = " + std::to_string(n) + " is nonsingular");
    SolverDiagnostics diag;
    diag.iterations = s.iterations;
    diag.enumerated = s.enumerated;
    diag.psi = s.value * n;  // Psi of the normalized EFI
    return {ExactDesign(candidates.points(), std::move(s.counts)), diag};
}

ContinuousSolution augmented_continuous(Criterion criterion, const ResponseModel& model, const Theta& theta,
                                        const RegressorMap& map, const CandidateSet& candidates,
                                        const AugmentedProblem& problem, const SolverOptions& options) {
    const Pieces pc(model, theta, map, candidates);
    if (problem.prior().rows() != pc.p) throw DimensionError("prior dimension does not match regressor map");
    const double m = problem.run_size();
    const std::size_t d = pc.size();

    // Starting point with a finite objective: uniform, else the best vertex.
    std::vector<double> start(d, 1.0 / static_cast<double>(d));
    if (objective(criterion, pc.combine(start, m, problem.prior())) == kInf) {
        double best = kInf;
        for (std::size_t i = 0; i < d; ++i) {
            std::vector<double> v(d, 0.0);
            v[i] = 1.0;
            const double val = objective(criterion, pc.combine(v, m, problem.prior()));
            if (improves(val, best)) {
                best = val;
                start = v;
            }
        }
        if (best == kInf) {
            SolverDiagnostics diag;
            diag.fallback = true;
            diag.psi = kInf;
            return {ContinuousDesign::uniform(candidates.points()), diag};
        }
    }
    Continuous r = solve_continuous(criterion, pc, m, problem.prior(), std::move(start), options);
    ContinuousDesign xi = to_design(candidates, r.w, options.prune_threshold);
    r.diag.psi = objective(criterion, pc.combine(on_candidates(candidates, xi), m, problem.prior()));
    return {std::move(xi), r.diag};
}

ExactSolution augmented_exact(Criterion criterion, const ResponseModel& model, const Theta& theta,
                              const RegressorMap& map, const CandidateSet& candidates,
                              const AugmentedProblem& problem, const SolverOptions& options) {
    const Pieces pc(model, theta, map, candidates);
    if (problem.prior().rows() != pc.p) throw DimensionError("prior dimension does not match regressor map");
    const int m = problem.run_size();
    std::vector<double> relaxed(pc.size(), 1.0 / static_cast<double>(pc.size()));
    const int d = static_cast<int>(pc.size());
    if (binomial(m + d - 1, d - 1) > options.enumeration_limit) {
        const ContinuousSolution c =
            augmented_continuous(criterion, model, theta, map, candidates, problem, options);
        relaxed = on_candidates(candidates, c.design);
    }
    ExactSearch s = solve_exact(criterion, pc, problem.prior(), m, relaxed, options);
    SolverDiagnostics diag;
    diag.iterations = s.iterations;
    diag.enumerated = s.enumerated;
    if (s.value == kInf) {
        diag.fallback = true;
        diag.psi = kInf;
        return {ExactDesign(candidates.points(), round_weights(std::vector<double>(pc.size(), 1.0 / d), m)), diag};
    }
    diag.psi = s.value;
    return {ExactDesign(candidates.points(), std::move(s.counts)), diag};
}

double augmented_psi(Criterion criterion, const ResponseModel& model, const Theta& theta, const RegressorMap& map,
                     const CandidateSet& candidates, const Matrix& prior, std::span<const int> counts) {
    const Pieces pc(model, theta, map, candidates);
    if (counts.size() != pc.size()) throw DimensionError("counts do not match candidate set");
    return objective(criterion, pc.combine(counts, 1.0, prior));
}

std::vector<int> round_weights(std::span<const double> weights, int n) {
    if (n < 0) throw DomainError("cannot round to a negative total");
    const std::size_t d = weights.size();
    double tot = 0.0;
    std::size_t support = 0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("rounding needs nonnegative finite weights");
        tot += w;
        if (w > 0.0) ++support;
    }
    if (support == 0) throw DomainError("rounding needs a positive weight");
    std::vector<int> c(d, 0);
    const double mult = n - 0.5 * static_cast<double>(support);
    int sum = 0;
    for (std::size_t i = 0; i < d; ++i) {
        if (weights[i] > 0.0) c[i] = std::max(0, static_cast<int>(std::ceil(mult * weights[i] / tot)));
        sum += c[i];
    }
    // a preferred over b on a tie in the ratio: larger weight, then lower index
    auto tie_prefers = [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; };
    while (sum < n) {
        std::size_t k = d;
        double best = kInf;
        for (std::size_t i = 0; i < d; ++i) {
            if (weights[i] <= 0.0) continue;
            const double r = c[i] / weights[i];
            if (k == d || r < best || (r == best && tie_prefers(i, k))) {
                k = i;
                best = r;
            }
        }
        ++c[k];
        ++sum;
    }
    while (sum > n) {
        std::size_t k = d;
        double best = -kInf;
        for (std::size_t i = 0; i < d; ++i) {
            if (c[i] == 0) continue;
            const double r = (c[i] - 1) / weights[i];
            // on ties remove from the smaller weight, then the higher index
            if (k == d || r > best || (r == best && !tie_prefers(i, k))) {
                k = i;
                best = r;
            }
        }
        --c[k];
        --sum;
    }
    return c;
}

ExactDesign round_design(const ContinuousDesign& xi, int n) {
    if (n < 1) throw DomainError("exact design needs at least one observation");
    if (!xi.is_proper()) throw DomainError("cannot round a design with negative weights");
    return ExactDesign(xi.points(), round_weights(xi.weights(), n));
}

std::vector<double> sensitivities(Criterion criterion, const ResponseModel& model, const Theta& theta,
                                  const RegressorMap& map, const CandidateSet& candidates, const Matrix& m) {
    const Pieces pc(model, theta, map, candidates);
    const auto inv = pd_inverse(m);
    if (!inv) throw DegenerateError("sensitivities need a positive definite information matrix");
    std::vector<double> s;
    sensitivity(criterion, pc, *inv, s);
    return s;
}

}  // namespace obsinfo
