#include "obsinfo/model.hpp"

#include <cmath>
#include <numbers>

#include "obsinfo/errors.hpp"

namespace obsinfo {

RegressorMap::RegressorMap(std::vector<std::vector<int>> terms, std::size_t input_dimension)
    : terms_(std::move(terms)), input_dimension_(input_dimension) {
    if (terms_.empty()) {
        throw DimensionError("regressor map needs at least one term");
    }
    for (const auto& term : terms_) {
        if (term.size() != input_dimension_) {
            throw DimensionError("regressor term has " + std::to_string(term.size()) +
                                 " exponents, expected " + std::to_string(input_dimension_));
        }
        for (int e : term) {
            if (e < 0) throw DimensionError("regressor exponents must be nonnegative");
        }
    }
}

RegressorMap RegressorMap::linear(std::size_t input_dimension) {
    std::vector<std::vector<int>> terms;
    terms.emplace_back(input_dimension, 0);
    for (std::size_t k = 0; k < input_dimension; ++k) {
        std::vector<int> term(input_dimension, 0);
        term[k] = 1;
        terms.push_back(std::move(term));
    }
    return RegressorMap(std::move(terms), input_dimension);
}

Vector RegressorMap::operator()(std::span<const double> x) const {
    if (x.size() != input_dimension_) {
        throw DimensionError("design point has " + std::to_string(x.size()) +
                             " coordinates, expected " + std::to_string(input_dimension_));
    }
    Vector f(terms_.size());
    for (std::size_t t = 0; t < terms_.size(); ++t) {
        double v = 1.0;
        for (std::size_t k = 0; k < input_dimension_; ++k) {
            for (int e = 0; e < terms_[t][k]; ++e) v *= x[k];
        }
        f[static_cast<Eigen::Index>(t)] = v;
    }
    return f;
}

void GroupStats::add(double y) {
    ++count;
    sum += y;
    sum_sq += y * y;
    sum_log += y > 0.0 ? std::log(y) : 0.0;
}

std::string_view to_string(Family family) {
    switch (family) {
        case Family::GammaLog: return "gamma_log";
        case Family::NormalSqrt: return "normal_sqrt";
    }
    return "unknown";
}

Family family_from_string(std::string_view name) {
    if (name == "gamma_log") return Family::GammaLog;
    if (name == "normal_sqrt") return Family::NormalSqrt;
    throw DomainError("unknown model family '" + std::string(name) + "'");
}

ResponseModel::ResponseModel(Family family, double nuisance) : family_(family), nuisance_(nuisance) {
    if (!(nuisance > 0.0) || !std::isfinite(nuisance)) {
        throw DomainError(std::string(family == Family::GammaLog ? "gamma shape" : "normal sigma") +
                          " must be positive and finite");
    }
}

ResponseModel ResponseModel::gamma_log(double shape) { return {Family::GammaLog, shape}; }

ResponseModel ResponseModel::normal_sqrt(double sigma) { return {Family::NormalSqrt, sigma}; }

void ResponseModel::check_response(double y) const {
    if (!std::isfinite(y)) throw DomainError("response must be finite");
    if (family_ == Family::GammaLog && !(y > 0.0)) {
        throw DomainError("gamma response must be positive, got " + std::to_string(y));
    }
}

double ResponseModel::log_density(double eta, double y) const {
    check_response(y);
    const double a = nuisance_;
    if (family_ == Family::GammaLog) {
        return (a - 1.0) * std::log(y) + a * std::log(a) - std::lgamma(a) - a * eta - a * y * std::exp(-eta);
    }
    const double s2 = a * a;
    const double r = y - eta * eta;
    return -0.5 * std::log(2.0 * std::numbers::pi * s2) - r * r / (2.0 * s2);
}

double ResponseModel::score(double eta, double y) const {
    const double a = nuisance_;
    if (family_ == Family::GammaLog) return a * (y * std::exp(-eta) - 1.0);
    return 2.0 * eta * (y - eta * eta) / (a * a);
}

double ResponseModel::observed_elemental_info(double eta, double y) const {
    check_response(y);
    const double a = nuisance_;
    if (family_ == Family::GammaLog) return a * y * std::exp(-eta);
    return 2.0 * (3.0 * eta * eta - y) / (a * a);
}

double ResponseModel::expected_elemental_info(double eta) const {
    const double a = nuisance_;
    if (family_ == Family::GammaLog) return a;
    return 4.0 * eta * eta / (a * a);
}

double ResponseModel::group_log_density(double eta, const GroupStats& s) const {
    const double a = nuisance_;
    const auto n = static_cast<double>(s.count);
    if (family_ == Family::GammaLog) {
        return (a - 1.0) * s.sum_log + n * (a * std::log(a) - std::lgamma(a) - a * eta) - a * std::exp(-eta) * s.sum;
    }
    const double s2 = a * a;
    const double e2 = eta * eta;
    const double rss = s.sum_sq - 2.0 * e2 * s.sum + n * e2 * e2;
    return -0.5 * n * std::log(2.0 * std::numbers::pi * s2) - rss / (2.0 * s2);
}

double ResponseModel::group_score(double eta, const GroupStats& s) const {
    const double a = nuisance_;
    const auto n = static_cast<double>(s.count);
    if (family_ == Family::GammaLog) return a * (s.sum * std::exp(-eta) - n);
    return 2.0 * eta * (s.sum - n * eta * eta) / (a * a);
}

double ResponseModel::group_observed_info(double eta, const GroupStats& s) const {
    const double a = nuisance_;
    const auto n = static_cast<double>(s.count);
    if (family_ == Family::GammaLog) return a * s.sum * std::exp(-eta);
    return 2.0 * (3.0 * n * eta * eta - s.sum) / (a * a);
}

double ResponseModel::standard_draw(Rng& rng) const {
    if (family_ == Family::GammaLog) {
        std::gamma_distribution<double> gamma(nuisance_, 1.0 / nuisance_);
        return gamma(rng);
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    return normal(rng);
}

double ResponseModel::response_from_draw(double eta, double draw) const {
    if (family_ == Family::GammaLog) return std::exp(eta) * draw;
    return eta * eta + nuisance_ * draw;
}

double ResponseModel::sample_response(double eta, Rng& rng) const {
    return response_from_draw(eta, standard_draw(rng));
}

double ResponseModel::mean(double eta) const {
    return family_ == Family::GammaLog ? std::exp(eta) : eta * eta;
}

double linear_predictor(const Theta& theta, std::span<const double> x, const RegressorMap& map) {
    const Vector f = map(x);
    if (theta.size() != f.size()) {
        throw DimensionError("theta has length " + std::to_string(theta.size()) + ", regressor map has dimension " +
                             std::to_string(f.size()));
    }
    return theta.dot(f);
}

}  // namespace obsinfo
