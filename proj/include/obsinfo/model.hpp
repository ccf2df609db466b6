#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "obsinfo/linalg.hpp"
#include "obsinfo/rng.hpp"

namespace obsinfo {

// A point x in the design region (R^s).
using DesignPoint = std::vector<double>;

// Feature expansion f_x(x) built from monomials: each term lists one exponent
// per coordinate of x, so {{0,0},{1,0},{0,1}} is (1, x1, x2).
class RegressorMap {
public:
    RegressorMap(std::vector<std::vector<int>> terms, std::size_t input_dimension);

    // (1, x1, ..., xs)
    static RegressorMap linear(std::size_t input_dimension);

    std::size_t dimension() const noexcept { return terms_.size(); }
    std::size_t input_dimension() const noexcept { return input_dimension_; }
    const std::vector<std::vector<int>>& terms() const noexcept { return terms_; }

    Vector operator()(std::span<const double> x) const;

private:
    std::vector<std::vector<int>> terms_;
    std::size_t input_dimension_;
};

// Sufficient statistics of the responses observed at one support point. Both
// supported families have elemental information and score linear in y, so
// these sums are all any group-level computation needs.
struct GroupStats {
    std::size_t count = 0;
    double sum = 0.0;
    double sum_sq = 0.0;
    double sum_log = 0.0;  // only meaningful for positive responses

    void add(double y);
};

enum class Family { GammaLog, NormalSqrt };

std::string_view to_string(Family family);
Family family_from_string(std::string_view name);

// Response distribution f(y | eta) with known nuisance parameter.
//
// GammaLog: shape alpha, mean e^eta (scale e^eta / alpha).
// NormalSqrt: y = eta^2 + N(0, sigma^2).
//
// Log-densities keep every additive constant.
class ResponseModel {
public:
    static ResponseModel gamma_log(double shape);
    static ResponseModel normal_sqrt(double sigma);

    Family family() const noexcept { return family_; }
    // alpha for GammaLog, sigma for NormalSqrt.
    double nuisance() const noexcept { return nuisance_; }

    // Throws DomainError when y is outside the support (y <= 0 for gamma).
    void check_response(double y) const;

    double log_density(double eta, double y) const;
    // d/d eta of log_density
    double score(double eta, double y) const;
    // I_eta(x, y) = -d^2/d eta^2 log f(y | eta)
    double observed_elemental_info(double eta, double y) const;
    // mu_eta(x) = E[I_eta(x, y)]
    double expected_elemental_info(double eta) const;
    // False when mu_eta is constant in eta, i.e. the expected information (and
    // hence any optimal design) does not depend on theta.
    bool expected_info_depends_on_eta() const noexcept { return family_ != Family::GammaLog; }

    // Group-level sums over all responses in `stats`.
    double group_log_density(double eta, const GroupStats& stats) const;
    double group_score(double eta, const GroupStats& stats) const;
    double group_observed_info(double eta, const GroupStats& stats) const;

    // Responses are generated as response_from_draw(eta, standard_draw(rng)).
    // The standardized draw does not depend on eta, so two designs consuming
    // the same stream see coupled responses.
    double standard_draw(Rng& rng) const;
    double response_from_draw(double eta, double draw) const;
    double sample_response(double eta, Rng& rng) const;

    double mean(double eta) const;

    friend bool operator==(const ResponseModel&, const ResponseModel&) = default;

private:
    ResponseModel(Family family, double nuisance);

    Family family_;
    double nuisance_;
};

// eta = theta' f_x(x)
double linear_predictor(const Theta& theta, std::span<const double> x, const RegressorMap& map);

}  // namespace obsinfo
