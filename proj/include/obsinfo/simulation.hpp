#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "obsinfo/adaptive.hpp"
#include "obsinfo/config.hpp"

namespace obsinfo {

struct StudyConfig {
    ResponseModel model = ResponseModel::gamma_log(1.0);
    RegressorMap map = RegressorMap::linear(1);
    CandidateSet candidates{{{0.0}}};
    Theta truth;
    Theta theta0;  // prior guess used by FLOD and LOAD, and as MLE start
    std::vector<Method> methods;
    std::vector<Criterion> criteria;
    Schedule schedule;
    int replications = 10000;
    std::uint64_t seed = 1;
    bool exact = true;
    MleOptions mle;
    int threads = 1;
    double max_failure_fraction = 0.01;

    // truth defaults to theta0 when the config has none.
    static StudyConfig from(const ExperimentConfig& config);
};

// Statistics of one replication of one (method, criterion) at one n.
struct Outcome {
    double eff_theta = 0.0;  // observed efficiency at the truth
    bool eff_degenerate = false;
    std::optional<double> eff_mle;  // observed efficiency at the final MLE
    std::optional<Theta> theta_hat;
};

struct Cell {
    Method method = Method::FLOD;
    int n = 0;
    Criterion criterion;
    std::vector<Outcome> outcomes;  // indexed by replication
    int failures = 0;               // replications without a converged MLE
};

inline constexpr std::array<double, 6> kPercentileLevels{0.05, 0.10, 0.25, 0.50, 0.75, 0.95};

struct PercentileRow {
    Method method = Method::FLOD;
    int n = 0;
    Criterion criterion;
    std::string stat;  // "eff_theta" or "eff_mle"
    std::array<double, 6> values{};
    std::size_t count = 0;

    double median() const { return values[3]; }
};

struct RelEffRow {
    Method method = Method::FLOD;
    int n = 0;
    Criterion criterion;
    double releff = 0.0;
};

struct StudyResults {
    std::vector<Cell> cells;
    std::vector<PercentileRow> percentiles;
    std::vector<RelEffRow> releff;
    int efficiency_bound_violations = 0;  // GammaLog replications with eff_theta > 1
    std::string config_hash;
    std::uint64_t seed = 0;

    const PercentileRow* find_percentiles(Method m, int n, CriterionKind c, const std::string& stat) const;
    const RelEffRow* find_releff(Method m, int n, CriterionKind c) const;
};

// Linear interpolation between order statistics (sample quantile type 7).
double quantile(std::vector<double> values, double level);

// Runs every (criterion, method) on common random numbers per replication.
// The FLOD arm observes the exact FLOD at the truth for each n. Throws
// SolverError when more than max_failure_fraction of the replications of any
// cell lack an MLE.
StudyResults run_study(const StudyConfig& config, const std::string& config_hash = "");

// Percentile and Rel-Eff aggregation of finished cells.
void aggregate(StudyResults& results);

struct RateStudyConfig {
    ResponseModel model = ResponseModel::gamma_log(1.0);
    RegressorMap map = RegressorMap::linear(1);
    CandidateSet candidates{{{0.0}}};
    Theta truth;
    Criterion criterion;
    std::vector<int> n_grid;
    int m1 = 4;
    int run_size = 1;
    int replications = 2000;
    std::uint64_t seed = 1;
    int threads = 1;
};

struct RateResult {
    Method method = Method::FLOD;
    std::vector<int> n;
    std::vector<double> median_deviation;     // median of max_i |omega_i - w*_i|
    std::vector<double> median_inefficiency;  // median of 1 - eff_theta
    double slope = 0.0;                       // log-log slope of median_deviation
    double inefficiency_slope = 0.0;
};

// Least-squares slope of log y on log x.
double loglog_slope(const std::vector<int>& x, const std::vector<double>& y);

// FLOD (greedy tracking) and LOAD at the truth; needs >= 4 grid values.
std::vector<RateResult> rate_study(const RateStudyConfig& config);

enum class ExportFormat { Csv, Json };

// CSV: percentiles.csv and releff.csv, each starting with a
// "# config_hash=... seed=..." line. JSON: results.json with the same rows.
// Returns the files written; throws IoError.
std::vector<std::filesystem::path> export_results(const StudyResults& results, const std::filesystem::path& out_dir,
                                                  ExportFormat format);

// Reads back what export_results wrote (cells are not exported).
StudyResults read_results(const std::filesystem::path& out_dir, ExportFormat format);

}  // namespace obsinfo
