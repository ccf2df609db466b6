#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "obsinfo/adaptive.hpp"
#include "obsinfo/criteria.hpp"
#include "obsinfo/design_opt.hpp"
#include "obsinfo/model.hpp"

namespace obsinfo {

using json = nlohmann::json;

struct ModelSpec {
    Family family = Family::GammaLog;
    double nuisance = 1.0;  // shape (gamma) or sigma (normal)

    ResponseModel make() const;
};

struct Schedule {
    int m1 = 4;
    int run_size = 1;
    std::vector<int> n;  // total sample sizes of interest

    // m_1, m_2, ... up to the largest n.
    std::vector<int> runs() const;
};

// One experiment or study, as read from a JSON document:
//
//   {"v": 1,
//    "model": {"family": "gamma_log", "shape": 0.1},
//    "regressors": [[0,0],[1,0],[0,1]],
//    "candidates": [[1,1],[1,-1],[-1,1],[-1,-1]] or "path/to/file.json",
//    "criterion": "A", "theta0": [1,1,1], "method": "load", "exact": true,
//    "schedule": {"m1": 4, "run_size": 1, "n": [12,36,100]},
//    "truth": [1,1,1], "methods": ["flod","load","moad"],
//    "criteria": ["D","A"], "replications": 10000, "seed": 1,
//    "mle_multi_start": true}
//
// Everything after "schedule" is only used by simulation studies.
struct ExperimentConfig {
    int version = 1;
    ModelSpec model;
    std::vector<std::vector<int>> regressors;
    std::vector<DesignPoint> candidates;
    Criterion criterion;
    Theta theta0;
    Method method = Method::LOAD;
    bool exact = true;
    Schedule schedule;
    // false: every MLE is a Newton ascent from theta0 alone (see MleOptions).
    bool mle_multi_start = true;

    std::optional<Theta> truth;
    std::vector<Method> methods;
    std::vector<Criterion> criteria;
    int replications = 10000;
    std::uint64_t seed = 1;

    RegressorMap regressor_map() const;
    CandidateSet candidate_set() const;
    ResponseModel response_model() const { return model.make(); }
    PolicyState policy(Method m, Criterion c) const;

    json to_json() const;
    // Relative candidate paths resolve against `base_dir`. Throws ConfigError
    // naming the offending field.
    static ExperimentConfig from_json(const json& doc, const std::filesystem::path& base_dir = {});
    static ExperimentConfig load(const std::filesystem::path& path);

    // FNV-1a of the canonical JSON form, as 16 hex digits.
    std::string hash() const;
};

// Built-in setups of the two simulation studies.
ExperimentConfig gamma_study_config();
ExperimentConfig normal_study_config();

std::string fnv1a_hex(const std::string& text);

}  // namespace obsinfo
