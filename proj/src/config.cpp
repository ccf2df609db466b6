#include "obsinfo/config.hpp"

#include <cstdio>
#include <fstream>

#include "obsinfo/errors.hpp"

namespace obsinfo {

ResponseModel ModelSpec::make() const {
    return family == Family::GammaLog ? ResponseModel::gamma_log(nuisance) : ResponseModel::normal_sqrt(nuisance);
}

std::vector<int> Schedule::runs() const {
    std::vector<int> out;
    if (n.empty()) return out;
    const int last = *std::max_element(n.begin(), n.end());
    int total = m1;
    out.push_back(m1);
    while (total < last) {
        out.push_back(run_size);
        total += run_size;
    }
    return out;
}

RegressorMap ExperimentConfig::regressor_map() const {
    const std::size_t s = regressors.empty() ? 0 : regressors.front().size();
    return RegressorMap(regressors, s);
}

CandidateSet ExperimentConfig::candidate_set() const { return CandidateSet(candidates); }

PolicyState ExperimentConfig::policy(Method m, Criterion c) const {
    MleOptions mle;
    mle.multi_start = mle_multi_start;
    return PolicyState(m, c, response_model(), regressor_map(), candidate_set(), theta0, exact, mle);
}

namespace {

json vec(const Theta& t) {
    json a = json::array();
    for (Eigen::Index i = 0; i < t.size(); ++i) a.push_back(t[i]);
    return a;
}

template <typename F>
auto field(const json& doc, const std::string& name, F&& read) -> decltype(read(doc)) {
    if (!doc.contains(name)) throw ConfigError(name, "missing");
    try {
        return read(doc.at(name));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(name, e.what());
    }
}

Theta read_theta(const json& j) {
    if (!j.is_array() || j.empty()) throw std::runtime_error("expected a nonempty array of numbers");
    Theta t(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) t[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    if (!t.allFinite()) throw std::runtime_error("entries must be finite");
    return t;
}

std::vector<DesignPoint> read_points(const json& j) {
    if (!j.is_array() || j.empty()) throw std::runtime_error("expected a nonempty array of points");
    std::vector<DesignPoint> pts;
    for (const auto& p : j) pts.push_back(p.get<DesignPoint>());
    return pts;
}

}  // namespace

json ExperimentConfig::to_json() const {
    json doc;
    doc["v"] = version;
    doc["model"] = {{"family", std::string(to_string(model.family))},
                    {model.family == Family::GammaLog ? "shape" : "sigma", model.nuisance}};
    doc["regressors"] = regressors;
    doc["candidates"] = candidates;
    doc["criterion"] = std::string(to_string(criterion.kind));
    doc["theta0"] = vec(theta0);
    doc["method"] = std::string(to_string(method));
    doc["exact"] = exact;
    doc["schedule"] = {{"m1", schedule.m1}, {"run_size", schedule.run_size}, {"n", schedule.n}};
    if (truth) doc["truth"] = vec(*truth);
    json ms = json::array();
    for (Method m : methods) ms.push_back(std::string(to_string(m)));
    doc["methods"] = ms;
    json cs = json::array();
    for (Criterion c : criteria) cs.push_back(std::string(to_string(c.kind)));
    doc["criteria"] = cs;
    doc["replications"] = replications;
    doc["seed"] = seed;
    doc["mle_multi_start"] = mle_multi_start;
    return doc;
}

ExperimentConfig ExperimentConfig::from_json(const json& doc, const std::filesystem::path& base_dir) {
    if (!doc.is_object()) throw ConfigError("", "configuration must be a JSON object");
    ExperimentConfig c;
    c.version = doc.value("v", 1);
    if (c.version != 1) throw ConfigError("v", "unsupported version " + std::to_string(c.version));

    c.model = field(doc, "model", [](const json& m) {
        ModelSpec s;
        s.family = family_from_string(m.at("family").get<std::string>());
        const char* key = s.family == Family::GammaLog ? "shape" : "sigma";
        if (!m.contains(key)) throw ConfigError(std::string("model.") + key, "missing");
        s.nuisance = m.at(key).get<double>();
        (void)s.make();  // validates the parameter
        return s;
    });

    c.regressors = field(doc, "regressors", [](const json& r) {
        auto terms = r.get<std::vector<std::vector<int>>>();
        if (terms.empty()) throw std::runtime_error("needs at least one term");
        return terms;
    });
    try {
        (void)c.regressor_map();
    } catch (const Error& e) {
        throw ConfigError("regressors", e.what());
    }

    c.candidates = field(doc, "candidates", [&](const json& j) {
        if (!j.is_string()) return read_points(j);
        std::filesystem::path p = j.get<std::string>();
        if (p.is_relative()) p = base_dir / p;
        std::ifstream in(p);
        if (!in) throw ConfigError("candidates", "cannot open candidate file '" + p.string() + "'");
        json file;
        try {
            in >> file;
        } catch (const std::exception& e) {
            throw ConfigError("candidates", "candidate file '" + p.string() + "' is not valid JSON");
        }
        return read_points(file.is_object() && file.contains("candidates") ? file.at("candidates") : file);
    });
    try {
        const CandidateSet cs = c.candidate_set();
        if (cs.point(0).size() != c.regressor_map().input_dimension()) {
            throw ConfigError("candidates", "point dimension does not match regressors");
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError("candidates", e.what());
    }

    c.criterion = field(doc, "criterion", [](const json& j) { return criterion_from_string(j.get<std::string>()); });
    c.theta0 = field(doc, "theta0", read_theta);
    if (c.theta0.size() != static_cast<Eigen::Index>(c.regressors.size())) {
        throw ConfigError("theta0", "length " + std::to_string(c.theta0.size()) + " does not match " +
                                        std::to_string(c.regressors.size()) + " regressors");
    }
    if (doc.contains("method")) {
        c.method = field(doc, "method", [](const json& j) { return method_from_string(j.get<std::string>()); });
    }
    if (doc.contains("exact")) c.exact = field(doc, "exact", [](const json& j) { return j.get<bool>(); });
    if (doc.contains("mle_multi_start")) {
        c.mle_multi_start = field(doc, "mle_multi_start", [](const json& j) { return j.get<bool>(); });
    }

    if (doc.contains("schedule")) {
        c.schedule = field(doc, "schedule", [](const json& s) {
            Schedule out;
            out.m1 = s.value("m1", 4);
            out.run_size = s.value("run_size", 1);
            if (s.contains("n")) out.n = s.at("n").get<std::vector<int>>();
            if (out.m1 < 1) throw ConfigError("schedule.m1", "must be at least 1");
            if (out.run_size < 1) throw ConfigError("schedule.run_size", "must be at least 1");
            for (int n : out.n) {
                if (n < out.m1 || (n - out.m1) % out.run_size != 0) {
                    throw ConfigError("schedule.n", std::to_string(n) + " is not reachable as m1 + k * run_size");
                }
            }
            return out;
        });
    }

    if (doc.contains("truth")) {
        c.truth = field(doc, "truth", read_theta);
        if (c.truth->size() != c.theta0.size()) throw ConfigError("truth", "length does not match theta0");
    }
    if (doc.contains("methods")) {
        c.methods = field(doc, "methods", [](const json& j) {
            std::vector<Method> out;
            for (const auto& m : j) out.push_back(method_from_string(m.get<std::string>()));
            return out;
        });
    }
    if (doc.contains("criteria")) {
        c.criteria = field(doc, "criteria", [](const json& j) {
            std::vector<Criterion> out;
            for (const auto& m : j) out.push_back(criterion_from_string(m.get<std::string>()));
            return out;
        });
    }
    if (doc.contains("replications")) {
        c.replications = field(doc, "replications", [](const json& j) { return j.get<int>(); });
        if (c.replications < 1) throw ConfigError("replications", "must be at least 1");
    }
    if (doc.contains("seed")) c.seed = field(doc, "seed", [](const json& j) { return j.get<std::uint64_t>(); });
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open '" + path.string() + "'");
    json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        throw ConfigError("config", "'" + path.string() + "' is not valid JSON: " + e.what());
    }
    return from_json(doc, path.parent_path());
}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string ExperimentConfig::hash() const { return fnv1a_hex(to_json().dump()); }

namespace {

ExperimentConfig vertex_base() {
    ExperimentConfig c;
    c.regressors = {{0, 0}, {1, 0}, {0, 1}};
    c.candidates = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
    c.theta0 = Theta::Ones(3);
    c.truth = c.theta0;
    c.schedule.m1 = 4;
    c.schedule.run_size = 1;
    c.criteria = {{CriterionKind::D}, {CriterionKind::A}};
    // The reference efficiencies follow the local maximum reached from theta0; the
    // global NormalSqrt maximum lowers MOAD's D Rel-Eff to about one.
    c.mle_multi_start = false;
    return c;
}

}  // namespace

ExperimentConfig gamma_study_config() {
    ExperimentConfig c = vertex_base();
    c.model = {Family::GammaLog, 0.1};
    c.schedule.n = {12, 36, 100};
    c.methods = {Method::FLOD, Method::LOAD, Method::MOAD};
    return c;
}

ExperimentConfig normal_study_config() {
    ExperimentConfig c = vertex_base();
    c.model = {Family::NormalSqrt, 5.0};
    c.schedule.n = {25, 50, 100};
    c.methods = {Method::FLOD, Method::LOAD, Method::MOAD, Method::AOD};
    return c;
}

}  // namespace obsinfo
