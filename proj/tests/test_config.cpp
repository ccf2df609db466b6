#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "obsinfo/config.hpp"
#include "obsinfo/errors.hpp"

using namespace obsinfo;

namespace {

json base() {
    return json::parse(R"({
        "v": 1,
        "model": {"family": "gamma_log", "shape": 0.1},
        "regressors": [[0,0],[1,0],[0,1]],
        "candidates": [[1,1],[1,-1],[-1,1],[-1,-1]],
        "criterion": "A", "theta0": [1,1,1], "method": "load",
        "schedule": {"m1": 4, "run_size": 1, "n": [12, 36]}
    })");
}

std::string field_of(const json& doc) {
    try {
        ExperimentConfig::from_json(doc);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "<accepted>";
}

}  // namespace

TEST(Config, ParsesAndRoundTrips) {
    const ExperimentConfig c = ExperimentConfig::from_json(base());
    EXPECT_EQ(c.model.family, Family::GammaLog);
    EXPECT_EQ(c.criterion.kind, CriterionKind::A);
    EXPECT_EQ(c.method, Method::LOAD);
    EXPECT_EQ(c.candidates.size(), 4u);
    EXPECT_EQ(c.schedule.runs().size(), 33u);
    const ExperimentConfig back = ExperimentConfig::from_json(c.to_json());
    EXPECT_EQ(back.hash(), c.hash());
    EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(Config, HashTracksContent) {
    const ExperimentConfig a = ExperimentConfig::from_json(base());
    json changed = base();
    changed["theta0"] = {1, 1, 0.5};
    EXPECT_NE(ExperimentConfig::from_json(changed).hash(), a.hash());
    EXPECT_EQ(a.hash().size(), 16u);
    EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
}

TEST(Config, ErrorsNameTheField) {
    json d = base();
    d.erase("theta0");
    EXPECT_EQ(field_of(d), "theta0");
    d = base();
    d["theta0"] = {1, 1};
    EXPECT_EQ(field_of(d), "theta0");
    d = base();
    d["model"].erase("shape");
    EXPECT_EQ(field_of(d), "model.shape");
    d = base();
    d["model"]["shape"] = -1;
    EXPECT_EQ(field_of(d), "model");
    d = base();
    d["candidates"] = {{1, 1, 1}};
    EXPECT_EQ(field_of(d), "candidates");
    d = base();
    d["schedule"]["n"] = {13, 2};
    EXPECT_EQ(field_of(d), "schedule.n");
    d = base();
    d["schedule"]["m1"] = 0;
    EXPECT_EQ(field_of(d), "schedule.m1");
    d = base();
    d["v"] = 2;
    EXPECT_EQ(field_of(d), "v");
    d = base();
    d["criterion"] = "E";
    EXPECT_EQ(field_of(d), "criterion");
    d = base();
    d["method"] = "nope";
    EXPECT_EQ(field_of(d), "method");
    EXPECT_EQ(field_of(json::array()), "");
}

TEST(Config, CandidateFileResolvesRelativeToConfig) {
    const auto dir = std::filesystem::temp_directory_path() / "obsinfo_config_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream(dir / "pts.json") << "[[1,1],[1,-1],[-1,1],[-1,-1],[0,0]]";
        json d = base();
        d["candidates"] = "pts.json";
        std::ofstream(dir / "cfg.json") << d.dump();
    }
    const ExperimentConfig c = ExperimentConfig::load(dir / "cfg.json");
    EXPECT_EQ(c.candidates.size(), 5u);

    json missing = base();
    missing["candidates"] = "nowhere.json";
    try {
        ExperimentConfig::from_json(missing, dir);
        FAIL() << "accepted a missing candidate file";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "candidates");
    }
    EXPECT_THROW(ExperimentConfig::load(dir / "absent.json"), ConfigError);
    std::filesystem::remove_all(dir);
}

TEST(Config, StudyPresets) {
    const ExperimentConfig g = gamma_study_config();
    EXPECT_EQ(g.model.family, Family::GammaLog);
    EXPECT_DOUBLE_EQ(g.model.nuisance, 0.1);
    EXPECT_EQ(g.schedule.n, (std::vector<int>{12, 36, 100}));
    EXPECT_EQ(g.methods.size(), 3u);
    const ExperimentConfig n = normal_study_config();
    EXPECT_EQ(n.model.family, Family::NormalSqrt);
    EXPECT_DOUBLE_EQ(n.model.nuisance, 5.0);
    EXPECT_EQ(n.schedule.n, (std::vector<int>{25, 50, 100}));
    EXPECT_EQ(n.methods.size(), 4u);
    for (const auto& c : {g, n}) {
        EXPECT_EQ(c.schedule.m1, 4);
        EXPECT_EQ(c.schedule.run_size, 1);
        EXPECT_EQ(c.theta0, Theta::Ones(3));
        EXPECT_EQ(ExperimentConfig::from_json(c.to_json()).hash(), c.hash());
    }
}
