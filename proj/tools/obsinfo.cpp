// obsinfo: solve designs, run the simulation studies, serve the session API.

#include <pthread.h>
#include <signal.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "obsinfo/http_api.hpp"
#include "obsinfo/serialize.hpp"
#include "obsinfo/simulation.hpp"

using namespace obsinfo;

namespace {

enum Exit { kOk = 0, kConfig = 2, kNumeric = 3, kIo = 4 };

struct Options {
    std::string config;
    std::string reproduce;
    std::optional<int> replications;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string format = "csv";
    int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::optional<int> n;
    std::string store = "sessions";
    std::string bind = "127.0.0.1:8080";
};

ExperimentConfig load_config(const Options& o) {
    if (!o.reproduce.empty()) {
        if (o.reproduce == "table2" || o.reproduce == "fig1") return gamma_study_config();
        if (o.reproduce == "table3" || o.reproduce == "fig2") return normal_study_config();
        throw ConfigError("--reproduce", "expected table2, table3, fig1 or fig2");
    }
    if (o.config.empty()) throw ConfigError("--config", "missing (or use --reproduce)");
    return ExperimentConfig::load(o.config);
}

void write_json(const json& j, const std::string& out) {
    if (out.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream f(out);
    f << j.dump(2) << '\n';
    if (!f) throw IoError("cannot write '" + out + "'");
}

int cmd_flod(const Options& o) {
    const ExperimentConfig cfg = load_config(o);
    const ResponseModel model = cfg.response_model();
    const RegressorMap map = cfg.regressor_map();
    const CandidateSet cands = cfg.candidate_set();
    const ContinuousSolution c = flod_continuous(cfg.criterion, model, cfg.theta0, map, cands);
    json j = {{"criterion", std::string(to_string(cfg.criterion.kind))},
              {"theta0", to_json(cfg.theta0)},
              {"continuous", to_json(c.design)},
              {"psi", c.diagnostics.psi},
              {"equivalence_gap", c.diagnostics.gap},
              {"iterations", c.diagnostics.iterations}};
    if (o.n) {
        const ExactSolution e = flod_exact(cfg.criterion, model, cfg.theta0, map, cands, *o.n);
        j["exact"] = {{"n", *o.n},
                      {"design", to_json(e.design)},
                      {"psi", e.diagnostics.psi},
                      {"enumerated", e.diagnostics.enumerated}};
    }
    write_json(j, o.out);
    return kOk;
}

void print_summary(const StudyResults& r) {
    std::printf("%-5s %5s %-2s %10s %10s\n", "method", "n", "c", "med_eff", "med_effmle");
    for (const auto& p : r.percentiles) {
        if (p.stat != "eff_theta") continue;
        const PercentileRow* mle = r.find_percentiles(p.method, p.n, p.criterion.kind, "eff_mle");
        std::printf("%-6s %5d %-2s %10.4f %10.4f\n", std::string(to_string(p.method)).c_str(), p.n,
                    std::string(to_string(p.criterion.kind)).c_str(), p.median(), mle ? mle->median() : 0.0);
    }
    std::printf("\n%-6s %5s %-2s %8s\n", "method", "n", "c", "rel_eff");
    for (const auto& e : r.releff) {
        std::printf("%-6s %5d %-2s %8.4f\n", std::string(to_string(e.method)).c_str(), e.n,
                    std::string(to_string(e.criterion.kind)).c_str(), e.releff);
    }
    if (r.efficiency_bound_violations > 0) std::printf("\nefficiency above one in %d replications\n", r.efficiency_bound_violations);
}

int cmd_simulate(const Options& o) {
    ExperimentConfig cfg = load_config(o);
    if (o.replications) {
        if (*o.replications < 2) throw ConfigError("--R", "must be at least 2");
        cfg.replications = *o.replications;
    }
    if (o.seed) cfg.seed = *o.seed;
    if (cfg.methods.empty()) throw ConfigError("methods", "a study needs at least one method");
    if (cfg.schedule.n.empty()) throw ConfigError("schedule.n", "a study needs at least one sample size");
    StudyConfig sc = StudyConfig::from(cfg);
    sc.threads = o.threads;
    const ExportFormat fmt = o.format == "json" ? ExportFormat::Json : ExportFormat::Csv;
    const StudyResults r = run_study(sc, cfg.hash());
    print_summary(r);
    if (!o.out.empty()) {
        for (const auto& f : export_results(r, o.out, fmt)) std::printf("wrote %s\n", f.string().c_str());
    }
    return kOk;
}

int cmd_serve(const Options& o) {
    const auto colon = o.bind.rfind(':');
    if (colon == std::string::npos) throw ConfigError("--bind", "expected host:port");
    int port = 0;
    try {
        port = std::stoi(o.bind.substr(colon + 1));
    } catch (const std::exception&) {
        throw ConfigError("--bind", "port must be an integer");
    }
    const std::string host = o.bind.substr(0, colon);

    // Handle SIGINT/SIGTERM on a dedicated thread so stop() runs outside a
    // signal handler.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    SessionStore store(o.store);
    HttpServer server(store, [](const std::string& line) { std::cerr << line << std::endl; });
    const int bound = server.bind(host, port);
    std::cerr << "serving " << store.list().size() << " sessions from " << store.root().string() << " on " << host
              << ':' << bound << std::endl;
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        server.stop();
    });
    std::exception_ptr failure;
    try {
        server.listen();
    } catch (...) {
        failure = std::current_exception();
    }
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    if (failure) std::rethrow_exception(failure);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sequential designs driven by observed Fisher information"};
    app.require_subcommand(1);
    Options o;

    auto* flod = app.add_subcommand("flod", "Solve the locally optimal design at theta0");
    flod->add_option("--config", o.config, "Experiment config (JSON)");
    flod->add_option("--n", o.n, "Also solve the exact design with n observations")->check(CLI::PositiveNumber);
    flod->add_option("--out", o.out, "Write JSON here instead of stdout");
    flod->add_option("--reproduce", o.reproduce, "Use a built-in setup: table2|fig1 (gamma), table3|fig2 (normal)");

    auto* sim = app.add_subcommand("simulate", "Run a simulation study");
    sim->add_option("--config", o.config, "Study config (JSON)");
    sim->add_option("--reproduce", o.reproduce, "Built-in study: table2|fig1 (gamma), table3|fig2 (normal)");
    sim->add_option("--R", o.replications, "Replications (overrides the config)");
    sim->add_option("--seed", o.seed, "Master seed (overrides the config)");
    sim->add_option("--out", o.out, "Output directory for percentiles/Rel-Eff files");
    sim->add_option("--format", o.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sim->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);

    auto* serve = app.add_subcommand("serve", "Serve the session API");
    serve->add_option("--store", o.store, "Directory holding the session logs");
    serve->add_option("--bind", o.bind, "host:port");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*flod) return cmd_flod(o);
        if (*sim) return cmd_simulate(o);
        return cmd_serve(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kIo;
    } catch (const Error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumeric;
    }
}
