#include "obsinfo/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "obsinfo/errors.hpp"
#include "obsinfo/information.hpp"
#include "obsinfo/mle.hpp"

namespace obsinfo {

StudyConfig StudyConfig::from(const ExperimentConfig& c) {
    StudyConfig s;
    s.model = c.response_model();
    s.map = c.regressor_map();
    s.candidates = c.candidate_set();
    s.theta0 = c.theta0;
    s.truth = c.truth.value_or(c.theta0);
    s.methods = c.methods;
    s.criteria = c.criteria.empty() ? std::vector<Criterion>{c.criterion} : c.criteria;
    s.schedule = c.schedule;
    s.replications = c.replications;
    s.seed = c.seed;
    s.exact = c.exact;
    s.mle.multi_start = c.mle_multi_start;
    return s;
}

const PercentileRow* StudyResults::find_percentiles(Method m, int n, CriterionKind c, const std::string& stat) const {
    for (const auto& r : percentiles) {
        if (r.method == m && r.n == n && r.criterion.kind == c && r.stat == stat) return &r;
    }
    return nullptr;
}

const RelEffRow* StudyResults::find_releff(Method m, int n, CriterionKind c) const {
    for (const auto& r : releff) {
        if (r.method == m && r.n == n && r.criterion.kind == c) return &r;
    }
    return nullptr;
}

double quantile(std::vector<double> values, double level) {
    if (values.empty()) throw DomainError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * level;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

// Runs body(r) for r in [0, count) on `threads` workers; rethrows the first
// exception after all workers stop.
template <typename F>
void parallel_for(int count, int threads, F&& body) {
    threads = std::max(1, std::min(threads, count));
    if (threads == 1) {
        for (int r = 0; r < count; ++r) body(r);
        return;
    }
    std::atomic<int> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (int r = next++; r < count && !stop; r = next++) {
                try {
                    body(r);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    stop = true;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

// Per-criterion pieces shared by every replication.
struct CriterionSetup {
    Criterion criterion;
    ContinuousDesign flod_truth;
    std::map<int, std::vector<int>> flod_counts;  // exact FLOD at the truth per n (on the candidates)
    std::vector<PolicyState> policies;            // per non-FLOD method, empty history
    std::vector<Method> policy_methods;
};

Outcome evaluate(const StudyConfig& cfg, const CriterionSetup& setup, const DataSet& data) {
    Outcome o;
    try {
        const EfficiencyReport e = observed_efficiency(setup.criterion, cfg.model, cfg.truth, cfg.map, setup.flod_truth, data);
        o.eff_theta = e.value;
        o.eff_degenerate = e.degenerate;
    } catch (const DegenerateError&) {
        o.eff_degenerate = true;
    }
    try {
        const MleResult fit = fit_mle(cfg.model, cfg.map, data, cfg.theta0, cfg.mle);
        if (!fit.converged) return o;
        o.theta_hat = fit.theta_hat;
        const ContinuousDesign xi = cfg.model.expected_info_depends_on_eta()
                                        ? flod_continuous(setup.criterion, cfg.model, fit.theta_hat, cfg.map, cfg.candidates).design
                                        : setup.flod_truth;
        const EfficiencyReport e = observed_efficiency(setup.criterion, cfg.model, fit.theta_hat, cfg.map, xi, data);
        if (!e.degenerate) o.eff_mle = e.value;
    } catch (const SolverError&) {
    } catch (const DegenerateError&) {
    }
    return o;
}

Matrix covariance(const std::vector<Theta>& xs) {
    const Eigen::Index p = xs.front().size();
    Vector mean = Vector::Zero(p);
    for (const auto& x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    Matrix c = Matrix::Zero(p, p);
    for (const auto& x : xs) c.noalias() += (x - mean) * (x - mean).transpose();
    return c / (static_cast<double>(xs.size()) - 1.0);
}

}  // namespace

void aggregate(StudyResults& res) {
    res.percentiles.clear();
    res.releff.clear();
    std::map<std::tuple<int, int>, const Cell*> flod_cells;
    for (const Cell& c : res.cells) {
        if (c.method == Method::FLOD) flod_cells[{c.n, static_cast<int>(c.criterion.kind)}] = &c;
    }
    for (const Cell& c : res.cells) {
        std::vector<double> eff;
        std::vector<double> eff_mle;
        for (const auto& o : c.outcomes) {
            eff.push_back(o.eff_theta);
            if (o.eff_mle) eff_mle.push_back(*o.eff_mle);
        }
        for (auto& [stat, values] : {std::pair<std::string, std::vector<double>*>{"eff_theta", &eff},
                                     std::pair<std::string, std::vector<double>*>{"eff_mle", &eff_mle}}) {
            if (values->empty()) continue;
            PercentileRow row{c.method, c.n, c.criterion, stat, {}, values->size()};
            for (std::size_t k = 0; k < kPercentileLevels.size(); ++k) row.values[k] = quantile(*values, kPercentileLevels[k]);
            res.percentiles.push_back(row);
        }
        if (c.method == Method::FLOD) continue;
        const auto f = flod_cells.find({c.n, static_cast<int>(c.criterion.kind)});
        if (f == flod_cells.end()) continue;
        std::vector<Theta> ref;
        std::vector<Theta> alt;
        for (const auto& o : f->second->outcomes) {
            if (o.theta_hat) ref.push_back(*o.theta_hat);
        }
        for (const auto& o : c.outcomes) {
            if (o.theta_hat) alt.push_back(*o.theta_hat);
        }
        if (ref.size() < 2 || alt.size() < 2) continue;
        res.releff.push_back({c.method, c.n, c.criterion, relative_efficiency(c.criterion, covariance(ref), covariance(alt))});
    }
}

StudyResults run_study(const StudyConfig& cfg, const std::string& config_hash) {
    if (cfg.replications < 1) throw DomainError("replications must be at least 1");
    if (cfg.schedule.n.empty()) throw DomainError("study needs at least one sample size");
    if (cfg.methods.empty() || cfg.criteria.empty()) throw DomainError("study needs methods and criteria");
    std::vector<int> ns = cfg.schedule.n;
    std::sort(ns.begin(), ns.end());
    ns.erase(std::unique(ns.begin(), ns.end()), ns.end());
    for (int n : ns) {
        if (n < cfg.schedule.m1 || (n - cfg.schedule.m1) % cfg.schedule.run_size != 0) {
            throw DomainError("sample size " + std::to_string(n) + " is not reachable by the schedule");
        }
    }
    const std::vector<int> runs = cfg.schedule.runs();
    const bool has_flod = std::find(cfg.methods.begin(), cfg.methods.end(), Method::FLOD) != cfg.methods.end();

    std::vector<CriterionSetup> setups;
    for (Criterion c : cfg.criteria) {
        CriterionSetup s{c, flod_continuous(c, cfg.model, cfg.truth, cfg.map, cfg.candidates).design, {}, {}, {}};
        if (has_flod) {
            for (int n : ns) s.flod_counts[n] = flod_exact(c, cfg.model, cfg.truth, cfg.map, cfg.candidates, n).design.counts();
        }
        for (Method m : cfg.methods) {
            if (m == Method::FLOD) continue;
            s.policies.emplace_back(m, c, cfg.model, cfg.map, cfg.candidates, cfg.theta0, cfg.exact, cfg.mle);
            s.policy_methods.push_back(m);
        }
        setups.push_back(std::move(s));
    }

    // Cell layout: criterion-major, then method in config order, then n.
    StudyResults res;
    res.config_hash = config_hash;
    res.seed = cfg.seed;
    for (Criterion c : cfg.criteria) {
        for (Method m : cfg.methods) {
            for (int n : ns) {
                Cell cell{m, n, c, std::vector<Outcome>(static_cast<std::size_t>(cfg.replications)), 0};
                res.cells.push_back(std::move(cell));
            }
        }
    }
    auto cell_index = [&](std::size_t ci, std::size_t mi, std::size_t ni) {
        return (ci * cfg.methods.size() + mi) * ns.size() + ni;
    };
    auto method_index = [&](Method m) {
        return static_cast<std::size_t>(std::find(cfg.methods.begin(), cfg.methods.end(), m) - cfg.methods.begin());
    };

    parallel_for(cfg.replications, cfg.threads, [&](int r) {
        const auto rep = static_cast<std::uint64_t>(r);
        const auto slot = static_cast<std::size_t>(r);
        ResponseSource source(cfg.model, cfg.map, cfg.candidates, cfg.truth, cfg.seed, rep);
        for (std::size_t ci = 0; ci < setups.size(); ++ci) {
            const CriterionSetup& s = setups[ci];
            if (has_flod) {
                const std::size_t mi = method_index(Method::FLOD);
                for (std::size_t ni = 0; ni < ns.size(); ++ni) {
                    source.reset();
                    const auto& counts = s.flod_counts.at(ns[ni]);
                    std::vector<DataSet::Allocation> run;
                    for (std::size_t k = 0; k < counts.size(); ++k) {
                        if (counts[k] == 0) continue;
                        DataSet::Allocation a{cfg.candidates.point(k), {}};
                        for (int u = 0; u < counts[k]; ++u) a.responses.push_back(source.draw(k));
                        run.push_back(std::move(a));
                    }
                    DataSet data;
                    data.append_run(run, cfg.model);
                    res.cells[cell_index(ci, mi, ni)].outcomes[slot] = evaluate(cfg, s, data);
                }
            }
            for (std::size_t pi = 0; pi < s.policies.size(); ++pi) {
                const std::size_t mi = method_index(s.policy_methods[pi]);
                PolicyState state = s.policies[pi];
                source.reset();
                std::size_t ni = 0;
                for (int m : runs) {
                    step(state, m, source);
                    while (ni < ns.size() && static_cast<int>(state.history().total()) == ns[ni]) {
                        res.cells[cell_index(ci, mi, ni)].outcomes[slot] = evaluate(cfg, s, state.history());
                        ++ni;
                    }
                    if (ni == ns.size()) break;
                }
            }
        }
    });

    for (Cell& c : res.cells) {
        for (const auto& o : c.outcomes) {
            if (!o.theta_hat) ++c.failures;
            if (cfg.model.family() == Family::GammaLog && o.eff_theta > 1.0 + 1e-12) ++res.efficiency_bound_violations;
        }
        if (c.failures > cfg.max_failure_fraction * cfg.replications) {
            throw SolverError("MLE failed in " + std::to_string(c.failures) + " of " +
                              std::to_string(cfg.replications) + " replications for " +
                              std::string(to_string(c.method)) + " n=" + std::to_string(c.n) + " criterion " +
                              std::string(to_string(c.criterion.kind)));
        }
    }
    aggregate(res);
    return res;
}

double loglog_slope(const std::vector<int>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw DimensionError("slope needs matching samples of size >= 2");
    double mx = 0.0;
    double my = 0.0;
    const auto k = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(static_cast<double>(x[i])) / k;
        my += std::log(y[i]) / k;
    }
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(static_cast<double>(x[i])) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

std::vector<RateResult> rate_study(const RateStudyConfig& cfg) {
    if (cfg.n_grid.size() < 4) throw DomainError("rate study needs at least 4 sample sizes");
    std::vector<int> ns = cfg.n_grid;
    std::sort(ns.begin(), ns.end());
    Schedule sched{cfg.m1, cfg.run_size, ns};
    const std::vector<int> runs = sched.runs();
    const std::vector<Method> methods{Method::FLOD, Method::LOAD};
    std::vector<PolicyState> templates;
    for (Method m : methods) templates.emplace_back(m, cfg.criterion, cfg.model, cfg.map, cfg.candidates, cfg.truth);
    const ContinuousDesign& w_star = templates.front().flod();

    // dev[method][n][rep], ineff likewise
    const auto R = static_cast<std::size_t>(cfg.replications);
    std::vector<std::vector<std::vector<double>>> dev(methods.size(), std::vector<std::vector<double>>(ns.size(), std::vector<double>(R)));
    auto ineff = dev;

    parallel_for(cfg.replications, cfg.threads, [&](int r) {
        ResponseSource source(cfg.model, cfg.map, cfg.candidates, cfg.truth, cfg.seed, static_cast<std::uint64_t>(r));
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            PolicyState state = templates[mi];
            source.reset();
            std::size_t ni = 0;
            for (int m : runs) {
                step(state, m, source);
                if (ni < ns.size() && static_cast<int>(state.history().total()) == ns[ni]) {
                    const DataSet& data = state.history();
                    double worst = 0.0;
                    const OmegaWeights ow = omega_weights(cfg.model, cfg.truth, cfg.map, data);
                    for (std::size_t i = 0; i < w_star.size(); ++i) {
                        const auto g = data.find(w_star.point(i));
                        const double omega = g ? ow.omega[*g] : 0.0;
                        worst = std::max(worst, std::abs(omega - w_star.weight(i)));
                    }
                    dev[mi][ni][static_cast<std::size_t>(r)] = worst;
                    const EfficiencyReport e = observed_efficiency(cfg.criterion, cfg.model, cfg.truth, cfg.map, w_star, data);
                    ineff[mi][ni][static_cast<std::size_t>(r)] = 1.0 - e.value;
                    ++ni;
                }
            }
        }
    });

    std::vector<RateResult> out;
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        RateResult rr;
        rr.method = methods[mi];
        rr.n = ns;
        for (std::size_t ni = 0; ni < ns.size(); ++ni) {
            rr.median_deviation.push_back(quantile(dev[mi][ni], 0.5));
            rr.median_inefficiency.push_back(quantile(ineff[mi][ni], 0.5));
        }
        rr.slope = loglog_slope(ns, rr.median_deviation);
        rr.inefficiency_slope = loglog_slope(ns, rr.median_inefficiency);
        out.push_back(std::move(rr));
    }
    return out;
}

namespace {

constexpr const char* kPercentileKeys[] = {"p05", "p10", "p25", "p50", "p75", "p95"};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string header(const StudyResults& r) {
    return "# config_hash=" + r.config_hash + " seed=" + std::to_string(r.seed) + "\n";
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    out.flush();
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(item);
    return out;
}

void parse_header(const std::string& line, StudyResults& r) {
    for (const auto& tok : split(line.substr(1), ' ')) {
        if (tok.rfind("config_hash=", 0) == 0) r.config_hash = tok.substr(12);
        if (tok.rfind("seed=", 0) == 0) r.seed = std::stoull(tok.substr(5));
    }
}

}  // namespace

std::vector<std::filesystem::path> export_results(const StudyResults& results, const std::filesystem::path& out_dir,
                                                  ExportFormat format) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
    if (format == ExportFormat::Json) {
        json doc;
        doc["config_hash"] = results.config_hash;
        doc["seed"] = results.seed;
        doc["efficiency_bound_violations"] = results.efficiency_bound_violations;
        json rows = json::array();
        for (const auto& r : results.percentiles) {
            json row = {{"method", std::string(to_string(r.method))},
                        {"n", r.n},
                        {"criterion", std::string(to_string(r.criterion.kind))},
                        {"stat", r.stat},
                        {"count", r.count}};
            for (std::size_t k = 0; k < r.values.size(); ++k) row[kPercentileKeys[k]] = r.values[k];
            rows.push_back(row);
        }
        doc["percentiles"] = rows;
        json rel = json::array();
        for (const auto& r : results.releff) {
            rel.push_back({{"method", std::string(to_string(r.method))},
                           {"n", r.n},
                           {"criterion", std::string(to_string(r.criterion.kind))},
                           {"releff", r.releff}});
        }
        doc["releff"] = rel;
        const auto path = out_dir / "results.json";
        write_file(path, doc.dump(2) + "\n");
        return {path};
    }
    std::string pct = header(results) + "method,n,criterion,stat,p05,p10,p25,p50,p75,p95\n";
    for (const auto& r : results.percentiles) {
        pct += std::string(to_string(r.method)) + "," + std::to_string(r.n) + "," +
               std::string(to_string(r.criterion.kind)) + "," + r.stat;
        for (double v : r.values) pct += "," + fmt(v);
        pct += "\n";
    }
    std::string rel = header(results) + "method,n,criterion,releff\n";
    for (const auto& r : results.releff) {
        rel += std::string(to_string(r.method)) + "," + std::to_string(r.n) + "," +
               std::string(to_string(r.criterion.kind)) + "," + fmt(r.releff) + "\n";
    }
    const auto p1 = out_dir / "percentiles.csv";
    const auto p2 = out_dir / "releff.csv";
    write_file(p1, pct);
    write_file(p2, rel);
    return {p1, p2};
}

StudyResults read_results(const std::filesystem::path& out_dir, ExportFormat format) {
    StudyResults r;
    if (format == ExportFormat::Json) {
        const json doc = json::parse(read_file(out_dir / "results.json"));
        r.config_hash = doc.at("config_hash").get<std::string>();
        r.seed = doc.at("seed").get<std::uint64_t>();
        r.efficiency_bound_violations = doc.value("efficiency_bound_violations", 0);
        for (const auto& row : doc.at("percentiles")) {
            PercentileRow p{method_from_string(row.at("method").get<std::string>()), row.at("n").get<int>(),
                            criterion_from_string(row.at("criterion").get<std::string>()),
                            row.at("stat").get<std::string>(), {}, row.at("count").get<std::size_t>()};
            for (std::size_t k = 0; k < 6; ++k) p.values[k] = row.at(kPercentileKeys[k]).get<double>();
            r.percentiles.push_back(p);
        }
        for (const auto& row : doc.at("releff")) {
            r.releff.push_back({method_from_string(row.at("method").get<std::string>()), row.at("n").get<int>(),
                                criterion_from_string(row.at("criterion").get<std::string>()),
                                row.at("releff").get<double>()});
        }
        return r;
    }
    auto lines = [](const std::string& text) { return split(text, '\n'); };
    for (const auto& line : lines(read_file(out_dir / "percentiles.csv"))) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            parse_header(line, r);
            continue;
        }
        const auto f = split(line, ',');
        if (f.size() != 10 || f[0] == "method") continue;
        PercentileRow p{method_from_string(f[0]), std::stoi(f[1]), criterion_from_string(f[2]), f[3], {}, 0};
        for (std::size_t k = 0; k < 6; ++k) p.values[k] = std::stod(f[4 + k]);
        r.percentiles.push_back(p);
    }
    for (const auto& line : lines(read_file(out_dir / "releff.csv"))) {
        if (line.empty() || line[0] == '#') continue;
        const auto f = split(line, ',');
        if (f.size() != 4 || f[0] == "method") continue;
        r.releff.push_back({method_from_string(f[0]), std::stoi(f[1]), criterion_from_string(f[2]), std::stod(f[3])});
    }
    return r;
}

}  // namespace obsinfo
