#include "fcomb/cli.hpp"

#include "fcomb/backtest.hpp"
#include "fcomb/bayes.hpp"
#include "fcomb/diagnostics.hpp"
#include "fcomb/discount.hpp"
#include "fcomb/errors.hpp"
#include "fcomb/nlp.hpp"
#include "fcomb/panel.hpp"
#include "fcomb/qp.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fcomb::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Flag values shared by backtest and fit.
struct Options {
    std::string panel;
    std::string out = "out";
    std::size_t L = 12;
    std::vector<double> lambda_grid{0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<std::string> estimators{"qp", "nlp-win", "nlp-hit", "bayes", "naive", "seasonal-naive"};
    double eligibility = 0.9;
    double epsilon = 0.005;
    std::string surrogate = "cauchy";
    int nlp_max_evaluations = 0;
    int nlp_starts = 1;
    int chains = 2;
    int burnin = 10000;
    int keep = 20000;
    std::uint64_t seed = 0;
    unsigned jobs = 0;

    // synth
    std::size_t tickers = 23;
    std::size_t quarters = 36;
    std::size_t analysts = 10;
    double missing_rate = 0.05;
    double growth = 0.02;
    double phi = 0.5;
    double seasonal = 0.0;
    double bias_spread = 0.0;

    // fit
    std::string ticker;
    std::string anchor;
    std::string estimator = "qp";
    double lambda = 0.0;
};

std::string now_iso() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

ordered_json file_digest(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    std::uint64_t bytes = 0;
    char c = 0;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
        ++bytes;
    }
    return {{"path", p.string()}, {"bytes", bytes}, {"fnv1a64", hex64(h)}};
}

SurrogateFamily parse_family(const std::string& s) {
    if (s == "cauchy") return SurrogateFamily::cauchy;
    if (s == "logistic") return SurrogateFamily::logistic;
    throw ConfigError("unknown surrogate family '" + s + "'");
}

BayesConfig bayes_config(const Options& o) {
    BayesConfig b;
    b.chains = o.chains;
    b.burnin = o.burnin;
    b.keep = o.keep;
    b.seed = o.seed;
    return b;
}

BacktestConfig backtest_config(const Options& o) {
    BacktestConfig c;
    c.L = o.L;
    c.lambda_grid = o.lambda_grid;
    c.eligibility = o.eligibility;
    c.estimators.clear();
    for (const auto& e : o.estimators) c.estimators.push_back(parse_estimator(e));
    c.surrogate = parse_family(o.surrogate);
    c.epsilon = o.epsilon;
    c.nlp_max_evaluations = o.nlp_max_evaluations;
    c.nlp_starts = o.nlp_starts;
    c.bayes = bayes_config(o);
    c.seed = o.seed;
    c.jobs = o.jobs;
    return c;
}

ordered_json bayes_json(const BayesConfig& b) {
    return {{"alpha", b.alpha.empty() ? ordered_json("1 per analyst") : ordered_json(b.alpha)},
            {"omega0_var", b.omega0_var},
            {"lambda_bounds", {b.lambda_lo, b.lambda_hi}},
            {"sigma2_shape_rate", {b.sigma2_shape, b.sigma2_rate}},
            {"phi_bounds", {b.phi_lo, b.phi_hi}},
            {"gamma_var", b.gamma_var},
            {"ar_var_shape_rate", {b.ar_var_shape, b.ar_var_rate}},
            {"chains", b.chains},
            {"burnin", b.burnin},
            {"keep", b.keep},
            {"target_acceptance", b.target_acceptance}};
}

ordered_json backtest_json(const BacktestConfig& c) {
    std::vector<std::string> est;
    for (Estimator e : c.estimators) est.push_back(to_string(e));
    return {{"L", c.L},
            {"H", 1},
            {"lambda_grid", c.lambda_grid},
            {"eligibility", c.eligibility},
            {"estimators", est},
            {"surrogate", c.surrogate == SurrogateFamily::cauchy ? "cauchy" : "logistic"},
            {"epsilon", c.epsilon},
            {"nlp_max_evaluations", c.nlp_max_evaluations},
            {"nlp_starts", c.nlp_starts},
            {"bayes", bayes_json(c.bayes)}};
}

void write_manifest(const fs::path& dir, const std::string& command, ordered_json config,
                    const std::vector<fs::path>& inputs, std::uint64_t seed,
                    const std::string& started) {
    ordered_json m;
    m["tool"] = "fcomb";
    m["version"] = FCOMB_VERSION;
    m["command"] = command;
    m["seed"] = seed;
    m["config"] = std::move(config);
    ordered_json in = ordered_json::array();
    for (const auto& p : inputs) in.push_back(file_digest(p));
    m["inputs"] = std::move(in);
    m["started"] = started;
    m["finished"] = now_iso();
    std::ofstream os(dir / "manifest.json", std::ios::binary);
    if (!os) throw Error("cannot write manifest under " + dir.string());
    os << m.dump(2) << '\n';
}

std::vector<fs::path> source_files(const PanelSource& s) {
    std::vector<fs::path> v{s.forecasts};
    if (!s.actuals.empty()) v.push_back(s.actuals);
    return v;
}

std::vector<ForecastPanel> load_log_panels(const PanelSource& source) {
    std::vector<ForecastPanel> out;
    for (const auto& raw : load_panels(source)) out.push_back(to_log(raw));
    if (out.empty()) throw SchemaError("no panels found in " + source.forecasts.string());
    return out;
}

int cmd_synth(const Options& o, std::ostream& out) {
    const std::string started = now_iso();
    if (o.tickers == 0) throw ConfigError("--tickers must be positive");
    std::vector<RawPanel> panels;
    for (std::size_t i = 0; i < o.tickers; ++i) {
        SynthConfig sc;
        char name[16];
        std::snprintf(name, sizeof name, "T%02zu", i + 1);
        sc.ticker = name;
        sc.quarters = o.quarters;
        sc.analysts = o.analysts;
        sc.growth = o.growth;
        sc.phi = o.phi;
        sc.seasonal_amplitude = o.seasonal;
        sc.missing_rate = o.missing_rate;
        sc.bias_min = -o.bias_spread;
        sc.bias_max = o.bias_spread;
        panels.push_back(synthesize_panel(sc, fold_seed(o.seed, sc.ticker, 0)));
    }
    write_panels(o.out, panels);
    ordered_json cfg{{"tickers", o.tickers},       {"quarters", o.quarters},
                     {"analysts", o.analysts},     {"missing_rate", o.missing_rate},
                     {"growth", o.growth},         {"phi", o.phi},
                     {"seasonal", o.seasonal},     {"bias_spread", o.bias_spread}};
    write_manifest(o.out, "synth", cfg, {}, o.seed, started);
    out << "wrote " << panels.size() << " panels of " << o.quarters << " quarters to " << o.out
        << '\n';
    return kExitOk;
}

int cmd_backtest(const Options& o, std::ostream& out) {
    const std::string started = now_iso();
    const BacktestConfig cfg = backtest_config(o);
    cfg.validate();
    const PanelSource source = PanelSource::resolve(o.panel);
    const auto panels = load_log_panels(source);
    const BacktestReport report = run_backtest(panels, cfg);
    fs::create_directories(o.out);
    const fs::path dir(o.out);
    write_folds_csv((dir / "folds.csv").string(), report);
    write_fold_issues_csv((dir / "fold_issues.csv").string(), report);
    write_summary_csv((dir / "summary.csv").string(), report);
    ordered_json j = backtest_json(cfg);
    j["jobs"] = o.jobs;
    write_manifest(dir, "backtest", j, source_files(source), o.seed, started);
    print_summary_table(out, report);
    return kExitOk;
}

void write_weights(const fs::path& path, const ForecastPanel& panel, const WindowView& w,
                   const WeightSolution& sol, const std::string& intercept_scale) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << std::setprecision(17) << "parameter,value,scale\n";
    os << "omega0," << sol.omega0 << ',' << intercept_scale << '\n';
    for (std::size_t k = 0; k < w.analysts.size(); ++k) {
        os << "omega[" << panel.analyst_ids[w.analysts[k]] << "],"
           << sol.omega(static_cast<Eigen::Index>(k)) << ",simplex\n";
    }
}

void write_lambda_histogram(const fs::path& path, const PosteriorDraws& d, const BayesConfig& b,
                            int bins = 20) {
    std::vector<long> counts(static_cast<std::size_t>(bins), 0);
    const double width = (b.lambda_hi - b.lambda_lo) / bins;
    for (Eigen::Index s = 0; s < d.lambda.size(); ++s) {
        auto k = static_cast<int>((d.lambda(s) - b.lambda_lo) / width);
        k = std::clamp(k, 0, bins - 1);
        ++counts[static_cast<std::size_t>(k)];
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << "bin_lo,bin_hi,count\n" << std::setprecision(6);
    for (int k = 0; k < bins; ++k) {
        os << b.lambda_lo + k * width << ',' << b.lambda_lo + (k + 1) * width << ','
           << counts[static_cast<std::size_t>(k)] << '\n';
    }
}

void write_diagnostics(const fs::path& path, const DiagnosticReport& rep) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << std::setprecision(10) << "parameter,mean,sd,rhat,ess,flagged\n";
    for (const auto& p : rep.parameters) {
        os << p.name << ',' << p.mean << ',' << p.sd << ',';
        if (std::isnan(p.rhat)) {
            os << "NA";
        } else {
            os << p.rhat;
        }
        os << ',' << p.ess << ',' << (p.flagged ? 1 : 0) << '\n';
    }
}

int cmd_fit(const Options& o, std::ostream& out) {
    const std::string started = now_iso();
    const Estimator est = parse_estimator(o.estimator);
    if (est == Estimator::naive || est == Estimator::seasonal_naive) {
        throw ConfigError("fit needs a model estimator (qp, nlp-win, nlp-hit or bayes)");
    }
    BacktestConfig cfg = backtest_config(o);
    cfg.estimators = {est};
    cfg.lambda_grid = {o.lambda};
    cfg.validate();
    const PanelSource source = PanelSource::resolve(o.panel);
    const ForecastPanel panel = to_log(load_panel(source, {}, o.ticker));
    if (panel.num_quarters() < o.L + 1) throw ContractError("panel is shorter than L + 1");

    std::size_t anchor = panel.num_quarters() - 2;
    if (!o.anchor.empty()) {
        const Quarter q = Quarter::parse(o.anchor);
        const auto it = std::find(panel.quarters.begin(), panel.quarters.end(), q);
        if (it == panel.quarters.end()) throw ContractError("anchor quarter " + o.anchor + " not in panel");
        anchor = static_cast<std::size_t>(it - panel.quarters.begin());
    }
    const auto analysts = eligible_analysts(panel, anchor, cfg);
    if (analysts.empty()) throw ContractError("no eligible analysts at anchor " + panel.quarters[anchor].str());
    WindowView w = make_window(panel, anchor, o.L, analysts);
    fs::create_directories(o.out);
    const fs::path dir(o.out);

    out << std::setprecision(6) << std::fixed;
    out << "ticker " << panel.ticker << ", training " << panel.quarters[w.start].str() << ".."
        << panel.quarters[w.end].str() << ", target " << panel.quarters[w.target].str() << ", "
        << analysts.size() << " analysts\n";

    ordered_json cfg_json = backtest_json(cfg);
    cfg_json["ticker"] = panel.ticker;
    cfg_json["anchor"] = panel.quarters[anchor].str();
    if (est == Estimator::bayes) {
        BayesConfig b = cfg.bayes;
        const PosteriorDraws draws = sample_posterior(w, b);
        write_draws_csv((dir / "draws.csv").string(), draws);
        const DiagnosticReport rep = diagnose(draws);
        write_diagnostics(dir / "diagnostics.csv", rep);
        write_lambda_histogram(dir / "lambda_hist.csv", draws, b);
        const PredictiveSummary ps = summarize_predictive(draws.predictive);
        out << "posterior means:\n";
        for (const auto& p : rep.parameters) {
            out << "  " << std::left << std::setw(14) << p.name << std::right << std::setw(14)
                << p.mean << "  sd " << p.sd << (p.flagged ? "  [check convergence]" : "") << '\n';
        }
        out << "predictive mean " << ps.mean << ", 95% interval [" << ps.lower << ", " << ps.upper
            << "]\n";
    } else {
        w.X = impute_row_mean(w.X);
        const DiscountSchedule sched = make_schedule(o.lambda, o.L);
        WeightSolution sol;
        std::string scale = "log";
        if (est == Estimator::qp) {
            sol = solve_qp(build_qp(w, sched));
        } else if (est == Estimator::nlp_win) {
            sol = fit_win_rate(w, sched, cfg.surrogate, cfg.epsilon, cfg.nlp_max_evaluations,
                               cfg.nlp_starts);
        } else {
            sol = fit_hit_rate(w, sched, cfg.nlp_max_evaluations, cfg.nlp_starts);
            scale = "log-odds";
        }
        write_weights(dir / "weights.csv", panel, w, sol, scale);
        out << "omega0 (" << scale << ") " << sol.omega0 << '\n';
        for (std::size_t k = 0; k < analysts.size(); ++k) {
            out << "  " << std::left << std::setw(10) << panel.analyst_ids[analysts[k]] << std::right
                << std::setw(12) << sol.omega(static_cast<Eigen::Index>(k)) << '\n';
        }
        if (est == Estimator::nlp_hit) {
            out << "P(actual above consensus) " << predict_hit_probability(w, sol) << '\n';
        } else {
            out << "forecast (log) " << predict(w, sol) << '\n';
        }
    }
    write_manifest(dir, "fit", cfg_json, source_files(source), o.seed, started);
    return kExitOk;
}

void add_model_flags(CLI::App& app, Options& o) {
    app.add_option("--L", o.L, "look-back window length")->check(CLI::Range(2, 100000));
    app.add_option("--epsilon", o.epsilon, "surrogate tail mass");
    app.add_option("--surrogate", o.surrogate, "cauchy or logistic")
        ->check(CLI::IsMember({"cauchy", "logistic"}));
    app.add_option("--eligibility", o.eligibility, "minimum presence share in the window");
    app.add_option("--nlp-max-evals", o.nlp_max_evaluations, "COBYLA budget, 0 for 5000(m+1)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--nlp-starts", o.nlp_starts, "COBYLA runs per nlp fit (1: equal weights only)")
        ->check(CLI::PositiveNumber);
    app.add_option("--chains", o.chains, "MCMC chains");
    app.add_option("--burnin", o.burnin, "burn-in sweeps per chain");
    app.add_option("--keep", o.keep, "kept sweeps per chain");
}

}  // namespace

int run(int argc, char** argv) { return run(argc, argv, std::cout, std::cerr); }

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Optimally weighted analyst forecast combination"};
    app.set_version_flag("--version", std::string(FCOMB_VERSION));
    app.set_config("--config", "", "TOML/INI file with flag values (flags take precedence)");
    app.require_subcommand(1);

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", o.seed, "master seed")->envname("COMBINE_SEED");
        sub->add_option("--out", o.out, "output directory");
    };

    CLI::App* synth = app.add_subcommand("synth", "write synthetic panels in the CSV format");
    add_common(synth);
    synth->add_option("--tickers", o.tickers, "number of tickers");
    synth->add_option("--quarters", o.quarters, "quarters per ticker");
    synth->add_option("--analysts", o.analysts, "analysts per ticker");
    synth->add_option("--missing-rate", o.missing_rate, "MCAR share of missing forecasts");
    synth->add_option("--growth", o.growth, "log growth per quarter");
    synth->add_option("--phi", o.phi, "persistence of analyst errors");
    synth->add_option("--seasonal", o.seasonal, "seasonal amplitude (log scale)");
    synth->add_option("--bias-spread", o.bias_spread, "analyst biases drawn from +-spread");

    CLI::App* backtest = app.add_subcommand("backtest", "rolling-window evaluation");
    add_common(backtest);
    backtest->add_option("--panel", o.panel, "panel directory or forecasts CSV")
        ->required()
        ->check(CLI::ExistingPath);
    backtest->add_option("--lambda-grid", o.lambda_grid, "comma separated discount grid")
        ->delimiter(',');
    backtest->add_option("--estimators", o.estimators, "comma separated estimator list")
        ->delimiter(',');
    backtest->add_option("--jobs", o.jobs, "worker threads, 0 for all cores");
    add_model_flags(*backtest, o);

    CLI::App* fit = app.add_subcommand("fit", "fit one window and write weights or draws");
    add_common(fit);
    fit->add_option("--panel", o.panel, "panel directory or forecasts CSV")
        ->required()
        ->check(CLI::ExistingPath);
    fit->add_option("--ticker", o.ticker, "ticker (needed when the file holds several)");
    fit->add_option("--anchor", o.anchor, "last training quarter, YYYYQn (default: latest)");
    fit->add_option("--estimator", o.estimator, "qp, nlp-win, nlp-hit or bayes");
    fit->add_option("--lambda", o.lambda, "discount for qp and nlp fits");
    add_model_flags(*fit, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForVersion& e) {
        out << FCOMB_VERSION << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth(o, out);
        if (backtest->parsed()) return cmd_backtest(o, out);
        return cmd_fit(o, out);
    } catch (const ConfigError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const SchemaError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const ParseError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const DomainError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const ContractError& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace fcomb::cli
