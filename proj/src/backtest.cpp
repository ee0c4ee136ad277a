#include "fcomb/backtest.hpp"

#include "fcomb/discount.hpp"
#include "fcomb/errors.hpp"
#include "fcomb/nlp.hpp"
#include "fcomb/qp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <thread>
#include <tuple>

namespace fcomb {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

FoldResult skeleton(const ForecastPanel& panel, std::size_t anchor, Estimator e, double lambda,
                    const BacktestConfig& config) {
    FoldResult r;
    r.ticker = panel.ticker;
    r.estimator = e;
    r.lambda = uses_lambda_grid(e) ? lambda : kNaN;
    r.anchor = anchor;
    r.fold = anchor + 2 - config.L;
    r.yhat = kNaN;
    r.R = kNaN;
    r.p_hat = kNaN;
    r.yeq = kNaN;
    r.y = anchor + 1 < panel.num_quarters() ? panel.y(static_cast<Eigen::Index>(anchor + 1)) : kNaN;
    return r;
}

FoldResult not_ok(FoldResult r, FoldStatus s, std::string reason) {
    r.status = s;
    r.reason = std::move(reason);
    r.hit = false;
    r.win = false;
    return r;
}

}  // namespace

std::string to_string(Estimator e) {
    switch (e) {
        case Estimator::qp: return "qp";
        case Estimator::nlp_win: return "nlp-win";
        case Estimator::nlp_hit: return "nlp-hit";
        case Estimator::bayes: return "bayes";
        case Estimator::naive: return "naive";
        case Estimator::seasonal_naive: return "seasonal-naive";
    }
    return "?";
}

Estimator parse_estimator(const std::string& name) {
    for (Estimator e : all_estimators()) {
        if (to_string(e) == name) return e;
    }
    throw ConfigError("unknown estimator '" + name + "'");
}

bool uses_lambda_grid(Estimator e) {
    return e == Estimator::qp || e == Estimator::nlp_win || e == Estimator::nlp_hit;
}

std::vector<Estimator> all_estimators() {
    return {Estimator::qp,    Estimator::nlp_win, Estimator::nlp_hit,
            Estimator::bayes, Estimator::naive,   Estimator::seasonal_naive};
}

void BacktestConfig::validate() const {
    if (L < 2) throw ConfigError("L must be at least 2");
    if (lambda_grid.empty()) throw ConfigError("lambda grid is empty");
    for (double l : lambda_grid) {
        if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lambda grid values must be >= 0");
    }
    if (!(eligibility > 0.0 && eligibility <= 1.0)) {
        throw ConfigError("eligibility threshold must lie in (0, 1]");
    }
    if (estimators.empty()) throw ConfigError("no estimators selected");
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw ConfigError("epsilon must lie in (0, 0.5)");
    if (nlp_starts < 1) throw ConfigError("nlp starts must be at least 1");
    if (nlp_max_evaluations < 0) throw ConfigError("nlp evaluation budget must be >= 0");
    if (std::find(estimators.begin(), estimators.end(), Estimator::bayes) != estimators.end()) {
        bayes.validate();
    }
}

std::uint64_t fold_seed(std::uint64_t seed, const std::string& ticker, std::size_t fold) {
    return splitmix64(splitmix64(seed ^ fnv1a(ticker)) + static_cast<std::uint64_t>(fold));
}

std::vector<std::size_t> eligible_analysts(const ForecastPanel& panel, std::size_t anchor,
                                           const BacktestConfig& config) {
    if (anchor + 1 < config.L || anchor + 1 >= panel.num_quarters()) {
        throw ContractError("eligible_analysts: window does not fit the panel");
    }
    const std::size_t start = anchor + 1 - config.L;
    const double needed = config.eligibility * static_cast<double>(config.L) - 1e-9;
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < panel.num_analysts(); ++j) {
        if (!panel.present(anchor + 1, j)) continue;
        std::size_t count = 0;
        for (std::size_t t = start; t <= anchor; ++t) count += panel.present(t, j) ? 1 : 0;
        if (static_cast<double>(count) >= needed) out.push_back(j);
    }
    return out;
}

Eigen::MatrixXd impute_row_mean(const Eigen::MatrixXd& X) {
    Eigen::MatrixXd out = X;
    for (Eigen::Index t = 0; t < X.rows(); ++t) {
        double sum = 0.0;
        int n = 0;
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            if (!std::isnan(X(t, j))) {
                sum += X(t, j);
                ++n;
            }
        }
        if (n == 0) throw ContractError("row " + std::to_string(t + 1) + " has no forecasts to average");
        const double mean = sum / n;
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            if (std::isnan(X(t, j))) out(t, j) = mean;
        }
    }
    return out;
}

void score_point_forecast(FoldResult& r) {
    const RelativeBias rb = relative_bias(r.y, r.yhat, r.yeq);
    r.R = rb.value;
    r.hit = is_hit(r.y, r.yhat, r.yeq);
    r.win = is_win(rb);
    r.win_applicable = true;
}

FoldResult run_fold(const ForecastPanel& panel, std::size_t anchor, Estimator estimator,
                    double lambda, const BacktestConfig& config) {
    FoldResult r = skeleton(panel, anchor, estimator, lambda, config);
    if (anchor + 1 < config.L || anchor + 1 >= panel.num_quarters()) {
        return not_ok(r, FoldStatus::skipped, "window does not fit the panel");
    }
    const auto yeq = panel.row_consensus(anchor + 1);
    if (!yeq) return not_ok(r, FoldStatus::skipped, "no forecasts for the target quarter");
    r.yeq = *yeq;

    if (estimator == Estimator::naive || estimator == Estimator::seasonal_naive) {
        const std::size_t lag = estimator == Estimator::naive ? 0 : 3;
        if (anchor < lag) return not_ok(r, FoldStatus::skipped, "not enough history for the lag");
        r.yhat = panel.y(static_cast<Eigen::Index>(anchor - lag));
        score_point_forecast(r);
        return r;
    }

    const auto analysts = eligible_analysts(panel, anchor, config);
    r.analysts = analysts.size();
    if (analysts.empty()) return not_ok(r, FoldStatus::skipped, "no eligible analysts");
    WindowView window = make_window(panel, anchor, config.L, analysts);

    try {
        if (estimator == Estimator::bayes) {
            BayesConfig bc = config.bayes;
            bc.seed = fold_seed(config.seed, panel.ticker, r.fold);
            bc.parallel_chains = false;
            const PosteriorDraws draws = sample_posterior(window, bc);
            r.yhat = summarize_predictive(draws.predictive).mean;
            score_point_forecast(r);
            return r;
        }

        window.X = impute_row_mean(window.X);
        const DiscountSchedule schedule = make_schedule(lambda, config.L);
        if (estimator == Estimator::qp) {
            const WeightSolution sol = solve_qp(build_qp(window, schedule));
            r.yhat = predict(window, sol);
            score_point_forecast(r);
        } else if (estimator == Estimator::nlp_win) {
            const WeightSolution sol = fit_win_rate(window, schedule, config.surrogate,
                                                    config.epsilon, config.nlp_max_evaluations,
                                                    config.nlp_starts);
            r.yhat = predict(window, sol);
            score_point_forecast(r);
        } else {
            const WeightSolution sol = fit_hit_rate(window, schedule, config.nlp_max_evaluations,
                                                    config.nlp_starts);
            r.p_hat = predict_hit_probability(window, sol);
            r.hit = binary_target(r.y, r.yeq) == (r.p_hat > 0.5 ? 1 : 0);
            r.win = false;
            r.win_applicable = false;
        }
    } catch (const ContractError& e) {
        // Data-shaped problems (an empty row, every training row exact) skip the fold.
        return not_ok(r, FoldStatus::skipped, e.what());
    } catch (const Error& e) {
        return not_ok(r, FoldStatus::failed, e.what());
    }
    return r;
}

BacktestReport run_backtest(const std::vector<ForecastPanel>& panels, const BacktestConfig& config) {
    config.validate();
    struct Task {
        std::size_t panel;
        std::size_t anchor;
        Estimator estimator;
        double lambda;
    };
    std::vector<Task> tasks;
    for (std::size_t p = 0; p < panels.size(); ++p) {
        const std::size_t T = panels[p].num_quarters();
        if (T < config.L + 1) {
            throw ConfigError("panel " + panels[p].ticker + " has " + std::to_string(T) +
                              " quarters; need at least L + 1");
        }
        for (Estimator e : config.estimators) {
            const std::vector<double> grid =
                uses_lambda_grid(e) ? config.lambda_grid : std::vector<double>{kNaN};
            for (double lambda : grid) {
                for (std::size_t anchor = config.L - 1; anchor + 1 < T; ++anchor) {
                    tasks.push_back({p, anchor, e, lambda});
                }
            }
        }
    }

    BacktestReport report;
    report.folds.resize(tasks.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            const Task& t = tasks[i];
            report.folds[i] = run_fold(panels[t.panel], t.anchor, t.estimator, t.lambda, config);
        }
    };
    unsigned jobs = config.jobs > 0 ? config.jobs : std::max(1u, std::thread::hardware_concurrency());
    jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, std::max<std::size_t>(tasks.size(), 1)));
    std::vector<std::thread> pool;
    for (unsigned k = 1; k < jobs; ++k) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    report.rates = aggregate_rates(report.folds, config);
    return report;
}

std::vector<RateRow> aggregate_rates(const std::vector<FoldResult>& folds,
                                     const BacktestConfig& config) {
    // Keyed by ticker, estimator order, lambda position so output order is stable.
    const auto estimator_rank = [&](Estimator e) {
        const auto it = std::find(config.estimators.begin(), config.estimators.end(), e);
        return static_cast<std::size_t>(it - config.estimators.begin());
    };
    const auto lambda_rank = [&](const FoldResult& f) -> std::size_t {
        if (!uses_lambda_grid(f.estimator)) return 0;
        for (std::size_t k = 0; k < config.lambda_grid.size(); ++k) {
            if (config.lambda_grid[k] == f.lambda) return k;
        }
        return config.lambda_grid.size();
    };
    struct Tally {
        std::size_t ok = 0, failed = 0, skipped = 0, hits = 0, wins = 0;
        double lambda = kNaN;
        Estimator estimator = Estimator::qp;
    };
    std::map<std::tuple<std::string, std::size_t, std::size_t>, Tally> cells;
    for (const auto& f : folds) {
        Tally& t = cells[{f.ticker, estimator_rank(f.estimator), lambda_rank(f)}];
        t.lambda = f.lambda;
        t.estimator = f.estimator;
        switch (f.status) {
            case FoldStatus::ok:
                ++t.ok;
                t.hits += f.hit ? 1 : 0;
                t.wins += f.win ? 1 : 0;
                break;
            case FoldStatus::failed: ++t.failed; break;
            case FoldStatus::skipped: ++t.skipped; break;
        }
    }

    std::vector<RateRow> rows;
    const auto flush_mean = [&](const std::vector<RateRow>& group) {
        if (group.size() < 2 || !uses_lambda_grid(group.front().estimator)) return;
        RateRow mean = group.front();
        mean.lambda = kNaN;
        mean.mean_over_grid = true;
        mean.folds = mean.failed = mean.skipped = 0;
        double hr = 0.0;
        double wr = 0.0;
        for (const auto& g : group) {
            hr += g.hit_rate;
            wr += g.win_rate;
            mean.folds += g.folds;
            mean.failed += g.failed;
            mean.skipped += g.skipped;
        }
        mean.hit_rate = hr / static_cast<double>(group.size());
        mean.win_rate = wr / static_cast<double>(group.size());
        rows.push_back(mean);
    };
    std::vector<RateRow> group;
    std::pair<std::string, std::size_t> group_key;
    for (const auto& [key, t] : cells) {
        const std::pair<std::string, std::size_t> k{std::get<0>(key), std::get<1>(key)};
        if (!group.empty() && k != group_key) {
            flush_mean(group);
            group.clear();
        }
        group_key = k;
        RateRow r;
        r.ticker = std::get<0>(key);
        r.estimator = t.estimator;
        r.lambda = t.lambda;
        r.folds = t.ok;
        r.failed = t.failed;
        r.skipped = t.skipped;
        r.hit_rate = t.ok > 0 ? static_cast<double>(t.hits) / static_cast<double>(t.ok) : kNaN;
        r.win_rate = t.estimator == Estimator::nlp_hit || t.ok == 0
                         ? kNaN
                         : static_cast<double>(t.wins) / static_cast<double>(t.ok);
        rows.push_back(r);
        group.push_back(r);
    }
    flush_mean(group);
    return rows;
}

}  // namespace fcomb
