#pragma once

#include "fcomb/bayes.hpp"
#include "fcomb/losses.hpp"
#include "fcomb/panel.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fcomb {

enum class Estimator { qp, nlp_win, nlp_hit, bayes, naive, seasonal_naive };

std::string to_string(Estimator e);
/// Accepts qp, nlp-win, nlp-hit, bayes, naive, seasonal-naive. Throws ConfigError otherwise.
Estimator parse_estimator(const std::string& name);
/// qp and the two nlp fits run once per lambda in the grid.
bool uses_lambda_grid(Estimator e);
std::vector<Estimator> all_estimators();

struct BacktestConfig {
    std::size_t L = 12;
    std::vector<double> lambda_grid{0.0, 0.25, 0.5, 0.75, 1.0};
    double eligibility = 0.9;
    std::vector<Estimator> estimators = all_estimators();
    SurrogateFamily surrogate = SurrogateFamily::cauchy;
    double epsilon = 0.005;
    int nlp_max_evaluations = 0;  // 0: 5000 (m + 1)
    int nlp_starts = 1;           // COBYLA runs per nlp fit, see default_extra_starts
    BayesConfig bayes;
    std::uint64_t seed = 0;
    unsigned jobs = 0;  // 0: hardware concurrency

    void validate() const;
};

enum class FoldStatus { ok, skipped, failed };

/// One (ticker, estimator, lambda, fold) cell.
struct FoldResult {
    std::string ticker;
    Estimator estimator = Estimator::qp;
    double lambda = 0.0;  // NaN for estimators without a lambda grid
    std::size_t fold = 0;   // 1-based
    std::size_t anchor = 0; // 0-based index of the last training row
    std::size_t analysts = 0;
    double y = 0.0;
    double yhat = 0.0;   // NaN for nlp-hit
    double yeq = 0.0;
    double R = 0.0;      // NaN when degenerate or not applicable
    double p_hat = 0.0;  // nlp-hit only, NaN otherwise
    bool hit = false;
    bool win = false;
    bool win_applicable = true;
    FoldStatus status = FoldStatus::ok;
    std::string reason;
};

/// Hit and win rates for one (ticker, estimator, lambda) cell or the mean over the grid.
struct RateRow {
    std::string ticker;
    Estimator estimator = Estimator::qp;
    double lambda = 0.0;  // NaN when not applicable or for the mean row
    bool mean_over_grid = false;
    std::size_t folds = 0;  // folds entering the rates
    std::size_t failed = 0;
    std::size_t skipped = 0;
    double hit_rate = 0.0;
    double win_rate = 0.0;  // NaN for nlp-hit
};

struct BacktestReport {
    std::vector<FoldResult> folds;
    std::vector<RateRow> rates;
};

/// Analysts with a forecast for row anchor+1 and present in at least `eligibility` of the
/// L window rows ending at `anchor`.
std::vector<std::size_t> eligible_analysts(const ForecastPanel& panel, std::size_t anchor,
                                           const BacktestConfig& config);

/// Fills each missing cell with the mean of the present values in its row.
/// Throws ContractError on a row with nothing present.
Eigen::MatrixXd impute_row_mean(const Eigen::MatrixXd& X);

/// Hit and win flags from (y, yhat, yeq) for every estimator except nlp-hit.
void score_point_forecast(FoldResult& r);

/// Fits on rows anchor-L+1..anchor and predicts row anchor+1. Failures are reported in the
/// result (status failed or skipped), never thrown.
FoldResult run_fold(const ForecastPanel& panel, std::size_t anchor, Estimator estimator,
                    double lambda, const BacktestConfig& config);

/// Every fold x estimator x lambda cell over every panel, run on a worker pool. Results do
/// not depend on the number of workers.
BacktestReport run_backtest(const std::vector<ForecastPanel>& panels, const BacktestConfig& config);

/// Rates recomputed from fold rows (ok folds only).
std::vector<RateRow> aggregate_rates(const std::vector<FoldResult>& folds,
                                     const BacktestConfig& config);

/// Seed for one fold derived from the run seed, ticker and fold index.
std::uint64_t fold_seed(std::uint64_t seed, const std::string& ticker, std::size_t fold);

// Report output.
void write_folds_csv(const std::string& path, const BacktestReport& report);
void write_fold_issues_csv(const std::string& path, const BacktestReport& report);
void write_summary_csv(const std::string& path, const BacktestReport& report);
void print_summary_table(std::ostream& os, const BacktestReport& report);
std::string format_lambda(double lambda, bool mean_row = false);

}  // namespace fcomb
