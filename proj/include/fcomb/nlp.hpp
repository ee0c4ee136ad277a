#pragma once

#include "fcomb/discount.hpp"
#include "fcomb/losses.hpp"
#include "fcomb/panel.hpp"
#include "fcomb/qp.hpp"

#include <Eigen/Dense>

#include <functional>
#include <utility>
#include <vector>

namespace fcomb {

/// Objective over (omega0, omega); omega is always a point of the simplex.
using CombinationObjective = std::function<double(double, const Eigen::VectorXd&)>;

inline constexpr double kWinInterceptBound = 10.0;
inline constexpr double kHitInterceptBound = 50.0;

/// Minimize an objective over omega in the simplex and |omega0| <= intercept_bound.
struct NlpProblem {
    std::size_t num_weights = 0;
    CombinationObjective objective;
    bool intercept = true;
    double intercept_bound = kWinInterceptBound;
    double rho_begin = 0.25;
    double rho_end = 1e-6;
    int max_evaluations = 0;  // 0 selects 5000 * (m + 1)
    /// Further (omega0, omega) starting points, each with its own budget; the lowest
    /// objective wins and ties keep the earlier run.
    std::vector<std::pair<double, Eigen::VectorXd>> extra_starts;
};

/// COBYLA-style search starting from equal weights and omega0 = 0 (then any extra starts).
///
/// The sum-to-one constraint is removed by writing omega_m = 1 - sum of the others, so the
/// search runs over omega0 and m - 1 free weights. Running out of evaluations is not an
/// error: the best point is returned with `budget_exhausted` set.
WeightSolution cobyla_minimize(const NlpProblem& problem);

/// Discounted Cauchy/Logistic surrogate of the win-rate loss on a complete window:
/// (1/L) sum_t p_t F(|R_t| - 1). Rows whose consensus equals the actual are dropped and the
/// remaining weights rescaled to sum to one. Throws ContractError if every row is dropped.
CombinationObjective win_rate_objective(const WindowView& window, const DiscountSchedule& schedule,
                                        const SurrogateSpec& spec);

/// The same sum with the indicator I(|R_t| > 1) in place of F.
double exact_win_rate_loss(const WindowView& window, const DiscountSchedule& schedule,
                           double omega0, const Eigen::VectorXd& omega);

/// Discounted Bernoulli NLL of the logistic model p_t = 1/(1 + exp(-(omega0 + omega'x_t)))
/// against the targets I(y_t > consensus_t), scaled by 1/L.
CombinationObjective hit_rate_objective(const WindowView& window,
                                        const DiscountSchedule& schedule);

/// Logistic link, clamped to [kProbFloor, 1 - kProbFloor].
double logistic_probability(double eta);

/// p for the window's target row under a hit-rate fit.
double predict_hit_probability(const WindowView& window, const WeightSolution& solution);

/// Up to `count - 1` deterministic extra starts for a window: the squared-error fit, equal
/// weights with the intercept that reproduces each training row (newest first), then each
/// analyst's vertex pulled slightly inside the simplex with its best intercept.
std::vector<std::pair<double, Eigen::VectorXd>> default_extra_starts(const WindowView& window,
                                                                     const DiscountSchedule& schedule,
                                                                     int count);

/// Surrogate calibration plus COBYLA for one window. `starts` > 1 adds default_extra_starts.
WeightSolution fit_win_rate(const WindowView& window, const DiscountSchedule& schedule,
                            SurrogateFamily family = SurrogateFamily::cauchy,
                            double epsilon = 0.005, int max_evaluations = 0, int starts = 1);

WeightSolution fit_hit_rate(const WindowView& window, const DiscountSchedule& schedule,
                            int max_evaluations = 0, int starts = 1);

}  // namespace fcomb
