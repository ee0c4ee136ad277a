#pragma once

#include "fcomb/panel.hpp"

#include <span>
#include <utility>

namespace fcomb {

/// Probabilities fed to the Bernoulli likelihood are clamped to [kProbFloor, 1 - kProbFloor].
inline constexpr double kProbFloor = 1e-12;

/// Equal-weight mean of the present (log) forecasts in one row.
/// Throws DomainError when the row is empty.
double consensus(std::span<const double> row_forecasts);

/// Ratio of the combined forecast's error to the consensus error.
struct RelativeBias {
    double value = 0.0;
    double numerator = 0.0;    // y - yhat_opt
    double denominator = 0.0;  // y - yhat_eq
    bool degenerate = false;   // denominator == 0; `value` is NaN
};

RelativeBias relative_bias(double y, double yhat_opt, double yhat_eq);

double squared_error_loss(double y, double yhat);

/// Bernoulli negative log-likelihood with clamped probability.
double hit_rate_loss(double p_hat, int y_tilde);

/// 1 when |R| > 1, else 0. A degenerate R counts as a loss.
int win_rate_loss(const RelativeBias& r);

/// Convenience: the complementary win flag (|R| <= 1 on a non-degenerate fold).
inline bool is_win(const RelativeBias& r) { return win_rate_loss(r) == 0; }

/// I(y > yhat_eq); ties map to 0.
int binary_target(double y, double yhat_eq);

enum class HitOutcome { hit, no_hit };

/// A hit when the actual and the combined forecast fall on the same side of the consensus:
/// I(y > yhat_eq) == I(yhat_opt > yhat_eq).
HitOutcome classify_hit(double y, double yhat_opt, double yhat_eq);

/// Hit on the relative-bias face: R < 1 on a non-degenerate fold. When the consensus is
/// exact (degenerate R) this falls back to classify_hit.
bool is_hit(double y, double yhat_opt, double yhat_eq);

enum class SurrogateFamily { cauchy, logistic };

/// Calibrated smooth CDF standing in for the 0-1 indicator.
struct SurrogateSpec {
    SurrogateFamily family = SurrogateFamily::cauchy;
    double z0 = 0.0;
    double gamma = 1.0;
    double epsilon = 0.005;
    double z_min = -2.0;
    double z_max = 5.0;
    bool used_fallback = false;
};

inline constexpr double kFallbackZMin = -2.0;
inline constexpr double kFallbackZMax = 5.0;

/// Empirical range of z = |R| - 1 over every (row, analyst) forecast in the window, with each
/// analyst's forecast taken as the combined forecast. Rows with an exact consensus and missing
/// cells are skipped. Throws CalibrationError if no usable pair exists.
std::pair<double, double> empirical_bounds(const WindowView& window);

/// Root-finds the scale so that F(z_max) - F(z_min) = 1 - epsilon with location 0.
/// Throws CalibrationError when the equation has no root for the interval.
SurrogateSpec calibrate_scale(SurrogateFamily family, double z_min, double z_max, double epsilon);

/// empirical_bounds + calibrate_scale, falling back to the (-2, 5) interval on failure.
SurrogateSpec calibrate_for_window(const WindowView& window, SurrogateFamily family,
                                   double epsilon);

double surrogate_cdf(const SurrogateSpec& spec, double z);

}  // namespace fcomb
