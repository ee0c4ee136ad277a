#include "fcomb/losses.hpp"

#include "fcomb/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace fcomb {

double consensus(std::span<const double> row_forecasts) {
    if (row_forecasts.empty()) throw DomainError("consensus of an empty row");
    double sum = 0.0;
    for (double x : row_forecasts) sum += x;
    return sum / static_cast<double>(row_forecasts.size());
}

RelativeBias relative_bias(double y, double yhat_opt, double yhat_eq) {
    RelativeBias r;
    r.numerator = y - yhat_opt;
    r.denominator = y - yhat_eq;
    r.degenerate = r.denominator == 0.0;
    r.value = r.degenerate ? std::numeric_limits<double>::quiet_NaN() : r.numerator / r.denominator;
    return r;
}

double squared_error_loss(double y, double yhat) {
    const double e = y - yhat;
    return e * e;
}

double hit_rate_loss(double p_hat, int y_tilde) {
    const double p = std::clamp(p_hat, kProbFloor, 1.0 - kProbFloor);
    return y_tilde == 1 ? -std::log(p) : -std::log1p(-p);
}

int win_rate_loss(const RelativeBias& r) {
    if (r.degenerate) return 1;
    return std::abs(r.value) > 1.0 ? 1 : 0;
}

int binary_target(double y, double yhat_eq) { return y > yhat_eq ? 1 : 0; }

HitOutcome classify_hit(double y, double yhat_opt, double yhat_eq) {
    return binary_target(y, yhat_eq) == binary_target(yhat_opt, yhat_eq) ? HitOutcome::hit
                                                                         : HitOutcome::no_hit;
}

bool is_hit(double y, double yhat_opt, double yhat_eq) {
    const RelativeBias r = relative_bias(y, yhat_opt, yhat_eq);
    if (r.degenerate) return classify_hit(y, yhat_opt, yhat_eq) == HitOutcome::hit;
    return r.value - 1.0 < 0.0;
}

std::pair<double, double> empirical_bounds(const WindowView& window) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < window.X.rows(); ++t) {
        const double y = window.y(t);
        const double c = window.consensus(t);
        if (std::isnan(c)) continue;
        const double denom = y - c;
        if (denom == 0.0) continue;
        for (Eigen::Index j = 0; j < window.X.cols(); ++j) {
            const double x = window.X(t, j);
            if (std::isnan(x)) continue;
            const double z = std::abs((y - x) / denom) - 1.0;
            lo = std::min(lo, z);
            hi = std::max(hi, z);
        }
    }
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        throw CalibrationError("no non-degenerate rows to bound the relative bias");
    }
    return {lo, hi};
}

double surrogate_cdf(const SurrogateSpec& spec, double z) {
    const double u = (z - spec.z0) / spec.gamma;
    if (spec.family == SurrogateFamily::cauchy) {
        return std::atan(u) / std::numbers::pi + 0.5;
    }
    // Logistic, written to stay finite for large |u|.
    if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

SurrogateSpec calibrate_scale(SurrogateFamily family, double z_min, double z_max, double epsilon) {
    const auto describe = [&] {
        std::ostringstream os;
        os << "interval (" << z_min << ", " << z_max << ") with epsilon " << epsilon;
        return os.str();
    };
    if (!(z_min < z_max) || !std::isfinite(z_min) || !std::isfinite(z_max)) {
        throw CalibrationError("empty or non-finite " + describe());
    }
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw CalibrationError("epsilon must lie in (0, 0.5)");

    SurrogateSpec spec;
    spec.family = family;
    spec.z0 = 0.0;
    spec.epsilon = epsilon;
    spec.z_min = z_min;
    spec.z_max = z_max;
    const double target = 1.0 - epsilon;
    const auto mass = [&](double gamma) {
        spec.gamma = gamma;
        return surrogate_cdf(spec, z_max) - surrogate_cdf(spec, z_min);
    };

    // The interval mass falls monotonically in gamma once the interval straddles the
    // location, so a bracket [lo, hi] with mass(lo) >= target >= mass(hi) pins the root.
    double lo = 1e-8;
    double hi = 1e3;
    if (mass(lo) < target) {
        throw CalibrationError("no scale reaches mass 1 - epsilon on " + describe());
    }
    int expansions = 0;
    while (mass(hi) > target) {
        hi *= 2.0;
        if (++expansions > 200) throw CalibrationError("could not bracket scale on " + describe());
    }
    double f_mid = 0.0;
    for (int iter = 0; iter < 400; ++iter) {
        const double mid = 0.5 * (lo + hi);
        f_mid = mass(mid) - target;
        if (std::abs(f_mid) <= 1e-12 || hi - lo <= 1e-15 * hi) {
            spec.gamma = mid;
            break;
        }
        if (f_mid > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        spec.gamma = mid;
    }
    if (std::abs(mass(spec.gamma) - target) > 1e-10) {
        throw CalibrationError("bisection did not converge on " + describe());
    }
    return spec;
}

SurrogateSpec calibrate_for_window(const WindowView& window, SurrogateFamily family,
                                   double epsilon) {
    try {
        const auto [lo, hi] = empirical_bounds(window);
        return calibrate_scale(family, lo, hi, epsilon);
    } catch (const CalibrationError&) {
        SurrogateSpec spec = calibrate_scale(family, kFallbackZMin, kFallbackZMax, epsilon);
        spec.used_fallback = true;
        return spec;
    }
}

}  // namespace fcomb
