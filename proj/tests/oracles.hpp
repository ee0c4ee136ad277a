#pragma once

// Reference computations that tests compare the library against. Each one is written
// independently of the library code it checks.

#include "fcomb/panel.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

// Reference discount weights for L = 12, rows t = 1..12, columns lambda = 0, .25, .5, .75, 1.
inline constexpr std::array<double, 5> kScheduleLambdas{0.0, 0.25, 0.5, 0.75, 1.0};
inline constexpr std::array<std::array<double, 5>, 12> kScheduleRounded{{
    {0.08333, 0.01488, 0.00161, 0.00014, 0.00001},
    {0.08333, 0.01911, 0.00266, 0.00029, 0.00003},
    {0.08333, 0.02454, 0.00438, 0.00062, 0.00008},
    {0.08333, 0.03150, 0.00722, 0.00131, 0.00021},
    {0.08333, 0.04045, 0.01191, 0.00277, 0.00058},
    {0.08333, 0.05194, 0.01964, 0.00586, 0.00157},
    {0.08333, 0.06670, 0.03238, 0.01241, 0.00426},
    {0.08333, 0.08564, 0.05338, 0.02627, 0.01158},
    {0.08333, 0.10996, 0.08801, 0.05562, 0.03147},
    {0.08333, 0.14119, 0.14511, 0.11775, 0.08555},
    {0.08333, 0.18130, 0.23924, 0.24927, 0.23255},
    {0.08333, 0.23279, 0.39445, 0.52770, 0.63212},
}};

// Rounds half away from zero at five decimals, matching a printed table.
inline double round5(double v) { return std::round(v * 1e5) / 1e5; }

// Closed-form discount weights: e^{-lambda(L-t)} (1 - e^{-lambda}) / (1 - e^{-lambda L}).
inline std::vector<double> closed_form_discount(double lambda, std::size_t L) {
    std::vector<double> p(L);
    for (std::size_t t = 1; t <= L; ++t) {
        p[t - 1] = lambda == 0.0 ? 1.0 / static_cast<double>(L)
                                 : std::exp(-lambda * static_cast<double>(L - t)) *
                                       (1.0 - std::exp(-lambda)) /
                                       (1.0 - std::exp(-lambda * static_cast<double>(L)));
    }
    return p;
}

// Orderings of (yhat_opt, y, yhat_eq) and whether it is a hit.
struct Scenario {
    int id;
    bool hit;
    int y_tilde;
    int yhat_tilde;
};

// Identifies the scenario row for a strict ordering.
inline Scenario scenario_of(double y, double opt, double eq) {
    if (opt < y && y < eq) return {1, true, 0, 0};
    if (y < opt && opt < eq) return {2, true, 0, 0};
    if (y < eq && eq < opt) return {3, false, 0, 1};
    if (opt < eq && eq < y) return {4, false, 1, 0};
    if (eq < y && y < opt) return {5, true, 1, 1};
    return {6, true, 1, 1};  // eq < opt < y
}

// Optimal weights are proportional to inverse variances.
inline Eigen::VectorXd inverse_variance_weights(const Eigen::VectorXd& variances) {
    const Eigen::VectorXd inv = variances.cwiseInverse();
    return inv / inv.sum();
}

// Discounted squared error with the intercept set to its optimum for fixed omega:
// omega0 = sum_t p_t (y_t - omega'x_t) since the weights sum to one.
inline double profiled_loss(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                            const std::vector<double>& p, const Eigen::VectorXd& omega) {
    const Eigen::VectorXd r = y - X * omega;
    double w0 = 0.0;
    for (Eigen::Index t = 0; t < r.size(); ++t) w0 += p[static_cast<std::size_t>(t)] * r(t);
    double s = 0.0;
    for (Eigen::Index t = 0; t < r.size(); ++t) {
        const double e = r(t) - w0;
        s += p[static_cast<std::size_t>(t)] * e * e;
    }
    return s;
}

// Minimum of the profiled loss over a regular simplex grid (m = 2 or 3).
inline double simplex_grid_minimum(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                                   const std::vector<double>& p, double step) {
    const auto n = static_cast<int>(std::lround(1.0 / step));
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd w(X.cols());
    if (X.cols() == 1) {
        w(0) = 1.0;
        return profiled_loss(y, X, p, w);
    }
    if (X.cols() == 2) {
        for (int i = 0; i <= n; ++i) {
            w(0) = static_cast<double>(i) / n;
            w(1) = 1.0 - w(0);
            best = std::min(best, profiled_loss(y, X, p, w));
        }
        return best;
    }
    for (int i = 0; i <= n; ++i) {
        for (int k = 0; k + i <= n; ++k) {
            w(0) = static_cast<double>(i) / n;
            w(1) = static_cast<double>(k) / n;
            w(2) = 1.0 - w(0) - w(1);
            best = std::min(best, profiled_loss(y, X, p, w));
        }
    }
    return best;
}

// Unbiased, uncorrelated analysts around a random-walk truth: x_tj = y_t + N(0, var_j).
struct InverseVarianceSample {
    Eigen::VectorXd y;
    Eigen::MatrixXd X;
};

inline InverseVarianceSample inverse_variance_sample(const Eigen::VectorXd& variances, Eigen::Index L,
                                std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    InverseVarianceSample s;
    s.y.resize(L);
    s.X.resize(L, variances.size());
    double level = 0.0;
    for (Eigen::Index t = 0; t < L; ++t) {
        level += z(rng);
        s.y(t) = level;
        for (Eigen::Index j = 0; j < variances.size(); ++j) {
            s.X(t, j) = level + std::sqrt(variances(j)) * z(rng);
        }
    }
    return s;
}

// A draw from the combination model with a known parameter vector.
struct ModelSample {
    Eigen::VectorXd y;
    Eigen::MatrixXd X;
    Eigen::VectorXd target_x;
};

// y_t ~ N(omega0 + omega'x_t, sigma2 / p_t(lambda)) with AR(1) analyst columns.
inline ModelSample model_sample(const Eigen::VectorXd& omega, double omega0, double sigma2,
                                double lambda, const Eigen::VectorXd& gamma,
                                const Eigen::VectorXd& phi, const Eigen::VectorXd& ar_sd,
                                Eigen::Index L, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    const Eigen::Index m = omega.size();
    ModelSample s;
    s.X.resize(L + 1, m);
    for (Eigen::Index j = 0; j < m; ++j) {
        double x = gamma(j) + ar_sd(j) / std::sqrt(1.0 - phi(j) * phi(j)) * z(rng);
        for (Eigen::Index t = 0; t <= L; ++t) {
            if (t > 0) x = gamma(j) + phi(j) * (x - gamma(j)) + ar_sd(j) * z(rng);
            s.X(t, j) = x;
        }
    }
    const std::vector<double> p = closed_form_discount(lambda, static_cast<std::size_t>(L));
    s.y.resize(L);
    for (Eigen::Index t = 0; t < L; ++t) {
        const double sd = std::sqrt(sigma2 / p[static_cast<std::size_t>(t)]);
        s.y(t) = omega0 + s.X.row(t).dot(omega) + sd * z(rng);
    }
    s.target_x = s.X.row(L).transpose();
    s.X.conservativeResize(L, m);
    return s;
}

// Window whose consensus is the mean of `extra` + m analysts, of which the first m are kept.
inline fcomb::WindowView consensus_window(std::mt19937_64& rng, Eigen::Index L, Eigen::Index m,
                                          Eigen::Index extra) {
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> sd(0.02, 0.15);
    std::uniform_real_distribution<double> bias(-0.1, 0.1);
    const Eigen::Index M = m + extra;
    Eigen::VectorXd s(M), b(M);
    for (Eigen::Index j = 0; j < M; ++j) {
        s(j) = sd(rng);
        b(j) = bias(rng);
    }
    Eigen::VectorXd y(L);
    Eigen::MatrixXd all(L, M);
    for (Eigen::Index t = 0; t < L; ++t) {
        y(t) = 8.0 + 0.02 * static_cast<double>(t) + 0.05 * z(rng);
        for (Eigen::Index j = 0; j < M; ++j) all(t, j) = y(t) + b(j) + s(j) * z(rng);
    }
    Eigen::VectorXd target(m);
    for (Eigen::Index j = 0; j < m; ++j) target(j) = 8.3 + b(j) + s(j) * z(rng);
    const Eigen::VectorXd consensus = all.rowwise().mean();
    return fcomb::make_window(y, all.leftCols(m), target, consensus);
}

// Sample mean and unbiased variance.
inline std::pair<double, double> moments(const Eigen::VectorXd& v) {
    const double mean = v.mean();
    const double var = (v.array() - mean).square().sum() / static_cast<double>(v.size() - 1);
    return {mean, var};
}

}  // namespace oracle
