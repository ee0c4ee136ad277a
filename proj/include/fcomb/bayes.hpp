#pragma once

#include "fcomb/panel.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fcomb {

/// Priors and run lengths for the hierarchical combination model.
///
///   y_t ~ N(omega0 + omega'x_t, sigma2 / p_t(lambda))
///   omega ~ Dir(alpha), omega0 ~ N(0, omega0_var), lambda ~ U(lambda_lo, lambda_hi),
///   sigma2 ~ IG(sigma2_shape, sigma2_rate)
///
/// and for each analyst column an AR(1) used to impute missing forecasts:
///
///   X_1 ~ N(gamma, s2), X_{l+1} | X_l ~ N(gamma + phi (X_l - gamma), s2)
///   phi ~ U(phi_lo, phi_hi), gamma ~ N(xbar, gamma_var), s2 ~ IG(ar_var_shape, ar_var_rate)
struct BayesConfig {
    std::vector<double> alpha;  // empty means 1 for every analyst
    double omega0_var = 1000.0;
    double lambda_lo = 0.0;
    double lambda_hi = 1.0;
    double sigma2_shape = 0.1;
    double sigma2_rate = 0.1;
    double phi_lo = -1.0;
    double phi_hi = 1.0;
    double gamma_var = 100.0;
    double ar_var_shape = 0.1;
    double ar_var_rate = 0.1;

    int chains = 2;
    int burnin = 10000;
    int keep = 20000;
    std::uint64_t seed = 0;
    bool parallel_chains = true;
    double target_acceptance = 0.35;

    // Test-harness switches. Frozen blocks keep their initial value.
    bool use_likelihood = true;
    bool freeze_omega = false;
    bool freeze_omega0 = false;
    bool freeze_lambda = false;
    bool freeze_sigma2 = false;
    bool freeze_ar = false;
    bool freeze_missing = false;

    void validate() const;
    [[nodiscard]] double alpha_at(std::size_t j) const { return alpha.empty() ? 1.0 : alpha[j]; }
};

/// One joint state of every model parameter.
struct ThetaDraw {
    Eigen::VectorXd omega;
    double omega0 = 0.0;
    double lambda = 0.0;
    double sigma2 = 1.0;
    Eigen::VectorXd phi;      // per analyst
    Eigen::VectorXd gamma;    // per analyst
    Eigen::VectorXd ar_var;   // per analyst
    Eigen::VectorXd imputed;  // one value per missing cell, in PosteriorDraws::missing order
};

/// Kept draws from every chain, chain-major (chain 0's draws first).
struct PosteriorDraws {
    int chains = 0;
    int keep = 0;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> missing;  // (row, column) of imputed cells

    Eigen::MatrixXd omega;  // S x m
    Eigen::VectorXd omega0;
    Eigen::VectorXd lambda;
    Eigen::VectorXd sigma2;
    Eigen::MatrixXd phi;      // S x m
    Eigen::MatrixXd gamma;    // S x m
    Eigen::MatrixXd ar_var;   // S x m
    Eigen::MatrixXd imputed;  // S x (missing cells)
    Eigen::VectorXd predictive;  // Y_{L+1} draws, empty when the target row is unusable
    std::vector<int> chain;

    struct ChainStats {
        double accept_omega = 0.0;
        double accept_lambda = 0.0;
        double accept_phi = 0.0;
    };
    std::vector<ChainStats> stats;

    [[nodiscard]] Eigen::Index size() const { return omega0.size(); }
    [[nodiscard]] Eigen::Index num_analysts() const { return omega.cols(); }
    [[nodiscard]] ThetaDraw draw(Eigen::Index s) const;

    /// Scalar parameter names in column order of `parameter_matrix`.
    [[nodiscard]] std::vector<std::string> parameter_names() const;
    [[nodiscard]] Eigen::MatrixXd parameter_matrix() const;
};

/// Log of the unnormalized joint posterior (all densities fully normalized) with the
/// window's missing cells set from `theta.imputed`. Returns -inf outside the support.
double log_posterior(const ThetaDraw& theta, const WindowView& window, const BayesConfig& config);

/// Metropolis-within-Gibbs sampler. Deterministic for a fixed config.seed.
///
/// `init` (if given) is the starting state of every chain; otherwise each chain starts from
/// its own random point. Frozen blocks need `init`.
PosteriorDraws sample_posterior(const WindowView& window, const BayesConfig& config,
                                const std::optional<ThetaDraw>& init = std::nullopt);

/// Mean and variance of the normal full conditional of the missing cell (row t, column j):
/// the AR(1) terms from rows t-1 and t+1 and the regression row. `X` must be complete.
std::pair<double, double> missing_cell_conditional(const WindowView& window,
                                                   const Eigen::MatrixXd& X, const ThetaDraw& theta,
                                                   Eigen::Index t, Eigen::Index j);

/// One predictive draw N(omega0 + omega'x, sigma2) per posterior sample.
Eigen::VectorXd predictive_draws(const PosteriorDraws& draws, const Eigen::VectorXd& target_x,
                                 std::uint64_t seed);

/// Point forecast (mean of predictive draws) and an equal-tailed interval.
struct PredictiveSummary {
    double mean = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};
PredictiveSummary summarize_predictive(const Eigen::VectorXd& draws, double coverage = 0.95);

/// Posterior mean of every imputed cell, written into a copy of the window's X.
Eigen::MatrixXd imputed_posterior_mean(const WindowView& window, const PosteriorDraws& draws);

/// Writes one row per kept draw with a chain column.
void write_draws_csv(const std::string& path, const PosteriorDraws& draws);

}  // namespace fcomb
