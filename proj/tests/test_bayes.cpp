#include "fcomb/bayes.hpp"
#include "fcomb/errors.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

using namespace fcomb;

namespace {

ThetaDraw basic_theta(Eigen::Index m, Eigen::Index missing = 0) {
    ThetaDraw th;
    th.omega = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
    th.omega0 = 0.1;
    th.lambda = 0.3;
    th.sigma2 = 0.5;
    th.phi = Eigen::VectorXd::Constant(m, 0.4);
    th.gamma = Eigen::VectorXd::Constant(m, 1.0);
    th.ar_var = Eigen::VectorXd::Constant(m, 0.2);
    th.imputed = Eigen::VectorXd::Zero(missing);
    return th;
}

WindowView sample_window(std::uint64_t seed, Eigen::Index L = 40) {
    const oracle::ModelSample s = oracle::model_sample(
        Eigen::Vector3d(0.5, 0.3, 0.2), 0.2, 0.05, 0.1, Eigen::Vector3d(1.0, 1.2, 0.8),
        Eigen::Vector3d(0.5, 0.6, 0.4), Eigen::Vector3d(0.3, 0.3, 0.3), L, seed);
    return make_window(s.y, s.X, s.target_x);
}

double normal_lpdf(double x, double mu, double var) {
    return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * (x - mu) * (x - mu) / var;
}

double inv_gamma_lpdf(double x, double a, double b) {
    return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
}

BayesConfig small_config(std::uint64_t seed) {
    BayesConfig c;
    c.chains = 2;
    c.burnin = 500;
    c.keep = 1000;
    c.seed = seed;
    return c;
}

}  // namespace

TEST(LogPosterior, SingleObservationByHand) {
    const WindowView w = make_window(Eigen::VectorXd::Constant(1, 2.0), Eigen::MatrixXd::Constant(1, 1, 1.5),
                                     Eigen::VectorXd::Constant(1, 1.0));
    const BayesConfig cfg;
    const ThetaDraw th = basic_theta(1);
    double expected = normal_lpdf(2.0, 0.1 + 1.5, 0.5);                 // y given x, p_1 = 1
    expected += normal_lpdf(1.5, 1.0, 0.2);                             // first AR term
    expected += normal_lpdf(0.1, 0.0, 1000.0);                          // intercept prior
    expected += inv_gamma_lpdf(0.5, 0.1, 0.1);                          // sigma2 prior
    expected += -std::log(2.0);                                         // phi prior on (-1, 1)
    expected += normal_lpdf(1.0, 1.5, 100.0);                           // gamma centred on the column mean
    expected += inv_gamma_lpdf(0.2, 0.1, 0.1);                          // AR variance prior
    EXPECT_NEAR(log_posterior(th, w, cfg), expected, 1e-12);
}

TEST(LogPosterior, DirichletNormalisingConstant) {
    Eigen::MatrixXd X(2, 2);
    X << 1.0, 1.1, 1.2, 0.9;
    const WindowView w = make_window(Eigen::Vector2d(1.0, 1.1), X, Eigen::Vector2d(1.0, 1.0));
    BayesConfig flat;
    BayesConfig peaked;
    peaked.alpha = {3.0, 2.0};
    ThetaDraw th = basic_theta(2);
    th.omega = Eigen::Vector2d(0.7, 0.3);
    // Dir(3, 2) density at (0.7, 0.3) is Gamma(5)/(Gamma(3)Gamma(2)) 0.7^2 0.3 = 12 * 0.147.
    EXPECT_NEAR(log_posterior(th, w, peaked) - log_posterior(th, w, flat),
                std::log(12.0 * 0.49 * 0.3) - std::log(1.0), 1e-12);
}

TEST(LogPosterior, OutsideSupportIsMinusInfinity) {
    const WindowView w = sample_window(1, 10);
    const BayesConfig cfg;
    const double ninf = -std::numeric_limits<double>::infinity();
    ThetaDraw th = basic_theta(3);
    EXPECT_TRUE(std::isfinite(log_posterior(th, w, cfg)));
    th.omega = Eigen::Vector3d(0.6, 0.6, -0.2);
    EXPECT_EQ(log_posterior(th, w, cfg), ninf);
    th = basic_theta(3);
    th.omega = Eigen::Vector3d(0.5, 0.5, 0.5);
    EXPECT_EQ(log_posterior(th, w, cfg), ninf);
    th = basic_theta(3);
    th.lambda = 1.5;
    EXPECT_EQ(log_posterior(th, w, cfg), ninf);
    th = basic_theta(3);
    th.sigma2 = 0.0;
    EXPECT_EQ(log_posterior(th, w, cfg), ninf);
    th = basic_theta(3);
    th.phi(1) = 1.0;
    EXPECT_EQ(log_posterior(th, w, cfg), ninf);
    th = basic_theta(3);
    th.ar_var(2) = -1.0;
    EXPECT_EQ(log_posterior(th, w, cfg), ninf);
    th = basic_theta(2);
    EXPECT_THROW(log_posterior(th, w, cfg), ContractError);
}

TEST(LogPosterior, SigmaDoublingWithUniformDiscount) {
    // Doubling sigma2 moves the likelihood by -L/2 log 2 + wssr / (4 sigma2).
    const WindowView w = sample_window(2, 12);
    BayesConfig cfg;
    ThetaDraw th = basic_theta(3);
    th.lambda = 0.5;
    const double base = log_posterior(th, w, cfg);
    ThetaDraw doubled = th;
    doubled.sigma2 = 2.0 * th.sigma2;
    const auto p = oracle::closed_form_discount(0.5, 12);
    double wssr = 0.0;
    for (Eigen::Index t = 0; t < 12; ++t) {
        const double r = w.y(t) - th.omega0 - w.X.row(t).dot(th.omega);
        wssr += p[static_cast<std::size_t>(t)] * r * r;
    }
    const double lik_change = -6.0 * std::log(2.0) + wssr / (4.0 * th.sigma2);
    const double prior_change =
        inv_gamma_lpdf(doubled.sigma2, 0.1, 0.1) - inv_gamma_lpdf(th.sigma2, 0.1, 0.1);
    EXPECT_NEAR(log_posterior(doubled, w, cfg) - base, lik_change + prior_change, 1e-10);
}

TEST(MissingCell, ConditionalMatchesJointQuadratic) {
    // The full conditional of one cell is Gaussian, so the joint log density is an exact
    // quadratic in that cell: read mean and variance off three evaluations.
    WindowView w = sample_window(3, 15);
    for (const Eigen::Index t : {Eigen::Index{0}, Eigen::Index{7}, Eigen::Index{14}}) {
        WindowView wm = w;
        wm.X(t, 1) = std::numeric_limits<double>::quiet_NaN();
        const BayesConfig cfg;
        ThetaDraw th = basic_theta(3, 1);
        th.omega = Eigen::Vector3d(0.2, 0.5, 0.3);
        const auto at = [&](double x) {
            th.imputed(0) = x;
            return log_posterior(th, wm, cfg);
        };
        const double h = 0.5;
        const double x0 = 1.0;
        const double f0 = at(x0);
        const double fp = at(x0 + h);
        const double fm = at(x0 - h);
        const double d2 = (fp - 2.0 * f0 + fm) / (h * h);
        const double d1 = (fp - fm) / (2.0 * h);
        const double var = -1.0 / d2;
        const double mean = x0 - d1 / d2;
        Eigen::MatrixXd X = w.X;
        X(t, 1) = 123.0;  // value of the cell itself must not matter
        th.imputed(0) = x0;
        const auto [cm, cv] = missing_cell_conditional(wm, X, th, t, 1);
        EXPECT_NEAR(cm, mean, 1e-8) << t;
        EXPECT_NEAR(cv, var, 1e-8) << t;
    }
}

TEST(MissingCell, NoDependenceGivesArMarginal) {
    // First row, phi = 0 and zero weight: the cell is N(gamma, s2).
    WindowView w = sample_window(4, 6);
    w.X(0, 2) = std::numeric_limits<double>::quiet_NaN();
    ThetaDraw th = basic_theta(3, 1);
    th.omega = Eigen::Vector3d(0.5, 0.5, 0.0);
    th.phi = Eigen::Vector3d(0.0, 0.0, 0.0);
    th.gamma(2) = 0.7;
    th.ar_var(2) = 0.09;
    Eigen::MatrixXd X = w.X;
    X(0, 2) = 0.0;
    const auto [m, v] = missing_cell_conditional(w, X, th, 0, 2);
    EXPECT_NEAR(m, 0.7, 1e-12);
    EXPECT_NEAR(v, 0.09, 1e-12);
    X(0, 2) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(missing_cell_conditional(w, X, th, 0, 2), ContractError);
}

TEST(Sampler, PriorOnlyRecoversDirichletAndUniformMoments) {
    const WindowView w = sample_window(5, 10);
    BayesConfig cfg;
    cfg.use_likelihood = false;
    cfg.chains = 2;
    cfg.burnin = 1000;
    cfg.keep = 20000;
    cfg.seed = 11;
    const PosteriorDraws d = sample_posterior(w, cfg);
    for (Eigen::Index j = 0; j < 3; ++j) {
        const auto [mean, var] = oracle::moments(d.omega.col(j));
        EXPECT_NEAR(mean, 1.0 / 3.0, 0.02) << j;
        EXPECT_NEAR(var, 2.0 / 36.0, 0.1 * 2.0 / 36.0) << j;  // Dir(1,1,1): (m-1)/(m^2(m+1))
    }
    const auto [lm, lv] = oracle::moments(d.lambda);
    EXPECT_NEAR(lm, 0.5, 0.02);
    EXPECT_NEAR(lv, 1.0 / 12.0, 0.1 / 12.0);
}

TEST(Sampler, DeterministicAndIndependentOfThreading) {
    const WindowView w = sample_window(6, 20);
    BayesConfig cfg = small_config(42);
    const PosteriorDraws a = sample_posterior(w, cfg);
    const PosteriorDraws b = sample_posterior(w, cfg);
    cfg.parallel_chains = false;
    const PosteriorDraws c = sample_posterior(w, cfg);
    EXPECT_EQ(a.parameter_matrix(), b.parameter_matrix());
    EXPECT_EQ(a.parameter_matrix(), c.parameter_matrix());
    EXPECT_EQ(a.predictive, c.predictive);
    cfg.seed = 43;
    EXPECT_NE(a.parameter_matrix(), sample_posterior(w, cfg).parameter_matrix());
}

TEST(Sampler, DrawsRespectSupport) {
    WindowView w = sample_window(7, 24);
    w.X(3, 0) = std::numeric_limits<double>::quiet_NaN();
    w.X(10, 2) = std::numeric_limits<double>::quiet_NaN();
    const PosteriorDraws d = sample_posterior(w, small_config(7));
    ASSERT_EQ(d.size(), 2000);
    ASSERT_EQ(d.missing.size(), 2u);
    EXPECT_TRUE(d.parameter_matrix().allFinite());
    for (Eigen::Index s = 0; s < d.size(); ++s) {
        EXPECT_TRUE((d.omega.row(s).array() >= 0.0).all());
        EXPECT_NEAR(d.omega.row(s).sum(), 1.0, 1e-12);
        EXPECT_GT(d.lambda(s), 0.0);
        EXPECT_LT(d.lambda(s), 1.0);
        EXPECT_GT(d.sigma2(s), 0.0);
        EXPECT_TRUE((d.phi.row(s).array().abs() < 1.0).all());
        EXPECT_TRUE((d.ar_var.row(s).array() > 0.0).all());
        EXPECT_TRUE(std::isfinite(log_posterior(d.draw(s), w, BayesConfig{})));
    }
    for (const auto& st : d.stats) {
        EXPECT_GT(st.accept_omega, 0.05);
        EXPECT_LT(st.accept_omega, 0.9);
    }
}

TEST(Sampler, SigmaGibbsStepMatchesInverseGamma) {
    const WindowView w = sample_window(8, 30);
    ThetaDraw init = basic_theta(3);
    init.omega = Eigen::Vector3d(0.5, 0.3, 0.2);
    init.omega0 = 0.2;
    init.lambda = 0.1;
    BayesConfig cfg;
    cfg.chains = 1;
    cfg.burnin = 0;
    cfg.keep = 50000;
    cfg.seed = 3;
    cfg.freeze_omega = cfg.freeze_omega0 = cfg.freeze_lambda = true;
    cfg.freeze_ar = cfg.freeze_missing = true;
    const PosteriorDraws d = sample_posterior(w, cfg, init);
    const auto p = oracle::closed_form_discount(0.1, 30);
    double wssr = 0.0;
    for (Eigen::Index t = 0; t < 30; ++t) {
        const double r = w.y(t) - 0.2 - w.X.row(t).dot(init.omega);
        wssr += p[static_cast<std::size_t>(t)] * r * r;
    }
    const double a = 0.1 + 15.0;
    const double b = 0.1 + 0.5 * wssr;
    const auto [mean, var] = oracle::moments(d.sigma2);
    EXPECT_NEAR(mean / (b / (a - 1.0)), 1.0, 0.02);
    EXPECT_NEAR(var / (b * b / ((a - 1.0) * (a - 1.0) * (a - 2.0))), 1.0, 0.1);
    EXPECT_TRUE((d.omega0.array() == 0.2).all());
    EXPECT_TRUE((d.lambda.array() == 0.1).all());
}

TEST(Sampler, ConfigErrors) {
    const WindowView w = sample_window(9, 10);
    BayesConfig cfg = small_config(1);
    cfg.freeze_lambda = true;
    EXPECT_THROW(sample_posterior(w, cfg), ConfigError);
    cfg = small_config(1);
    cfg.alpha = {1.0, 1.0};
    EXPECT_THROW(sample_posterior(w, cfg), ConfigError);
    cfg = small_config(1);
    cfg.keep = 0;
    EXPECT_THROW(sample_posterior(w, cfg), ConfigError);
    cfg = small_config(1);
    cfg.lambda_hi = 0.0;
    EXPECT_THROW(sample_posterior(w, cfg), ConfigError);
}

TEST(Predictive, DrawsCentreOnRegressionMean) {
    const WindowView w = sample_window(10, 40);
    const PosteriorDraws d = sample_posterior(w, small_config(10));
    const Eigen::VectorXd x = w.target_x;
    const Eigen::VectorXd draws = predictive_draws(d, x, 5);
    ASSERT_EQ(draws.size(), d.size());
    const Eigen::VectorXd mu = (d.omega * x).array() + d.omega0.array();
    const auto [pm, pv] = oracle::moments(draws);
    const auto [mm, mv] = oracle::moments(mu);
    EXPECT_NEAR(pm, mm, 4.0 * std::sqrt(pv / static_cast<double>(draws.size())));
    EXPECT_NEAR(pv, mv + d.sigma2.mean(), 0.15 * pv);
    EXPECT_EQ(draws, predictive_draws(d, x, 5));
    EXPECT_EQ(d.predictive.size(), d.size());
    EXPECT_THROW(predictive_draws(d, Eigen::Vector2d(1, 1), 5), ContractError);
}

TEST(Predictive, SummaryQuantiles) {
    Eigen::VectorXd v(101);
    for (int i = 0; i <= 100; ++i) v(i) = 100 - i;
    const PredictiveSummary s = summarize_predictive(v, 0.9);
    EXPECT_DOUBLE_EQ(s.mean, 50.0);
    EXPECT_DOUBLE_EQ(s.lower, 5.0);
    EXPECT_DOUBLE_EQ(s.upper, 95.0);
    EXPECT_THROW(summarize_predictive(Eigen::VectorXd(), 0.9), ContractError);
    EXPECT_THROW(summarize_predictive(v, 1.0), ContractError);
}

TEST(Imputation, PosteriorMeanFillsOnlyMissingCells) {
    WindowView w = sample_window(11, 20);
    const Eigen::MatrixXd original = w.X;
    w.X(5, 0) = std::numeric_limits<double>::quiet_NaN();
    w.X(6, 0) = std::numeric_limits<double>::quiet_NaN();
    const PosteriorDraws d = sample_posterior(w, small_config(12));
    const Eigen::MatrixXd filled = imputed_posterior_mean(w, d);
    EXPECT_TRUE(filled.allFinite());
    for (Eigen::Index t = 0; t < 20; ++t) {
        for (Eigen::Index j = 0; j < 3; ++j) {
            if (!((t == 5 || t == 6) && j == 0)) EXPECT_EQ(filled(t, j), original(t, j));
        }
    }
    EXPECT_DOUBLE_EQ(filled(5, 0), d.imputed.col(0).mean());
    // Neighbouring AR values pull the imputation towards the truth more than a wild guess.
    EXPECT_LT(std::abs(filled(5, 0) - original(5, 0)), 1.0);
}

TEST(Draws, ParameterNamesMatchMatrix) {
    WindowView w = sample_window(13, 10);
    w.X(2, 1) = std::numeric_limits<double>::quiet_NaN();
    BayesConfig cfg = small_config(1);
    cfg.burnin = 10;
    cfg.keep = 5;
    const PosteriorDraws d = sample_posterior(w, cfg);
    const auto names = d.parameter_names();
    EXPECT_EQ(static_cast<Eigen::Index>(names.size()), d.parameter_matrix().cols());
    EXPECT_EQ(names.front(), "omega_1");
    EXPECT_EQ(names.back(), "x_3_2");
    EXPECT_EQ(d.chain.front(), 0);
    EXPECT_EQ(d.chain.back(), 1);
}
