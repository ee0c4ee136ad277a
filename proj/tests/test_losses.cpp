#include "fcomb/errors.hpp"
#include "fcomb/losses.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace fcomb;

TEST(Consensus, Means) {
    EXPECT_DOUBLE_EQ(consensus(std::vector<double>{1, 3}), 2.0);
    EXPECT_DOUBLE_EQ(consensus(std::vector<double>{5}), 5.0);
    EXPECT_DOUBLE_EQ(consensus(std::vector<double>{0, 0, 6}), 2.0);
    EXPECT_THROW(consensus(std::vector<double>{}), DomainError);
}

TEST(RelativeBias, Examples) {
    const RelativeBias r = relative_bias(10, 9, 8);
    EXPECT_DOUBLE_EQ(r.value, 0.5);
    EXPECT_DOUBLE_EQ(r.numerator, 1.0);
    EXPECT_DOUBLE_EQ(r.denominator, 2.0);
    EXPECT_FALSE(r.degenerate);
    EXPECT_EQ(relative_bias(3, 3, 1).value, 0.0);
    const RelativeBias d = relative_bias(4, 2, 4);
    EXPECT_TRUE(d.degenerate);
    EXPECT_TRUE(std::isnan(d.value));
}

TEST(SquaredError, Examples) {
    EXPECT_EQ(squared_error_loss(2, 2), 0.0);
    EXPECT_EQ(squared_error_loss(3, 1), 4.0);
    EXPECT_EQ(squared_error_loss(1, 3), 4.0);
}

TEST(HitRateLoss, Examples) {
    EXPECT_NEAR(hit_rate_loss(0.5, 0), std::log(2.0), 1e-15);
    EXPECT_NEAR(hit_rate_loss(0.5, 1), std::log(2.0), 1e-15);
    EXPECT_NEAR(hit_rate_loss(0.9, 0), -std::log(0.1), 1e-12);
    EXPECT_LT(hit_rate_loss(1.0 - 1e-9, 1), 1e-8);
    EXPECT_TRUE(std::isfinite(hit_rate_loss(1.0, 0)));
    EXPECT_TRUE(std::isfinite(hit_rate_loss(0.0, 1)));
    EXPECT_NEAR(hit_rate_loss(0.0, 1), -std::log(kProbFloor), 1e-9);
}

TEST(HitRateLoss, ConvexInLogOdds) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-8, 8);
    const auto loss = [](double eta, int y) { return hit_rate_loss(1.0 / (1.0 + std::exp(-eta)), y); };
    for (int i = 0; i < 2000; ++i) {
        const double a = u(rng);
        const double b = u(rng);
        const int y = i % 2;
        EXPECT_LE(loss(0.5 * (a + b), y), 0.5 * (loss(a, y) + loss(b, y)) + 1e-12);
    }
}

TEST(WinRateLoss, Examples) {
    EXPECT_EQ(win_rate_loss(relative_bias(10, 9, 8)), 0);     // R = 0.5
    EXPECT_EQ(win_rate_loss(relative_bias(0, 2, -1)), 1);     // R = -2
    EXPECT_EQ(win_rate_loss(relative_bias(5, 5, 1)), 0);      // R = 0
    EXPECT_EQ(win_rate_loss(relative_bias(5, 1, 1)), 0);      // R = 1, tie counts as a win
    EXPECT_EQ(win_rate_loss(relative_bias(5, 9, 1)), 0);      // R = -1
    EXPECT_EQ(win_rate_loss(relative_bias(5, 3, 5)), 1);      // degenerate
    EXPECT_FALSE(is_win(relative_bias(5, 3, 5)));
}

TEST(WinRateLoss, EquivalentToCloserThanConsensus) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> z;
    for (int i = 0; i < 10000; ++i) {
        const double y = z(rng);
        const double opt = z(rng);
        const double eq = z(rng);
        const bool closer = std::abs(y - opt) < std::abs(y - eq);
        EXPECT_EQ(win_rate_loss(relative_bias(y, opt, eq)) == 0, closer);
    }
}

TEST(BinaryTarget, StrictInequality) {
    EXPECT_EQ(binary_target(2, 1), 1);
    EXPECT_EQ(binary_target(1, 2), 0);
    EXPECT_EQ(binary_target(1, 1), 0);
}

TEST(ClassifyHit, OrderingScenarios) {
    // (yhat_opt, y, yhat_eq) realised with the values 1, 2, 3.
    EXPECT_EQ(classify_hit(2, 1, 3), HitOutcome::hit);     // 1: opt < y < eq
    EXPECT_EQ(classify_hit(1, 2, 3), HitOutcome::hit);     // 2: y < opt < eq
    EXPECT_EQ(classify_hit(1, 3, 2), HitOutcome::no_hit);  // 3: y < eq < opt
    EXPECT_EQ(classify_hit(3, 1, 2), HitOutcome::no_hit);  // 4: opt < eq < y
    EXPECT_EQ(classify_hit(2, 3, 1), HitOutcome::hit);     // 5: eq < y < opt
    EXPECT_EQ(classify_hit(3, 2, 1), HitOutcome::hit);     // 6: eq < opt < y
}

TEST(ClassifyHit, RandomOrderingsAgreeWithTruthTable) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-5, 5);
    std::vector<int> seen(7, 0);
    for (int i = 0; i < 10000; ++i) {
        const double y = u(rng);
        const double opt = u(rng);
        const double eq = u(rng);
        const oracle::Scenario s = oracle::scenario_of(y, opt, eq);
        ++seen[static_cast<std::size_t>(s.id)];
        EXPECT_EQ(classify_hit(y, opt, eq) == HitOutcome::hit, s.hit);
        EXPECT_EQ(binary_target(y, eq), s.y_tilde);
        EXPECT_EQ(binary_target(opt, eq), s.yhat_tilde);
        // The relative-bias face R < 1 gives the same answer on strict orderings.
        EXPECT_EQ(is_hit(y, opt, eq), s.hit);
    }
    for (int k = 1; k <= 6; ++k) EXPECT_GT(seen[static_cast<std::size_t>(k)], 0) << k;
}

TEST(ClassifyHit, TiesMapToZero) {
    // y equals the consensus: target 0, so a forecast below the consensus is a hit.
    EXPECT_EQ(classify_hit(1, 0, 1), HitOutcome::hit);
    EXPECT_EQ(classify_hit(1, 2, 1), HitOutcome::no_hit);
    EXPECT_TRUE(is_hit(1, 0, 1));
    EXPECT_FALSE(is_hit(1, 2, 1));
}

TEST(Surrogate, CdfValues) {
    SurrogateSpec s;
    s.gamma = 0.7;
    s.z0 = 0.3;
    for (auto fam : {SurrogateFamily::cauchy, SurrogateFamily::logistic}) {
        s.family = fam;
        EXPECT_DOUBLE_EQ(surrogate_cdf(s, 0.3), 0.5);
        EXPECT_GT(surrogate_cdf(s, 1e6), 1.0 - 1e-5);
        EXPECT_LT(surrogate_cdf(s, -1e6), 1e-5);
    }
    s.family = SurrogateFamily::cauchy;
    EXPECT_NEAR(surrogate_cdf(s, 0.3 + 0.7), 0.75, 1e-15);
    s.family = SurrogateFamily::logistic;
    EXPECT_NEAR(surrogate_cdf(s, 0.3 + 0.7 * std::log(3.0)), 0.75, 1e-15);
    EXPECT_GT(surrogate_cdf(s, -30), 0.0);
    EXPECT_GE(surrogate_cdf(s, -800), 0.0);
}

TEST(Surrogate, MonotoneAndApproachesIndicator) {
    SurrogateSpec s;
    for (auto fam : {SurrogateFamily::cauchy, SurrogateFamily::logistic}) {
        s.family = fam;
        s.gamma = 0.4;
        double prev = 0.0;
        for (double z = -10; z <= 10; z += 0.01) {
            const double f = surrogate_cdf(s, z);
            EXPECT_GE(f, prev);
            prev = f;
        }
        s.gamma = 1e-6;
        for (double z = 0.01; z <= 5; z += 0.01) {
            EXPECT_LT(std::abs(surrogate_cdf(s, z) - 1.0), 1e-3);
            EXPECT_LT(surrogate_cdf(s, -z), 1e-3);
        }
    }
}

TEST(Calibrate, AsymmetricInterval) {
    for (auto fam : {SurrogateFamily::cauchy, SurrogateFamily::logistic}) {
        const SurrogateSpec s = calibrate_scale(fam, -2.0, 5.0, 0.005);
        EXPECT_LE(std::abs(surrogate_cdf(s, 5.0) - surrogate_cdf(s, -2.0) - 0.995), 1e-8);
        EXPECT_EQ(s.z0, 0.0);
        EXPECT_GT(s.gamma, 0.0);
        EXPECT_DOUBLE_EQ(surrogate_cdf(s, s.z0), 0.5);
    }
}

TEST(Calibrate, SymmetricCauchyClosedForm) {
    // F(a) - F(-a) = (2/pi) atan(a/gamma) = 1 - eps gives gamma = a tan(pi eps / 2).
    for (double a : {0.5, 1.0, 3.0}) {
        for (double eps : {0.005, 0.05, 0.2}) {
            const SurrogateSpec s = calibrate_scale(SurrogateFamily::cauchy, -a, a, eps);
            const double expected = a * std::tan(std::numbers::pi * eps / 2.0);
            EXPECT_NEAR(s.gamma, expected, 1e-9 * std::max(1.0, expected));
        }
    }
}

TEST(Calibrate, DefiningIdentityHoldsOnRandomIntervals) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> lo(-1.0, -0.05);
    std::uniform_real_distribution<double> hi(0.05, 30.0);
    std::uniform_real_distribution<double> eps(0.001, 0.2);
    for (int i = 0; i < 200; ++i) {
        const double a = lo(rng);
        const double b = hi(rng);
        const double e = eps(rng);
        for (auto fam : {SurrogateFamily::cauchy, SurrogateFamily::logistic}) {
            const SurrogateSpec s = calibrate_scale(fam, a, b, e);
            EXPECT_LE(std::abs(surrogate_cdf(s, b) - surrogate_cdf(s, a) - (1.0 - e)), 1e-10);
        }
    }
}

TEST(Calibrate, Errors) {
    EXPECT_THROW(calibrate_scale(SurrogateFamily::cauchy, 0.0, 0.0, 0.005), CalibrationError);
    EXPECT_THROW(calibrate_scale(SurrogateFamily::cauchy, 1.0, 0.0, 0.005), CalibrationError);
    // An interval that does not contain the location cannot hold mass 0.995.
    EXPECT_THROW(calibrate_scale(SurrogateFamily::logistic, 0.5, 2.0, 0.005), CalibrationError);
    EXPECT_THROW(calibrate_scale(SurrogateFamily::cauchy, -2.0, 5.0, 0.7), CalibrationError);
}

TEST(EmpiricalBounds, SingleAnalystFallsBack) {
    Eigen::MatrixXd X(3, 1);
    X << 1.0, 2.0, 3.0;
    const WindowView w = make_window(Eigen::Vector3d(1.5, 2.5, 2.0), X, Eigen::VectorXd::Ones(1));
    const auto [lo, hi] = empirical_bounds(w);
    EXPECT_EQ(lo, 0.0);
    EXPECT_EQ(hi, 0.0);
    const SurrogateSpec s = calibrate_for_window(w, SurrogateFamily::cauchy, 0.005);
    EXPECT_TRUE(s.used_fallback);
    EXPECT_EQ(s.z_min, kFallbackZMin);
    EXPECT_EQ(s.z_max, kFallbackZMax);
}

TEST(EmpiricalBounds, ExactAnalystGivesMinusOne) {
    Eigen::MatrixXd X(3, 2);
    X << 1.0, 5.0, 2.0, 7.0, 3.0, 1.0;
    const Eigen::Vector3d y = X.col(0);
    const WindowView w = make_window(y, X, Eigen::Vector2d(1, 1));
    EXPECT_EQ(empirical_bounds(w).first, -1.0);
}

TEST(EmpiricalBounds, MatchesEnumeration) {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> z;
    for (int rep = 0; rep < 50; ++rep) {
        Eigen::MatrixXd X(2, 2);
        for (int k = 0; k < 4; ++k) X(k / 2, k % 2) = z(rng);
        const Eigen::Vector2d y(z(rng), z(rng));
        const WindowView w = make_window(y, X, Eigen::Vector2d(0, 0));
        double lo = 1e300;
        double hi = -1e300;
        for (int t = 0; t < 2; ++t) {
            const double c = 0.5 * (X(t, 0) + X(t, 1));
            for (int j = 0; j < 2; ++j) {
                const double v = std::abs((y(t) - X(t, j)) / (y(t) - c)) - 1.0;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
        const auto [blo, bhi] = empirical_bounds(w);
        EXPECT_DOUBLE_EQ(blo, lo);
        EXPECT_DOUBLE_EQ(bhi, hi);
    }
}

TEST(EmpiricalBounds, AllRowsDegenerateThrows) {
    Eigen::MatrixXd X(2, 2);
    X << 1, 3, 2, 4;
    const WindowView w = make_window(Eigen::Vector2d(2, 3), X, Eigen::Vector2d(1, 1));
    EXPECT_THROW(empirical_bounds(w), CalibrationError);
    EXPECT_TRUE(calibrate_for_window(w, SurrogateFamily::logistic, 0.005).used_fallback);
}
