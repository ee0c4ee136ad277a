#include "fcomb/bayes.hpp"

#include "fcomb/discount.hpp"
#include "fcomb/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <thread>

namespace fcomb {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double normal_logpdf(double x, double mean, double var) {
    const double d = x - mean;
    return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

double inv_gamma_logpdf(double x, double shape, double rate) {
    return shape * std::log(rate) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - rate / x;
}

// Reflects x into (lo, hi); proposals stay symmetric.
double reflect(double x, double lo, double hi) {
    const double w = hi - lo;
    double r = std::fmod(x - lo, 2.0 * w);
    if (r < 0.0) r += 2.0 * w;
    return r <= w ? lo + r : hi - (r - w);
}

std::vector<std::pair<Eigen::Index, Eigen::Index>> missing_cells(const Eigen::MatrixXd& X) {
    std::vector<std::pair<Eigen::Index, Eigen::Index>> cells;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        for (Eigen::Index t = 0; t < X.rows(); ++t) {
            if (std::isnan(X(t, j))) cells.emplace_back(t, j);
        }
    }
    return cells;
}

Eigen::VectorXd observed_column_means(const Eigen::MatrixXd& X) {
    Eigen::VectorXd xbar(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        double s = 0.0;
        int n = 0;
        for (Eigen::Index t = 0; t < X.rows(); ++t) {
            if (!std::isnan(X(t, j))) {
                s += X(t, j);
                ++n;
            }
        }
        if (n == 0) throw ContractError("every analyst column needs at least one observed forecast");
        xbar(j) = s / n;
    }
    return xbar;
}

// Sum of squared AR(1) innovations of one column.
double ar_sum_squares(const Eigen::Ref<const Eigen::VectorXd>& x, double phi, double gamma) {
    double s = (x(0) - gamma) * (x(0) - gamma);
    for (Eigen::Index l = 1; l < x.size(); ++l) {
        const double e = x(l) - gamma - phi * (x(l - 1) - gamma);
        s += e * e;
    }
    return s;
}

Eigen::MatrixXd filled(const Eigen::MatrixXd& X,
                       const std::vector<std::pair<Eigen::Index, Eigen::Index>>& cells,
                       const Eigen::VectorXd& values) {
    Eigen::MatrixXd out = X;
    for (std::size_t k = 0; k < cells.size(); ++k) {
        out(cells[k].first, cells[k].second) = values(static_cast<Eigen::Index>(k));
    }
    return out;
}

struct RandomWalk {
    double log_scale = std::log(0.5);
    long accepted = 0;
    long proposed = 0;

    [[nodiscard]] double scale() const { return std::exp(log_scale); }
    void record(bool accept, bool adapt, long iteration, double target) {
        ++proposed;
        if (accept) ++accepted;
        if (adapt) {
            const double step = std::pow(static_cast<double>(iteration) + 1.0, -0.6);
            log_scale += step * ((accept ? 1.0 : 0.0) - target);
            log_scale = std::clamp(log_scale, -30.0, 5.0);
        }
    }
    [[nodiscard]] double rate() const {
        return proposed > 0 ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
    }
    void reset_counts() { accepted = proposed = 0; }
};

class Chain {
public:
    Chain(const WindowView& window, const BayesConfig& cfg,
          const std::vector<std::pair<Eigen::Index, Eigen::Index>>& cells, std::uint64_t seed,
          int index)
        : cfg_(cfg), cells_(cells), y_(window.y), X_(window.X), target_(window.target_x),
          L_(window.y.size()), m_(window.X.cols()) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(index), 0x5eedu};
        rng_.seed(seq);
        xbar_ = observed_column_means(window.X);
        const Eigen::Index d = std::max<Eigen::Index>(m_ - 1, 0);
        omega_chol_ = Eigen::MatrixXd::Identity(d, d);
        u_mean_ = Eigen::VectorXd::Zero(d);
        u_m2_ = Eigen::MatrixXd::Zero(d, d);
        phi_walk_.resize(static_cast<std::size_t>(m_));
        lambda_walk_.log_scale = std::log(0.1 * (cfg.lambda_hi - cfg.lambda_lo));
    }

    void initialise(const std::optional<ThetaDraw>& init) {
        if (init) {
            th_ = *init;
            if (th_.omega.size() != m_ || th_.phi.size() != m_ || th_.gamma.size() != m_ ||
                th_.ar_var.size() != m_ ||
                th_.imputed.size() != static_cast<Eigen::Index>(cells_.size())) {
                throw ContractError("initial state does not match the window");
            }
        } else {
            random_start();
        }
        for (std::size_t k = 0; k < cells_.size(); ++k) {
            X_(cells_[k].first, cells_[k].second) = th_.imputed(static_cast<Eigen::Index>(k));
        }
        p_ = weights_for(th_.lambda);
        refresh_residuals();
    }

    void sweep(bool adapt, long iteration) {
        if (!cfg_.freeze_missing) update_missing();
        if (!cfg_.freeze_omega) update_omega(adapt, iteration);
        if (!cfg_.freeze_omega0) update_omega0();
        if (!cfg_.freeze_lambda) update_lambda(adapt, iteration);
        if (!cfg_.freeze_sigma2) update_sigma2();
        if (!cfg_.freeze_ar) {
            for (Eigen::Index j = 0; j < m_; ++j) update_ar(j, adapt, iteration);
        }
    }

    void reset_counts() {
        omega_walk_.reset_counts();
        lambda_walk_.reset_counts();
        for (auto& w : phi_walk_) w.reset_counts();
    }

    [[nodiscard]] const ThetaDraw& state() const { return th_; }

    double predictive() {
        std::normal_distribution<double> z;
        return th_.omega0 + th_.omega.dot(target_) + std::sqrt(th_.sigma2) * z(rng_);
    }

    [[nodiscard]] PosteriorDraws::ChainStats stats() const {
        PosteriorDraws::ChainStats s;
        s.accept_omega = omega_walk_.rate();
        s.accept_lambda = lambda_walk_.rate();
        long acc = 0;
        long prop = 0;
        for (const auto& w : phi_walk_) {
            acc += w.accepted;
            prop += w.proposed;
        }
        s.accept_phi = prop > 0 ? static_cast<double>(acc) / static_cast<double>(prop) : 0.0;
        return s;
    }

private:
    [[nodiscard]] Eigen::VectorXd weights_for(double lambda) const {
        const DiscountSchedule s = make_schedule(lambda, static_cast<std::size_t>(L_));
        return Eigen::Map<const Eigen::VectorXd>(s.weights.data(), L_);
    }

    void refresh_residuals() { resid_ = (y_ - X_ * th_.omega).array() - th_.omega0; }

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    double normal() { return std::normal_distribution<double>()(rng_); }
    double inv_gamma(double shape, double rate) {
        return 1.0 / std::gamma_distribution<double>(shape, 1.0 / rate)(rng_);
    }

    void random_start() {
        th_.imputed.resize(static_cast<Eigen::Index>(cells_.size()));
        for (std::size_t k = 0; k < cells_.size(); ++k) {
            th_.imputed(static_cast<Eigen::Index>(k)) = xbar_(cells_[k].second);
            X_(cells_[k].first, cells_[k].second) = xbar_(cells_[k].second);
        }
        th_.omega.resize(m_);
        for (Eigen::Index j = 0; j < m_; ++j) {
            th_.omega(j) = std::gamma_distribution<double>(cfg_.alpha_at(static_cast<std::size_t>(j)), 1.0)(rng_);
            th_.omega(j) = std::max(th_.omega(j), 1e-6);
        }
        th_.omega /= th_.omega.sum();
        const double span = cfg_.lambda_hi - cfg_.lambda_lo;
        th_.lambda = uniform(cfg_.lambda_lo + 0.1 * span, cfg_.lambda_hi - 0.1 * span);
        const Eigen::VectorXd p = weights_for(th_.lambda);
        const Eigen::VectorXd r = y_ - X_ * th_.omega;
        th_.omega0 = p.dot(r);
        const double ss = (p.array() * (r.array() - th_.omega0).square()).sum();
        th_.sigma2 = std::max(ss / static_cast<double>(L_), 1e-10) * std::exp(0.5 * normal());
        th_.phi.resize(m_);
        th_.gamma = xbar_;
        th_.ar_var.resize(m_);
        const double phi_mid = 0.5 * (cfg_.phi_lo + cfg_.phi_hi);
        const double phi_half = 0.25 * (cfg_.phi_hi - cfg_.phi_lo);
        for (Eigen::Index j = 0; j < m_; ++j) {
            th_.phi(j) = uniform(phi_mid - phi_half, phi_mid + phi_half);
            const double v = (X_.col(j).array() - xbar_(j)).square().mean();
            th_.ar_var(j) = std::max(v, 1e-8);
        }
    }

    void update_missing() {
        for (std::size_t k = 0; k < cells_.size(); ++k) {
            const auto [t, j] = cells_[k];
            const auto [mean, var] = conditional(t, j);
            const double v = mean + std::sqrt(var) * normal();
            resid_(t) -= th_.omega(j) * (v - X_(t, j));
            X_(t, j) = v;
            th_.imputed(static_cast<Eigen::Index>(k)) = v;
        }
    }

public:
    [[nodiscard]] std::pair<double, double> conditional(Eigen::Index t, Eigen::Index j) const {
        const double s2 = th_.ar_var(j);
        const double g = th_.gamma(j);
        const double phi = th_.phi(j);
        double prec = 1.0 / s2;
        double lin = (t == 0 ? g : g + phi * (X_(t - 1, j) - g)) / s2;
        if (t + 1 < L_) {
            const double c = X_(t + 1, j) - g * (1.0 - phi);
            prec += phi * phi / s2;
            lin += phi * c / s2;
        }
        if (cfg_.use_likelihood) {
            const double w = p_(t) / th_.sigma2;
            const double wj = th_.omega(j);
            const double r = resid_(t) + wj * X_(t, j);  // y - omega0 - sum over other analysts
            prec += wj * wj * w;
            lin += wj * r * w;
        }
        return {lin / prec, 1.0 / prec};
    }

    void set_state_for_conditional(const ThetaDraw& th, const Eigen::MatrixXd& X,
                                   const Eigen::VectorXd& y) {
        th_ = th;
        X_ = X;
        y_ = y;
        p_ = weights_for(th_.lambda);
        refresh_residuals();
    }

private:
    [[nodiscard]] double y_quadratic(const Eigen::VectorXd& resid, const Eigen::VectorXd& p) const {
        return (p.array() * resid.array().square()).sum();
    }

    double omega_log_target(const Eigen::VectorXd& omega, const Eigen::VectorXd& resid) const {
        double lt = 0.0;
        for (Eigen::Index j = 0; j < m_; ++j) {
            if (!(omega(j) > 0.0)) return kNegInf;
            lt += cfg_.alpha_at(static_cast<std::size_t>(j)) * std::log(omega(j));  // prior + Jacobian
        }
        if (cfg_.use_likelihood) lt -= 0.5 * y_quadratic(resid, p_) / th_.sigma2;
        return lt;
    }

    void update_omega(bool adapt, long iteration) {
        if (m_ < 2) return;
        const Eigen::Index d = m_ - 1;
        Eigen::VectorXd u(d);
        for (Eigen::Index k = 0; k < d; ++k) u(k) = std::log(th_.omega(k)) - std::log(th_.omega(d));
        Eigen::VectorXd z(d);
        for (Eigen::Index k = 0; k < d; ++k) z(k) = normal();
        const Eigen::VectorXd u_new = u + omega_walk_.scale() * (omega_chol_ * z);
        const double top = std::max(0.0, u_new.maxCoeff());
        Eigen::VectorXd w(m_);
        w.head(d) = (u_new.array() - top).exp();
        w(d) = std::exp(-top);
        w /= w.sum();
        const Eigen::VectorXd resid_new = resid_ - X_ * (w - th_.omega);
        const double log_ratio = omega_log_target(w, resid_new) - omega_log_target(th_.omega, resid_);
        const bool accept = std::log(uniform(0.0, 1.0)) < log_ratio;
        if (accept) {
            th_.omega = w;
            resid_ = resid_new;
        }
        omega_walk_.record(accept, adapt, iteration, cfg_.target_acceptance);
        if (adapt) adapt_omega_covariance(accept ? u_new : u, iteration);
    }

    // Empirical covariance of the log-ratio coordinates, refreshed during burn-in.
    void adapt_omega_covariance(const Eigen::VectorXd& u, long iteration) {
        ++u_count_;
        const Eigen::VectorXd delta = u - u_mean_;
        u_mean_ += delta / static_cast<double>(u_count_);
        u_m2_ += delta * (u - u_mean_).transpose();
        const Eigen::Index d = u.size();
        if (iteration >= 200 && iteration % 100 == 0 && u_count_ > 2 * d + 10) {
            Eigen::MatrixXd cov = u_m2_ / static_cast<double>(u_count_ - 1);
            cov = 0.5 * (cov + cov.transpose());
            cov.diagonal().array() += 1e-10 + 1e-6 * cov.diagonal().mean();
            Eigen::LLT<Eigen::MatrixXd> llt(cov);
            if (llt.info() == Eigen::Success) {
                omega_chol_ = (2.38 / std::sqrt(static_cast<double>(d))) * llt.matrixL().toDenseMatrix();
                if (!cov_installed_) {
                    omega_walk_.log_scale = 0.0;
                    cov_installed_ = true;
                }
            }
        }
    }

    void update_omega0() {
        const double prior_prec = 1.0 / cfg_.omega0_var;
        double prec = prior_prec;
        double lin = 0.0;
        if (cfg_.use_likelihood) {
            const Eigen::VectorXd r = resid_.array() + th_.omega0;  // y - omega'x
            prec += p_.sum() / th_.sigma2;
            lin += p_.dot(r) / th_.sigma2;
        }
        const double v = lin / prec + normal() / std::sqrt(prec);
        resid_.array() -= v - th_.omega0;
        th_.omega0 = v;
    }

    void update_lambda(bool adapt, long iteration) {
        const double proposal = reflect(th_.lambda + lambda_walk_.scale() * normal(), cfg_.lambda_lo,
                                        cfg_.lambda_hi);
        bool accept = true;
        Eigen::VectorXd p_new;
        if (cfg_.use_likelihood) {
            p_new = weights_for(proposal);
            const auto target = [&](const Eigen::VectorXd& p) {
                return 0.5 * p.array().log().sum() - 0.5 * y_quadratic(resid_, p) / th_.sigma2;
            };
            const double log_ratio = target(p_new) - target(p_);
            accept = std::log(uniform(0.0, 1.0)) < log_ratio;
        } else {
            uniform(0.0, 1.0);  // keep the stream aligned with the likelihood-on path
        }
        if (accept) {
            th_.lambda = proposal;
            p_ = cfg_.use_likelihood ? p_new : weights_for(proposal);
        }
        lambda_walk_.record(accept, adapt, iteration, cfg_.target_acceptance);
    }

    void update_sigma2() {
        double shape = cfg_.sigma2_shape;
        double rate = cfg_.sigma2_rate;
        if (cfg_.use_likelihood) {
            shape += 0.5 * static_cast<double>(L_);
            rate += 0.5 * y_quadratic(resid_, p_);
        }
        th_.sigma2 = inv_gamma(shape, rate);
    }

    void update_ar(Eigen::Index j, bool adapt, long iteration) {
        const auto x = X_.col(j);
        double& g = th_.gamma(j);
        double& phi = th_.phi(j);
        double& s2 = th_.ar_var(j);

        // gamma | rest
        {
            double prec = 1.0 / cfg_.gamma_var + 1.0 / s2;
            double lin = xbar_(j) / cfg_.gamma_var + x(0) / s2;
            const double k = 1.0 - phi;
            for (Eigen::Index l = 1; l < L_; ++l) {
                prec += k * k / s2;
                lin += k * (x(l) - phi * x(l - 1)) / s2;
            }
            g = lin / prec + normal() / std::sqrt(prec);
        }
        // phi | rest, random walk reflected into the prior support
        {
            auto& walk = phi_walk_[static_cast<std::size_t>(j)];
            const double proposal = reflect(phi + walk.scale() * normal(), cfg_.phi_lo, cfg_.phi_hi);
            const double log_ratio =
                -0.5 * (ar_sum_squares(x, proposal, g) - ar_sum_squares(x, phi, g)) / s2;
            const bool accept = std::log(uniform(0.0, 1.0)) < log_ratio;
            if (accept) phi = proposal;
            walk.record(accept, adapt, iteration, cfg_.target_acceptance);
        }
        // variance | rest
        s2 = inv_gamma(cfg_.ar_var_shape + 0.5 * static_cast<double>(L_),
                       cfg_.ar_var_rate + 0.5 * ar_sum_squares(x, phi, g));
    }

    const BayesConfig& cfg_;
    const std::vector<std::pair<Eigen::Index, Eigen::Index>>& cells_;
    Eigen::VectorXd y_;
    Eigen::MatrixXd X_;
    Eigen::VectorXd target_;
    Eigen::Index L_;
    Eigen::Index m_;
    Eigen::VectorXd xbar_;
    std::mt19937_64 rng_;

    ThetaDraw th_;
    Eigen::VectorXd p_;
    Eigen::VectorXd resid_;

    RandomWalk omega_walk_;
    RandomWalk lambda_walk_;
    std::vector<RandomWalk> phi_walk_;
    Eigen::MatrixXd omega_chol_;
    Eigen::VectorXd u_mean_;
    Eigen::MatrixXd u_m2_;
    long u_count_ = 0;
    bool cov_installed_ = false;
};

}  // namespace

void BayesConfig::validate() const {
    const auto need = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(what);
    };
    need(omega0_var > 0.0, "omega0 prior variance must be positive");
    need(lambda_hi > lambda_lo && lambda_lo >= 0.0, "lambda prior needs 0 <= lo < hi");
    need(sigma2_shape > 0.0 && sigma2_rate > 0.0, "sigma2 prior shape and rate must be positive");
    need(phi_hi > phi_lo, "AR coefficient prior needs lo < hi");
    need(gamma_var > 0.0, "analyst-mean prior variance must be positive");
    need(ar_var_shape > 0.0 && ar_var_rate > 0.0, "analyst-variance prior must be positive");
    need(chains >= 1, "need at least one chain");
    need(burnin >= 0 && keep >= 1, "burn-in must be >= 0 and keep >= 1");
    need(target_acceptance > 0.0 && target_acceptance < 1.0, "target acceptance must lie in (0, 1)");
    for (double a : alpha) need(a > 0.0, "Dirichlet concentrations must be positive");
}

ThetaDraw PosteriorDraws::draw(Eigen::Index s) const {
    ThetaDraw th;
    th.omega = omega.row(s).transpose();
    th.omega0 = omega0(s);
    th.lambda = lambda(s);
    th.sigma2 = sigma2(s);
    th.phi = phi.row(s).transpose();
    th.gamma = gamma.row(s).transpose();
    th.ar_var = ar_var.row(s).transpose();
    th.imputed = imputed.row(s).transpose();
    return th;
}

std::vector<std::string> PosteriorDraws::parameter_names() const {
    std::vector<std::string> names;
    const Eigen::Index m = num_analysts();
    for (Eigen::Index j = 0; j < m; ++j) names.push_back("omega_" + std::to_string(j + 1));
    names.emplace_back("omega0");
    names.emplace_back("lambda");
    names.emplace_back("sigma2");
    for (Eigen::Index j = 0; j < m; ++j) names.push_back("phi_" + std::to_string(j + 1));
    for (Eigen::Index j = 0; j < m; ++j) names.push_back("gamma_" + std::to_string(j + 1));
    for (Eigen::Index j = 0; j < m; ++j) names.push_back("ar_var_" + std::to_string(j + 1));
    for (const auto& [t, j] : missing) {
        names.push_back("x_" + std::to_string(t + 1) + "_" + std::to_string(j + 1));
    }
    return names;
}

Eigen::MatrixXd PosteriorDraws::parameter_matrix() const {
    const Eigen::Index m = num_analysts();
    const Eigen::Index S = size();
    const auto k = static_cast<Eigen::Index>(missing.size());
    Eigen::MatrixXd P(S, 4 * m + 3 + k);
    P.leftCols(m) = omega;
    P.col(m) = omega0;
    P.col(m + 1) = lambda;
    P.col(m + 2) = sigma2;
    P.middleCols(m + 3, m) = phi;
    P.middleCols(2 * m + 3, m) = gamma;
    P.middleCols(3 * m + 3, m) = ar_var;
    if (k > 0) P.rightCols(k) = imputed;
    return P;
}

double log_posterior(const ThetaDraw& theta, const WindowView& window, const BayesConfig& config) {
    const Eigen::Index L = window.y.size();
    const Eigen::Index m = window.X.cols();
    const auto cells = missing_cells(window.X);
    if (theta.omega.size() != m || theta.imputed.size() != static_cast<Eigen::Index>(cells.size()) ||
        theta.phi.size() != m || theta.gamma.size() != m || theta.ar_var.size() != m) {
        throw ContractError("log_posterior: parameter sizes do not match the window");
    }
    // Support.
    if (!(theta.lambda > config.lambda_lo && theta.lambda < config.lambda_hi)) return kNegInf;
    if (!(theta.sigma2 > 0.0)) return kNegInf;
    if ((theta.omega.array() < 0.0).any() || std::abs(theta.omega.sum() - 1.0) > 1e-10) return kNegInf;
    for (Eigen::Index j = 0; j < m; ++j) {
        if (!(theta.phi(j) > config.phi_lo && theta.phi(j) < config.phi_hi)) return kNegInf;
        if (!(theta.ar_var(j) > 0.0)) return kNegInf;
    }

    const Eigen::MatrixXd X = filled(window.X, cells, theta.imputed);
    const Eigen::VectorXd xbar = observed_column_means(window.X);
    double lp = 0.0;

    if (config.use_likelihood) {
        const DiscountSchedule p = make_schedule(theta.lambda, static_cast<std::size_t>(L));
        for (Eigen::Index t = 0; t < L; ++t) {
            const double mean = theta.omega0 + X.row(t).dot(theta.omega);
            lp += normal_logpdf(window.y(t), mean, theta.sigma2 / p[static_cast<std::size_t>(t)]);
        }
    }
    for (Eigen::Index j = 0; j < m; ++j) {
        const double g = theta.gamma(j);
        const double s2 = theta.ar_var(j);
        lp += normal_logpdf(X(0, j), g, s2);
        for (Eigen::Index l = 1; l < L; ++l) {
            lp += normal_logpdf(X(l, j), g + theta.phi(j) * (X(l - 1, j) - g), s2);
        }
    }

    // Priors.
    double alpha_sum = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
        const double a = config.alpha_at(static_cast<std::size_t>(j));
        alpha_sum += a;
        lp -= std::lgamma(a);
        if (a != 1.0) lp += (a - 1.0) * std::log(theta.omega(j));
    }
    lp += std::lgamma(alpha_sum);
    lp += normal_logpdf(theta.omega0, 0.0, config.omega0_var);
    lp -= std::log(config.lambda_hi - config.lambda_lo);
    lp += inv_gamma_logpdf(theta.sigma2, config.sigma2_shape, config.sigma2_rate);
    for (Eigen::Index j = 0; j < m; ++j) {
        lp -= std::log(config.phi_hi - config.phi_lo);
        lp += normal_logpdf(theta.gamma(j), xbar(j), config.gamma_var);
        lp += inv_gamma_logpdf(theta.ar_var(j), config.ar_var_shape, config.ar_var_rate);
    }
    return lp;
}

std::pair<double, double> missing_cell_conditional(const WindowView& window,
                                                   const Eigen::MatrixXd& X, const ThetaDraw& theta,
                                                   Eigen::Index t, Eigen::Index j) {
    if (X.hasNaN()) throw ContractError("missing_cell_conditional: X must be complete");
    const BayesConfig cfg;
    const std::vector<std::pair<Eigen::Index, Eigen::Index>> none;
    Chain chain(window, cfg, none, 0, 0);
    ThetaDraw th = theta;
    th.imputed.resize(0);
    chain.set_state_for_conditional(th, X, window.y);
    return chain.conditional(t, j);
}

PosteriorDraws sample_posterior(const WindowView& window, const BayesConfig& config,
                                const std::optional<ThetaDraw>& init) {
    config.validate();
    const Eigen::Index L = window.y.size();
    const Eigen::Index m = window.X.cols();
    if (L == 0 || m == 0) throw ContractError("sample_posterior: empty window");
    if (!config.alpha.empty() && static_cast<Eigen::Index>(config.alpha.size()) != m) {
        throw ConfigError("Dirichlet concentration count does not match the analyst count");
    }
    const bool any_frozen = config.freeze_omega || config.freeze_omega0 || config.freeze_lambda ||
                            config.freeze_sigma2 || config.freeze_ar || config.freeze_missing;
    if (any_frozen && !init) throw ConfigError("frozen blocks need an initial state");

    PosteriorDraws out;
    out.chains = config.chains;
    out.keep = config.keep;
    out.missing = missing_cells(window.X);
    const Eigen::Index S = static_cast<Eigen::Index>(config.chains) * config.keep;
    const auto k = static_cast<Eigen::Index>(out.missing.size());
    out.omega.resize(S, m);
    out.omega0.resize(S);
    out.lambda.resize(S);
    out.sigma2.resize(S);
    out.phi.resize(S, m);
    out.gamma.resize(S, m);
    out.ar_var.resize(S, m);
    out.imputed.resize(S, k);
    out.chain.resize(static_cast<std::size_t>(S));
    out.stats.resize(static_cast<std::size_t>(config.chains));
    const bool with_predictive = window.target_x.size() == m && window.target_x.allFinite();
    if (with_predictive) out.predictive.resize(S);

    const auto run_chain = [&](int c) {
        Chain chain(window, config, out.missing, config.seed, c);
        chain.initialise(init);
        for (long it = 0; it < config.burnin; ++it) chain.sweep(true, it);
        chain.reset_counts();
        const Eigen::Index base = static_cast<Eigen::Index>(c) * config.keep;
        for (long it = 0; it < config.keep; ++it) {
            chain.sweep(false, it);
            const ThetaDraw& th = chain.state();
            const Eigen::Index s = base + it;
            out.omega.row(s) = th.omega.transpose();
            out.omega0(s) = th.omega0;
            out.lambda(s) = th.lambda;
            out.sigma2(s) = th.sigma2;
            out.phi.row(s) = th.phi.transpose();
            out.gamma.row(s) = th.gamma.transpose();
            out.ar_var.row(s) = th.ar_var.transpose();
            if (k > 0) out.imputed.row(s) = th.imputed.transpose();
            out.chain[static_cast<std::size_t>(s)] = c;
            if (with_predictive) out.predictive(s) = chain.predictive();
        }
        out.stats[static_cast<std::size_t>(c)] = chain.stats();
    };

    if (config.parallel_chains && config.chains > 1) {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(config.chains));
        for (int c = 0; c < config.chains; ++c) {
            threads.emplace_back([&, c] {
                try {
                    run_chain(c);
                } catch (...) {
                    errors[static_cast<std::size_t>(c)] = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    } else {
        for (int c = 0; c < config.chains; ++c) run_chain(c);
    }
    return out;
}

Eigen::VectorXd predictive_draws(const PosteriorDraws& draws, const Eigen::VectorXd& target_x,
                                 std::uint64_t seed) {
    if (target_x.size() != draws.num_analysts() || !target_x.allFinite()) {
        throw ContractError("predictive_draws: target forecasts must be complete");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    Eigen::VectorXd out(draws.size());
    for (Eigen::Index s = 0; s < draws.size(); ++s) {
        out(s) = draws.omega0(s) + draws.omega.row(s).dot(target_x) +
                 std::sqrt(draws.sigma2(s)) * z(rng);
    }
    return out;
}

PredictiveSummary summarize_predictive(const Eigen::VectorXd& draws, double coverage) {
    if (draws.size() == 0) throw ContractError("summarize_predictive: no draws");
    if (!(coverage > 0.0 && coverage < 1.0)) throw ContractError("coverage must lie in (0, 1)");
    std::vector<double> v(draws.data(), draws.data() + draws.size());
    std::sort(v.begin(), v.end());
    const auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    PredictiveSummary s;
    s.mean = draws.mean();
    s.lower = quantile(0.5 * (1.0 - coverage));
    s.upper = quantile(1.0 - 0.5 * (1.0 - coverage));
    return s;
}

Eigen::MatrixXd imputed_posterior_mean(const WindowView& window, const PosteriorDraws& draws) {
    Eigen::MatrixXd X = window.X;
    for (std::size_t k = 0; k < draws.missing.size(); ++k) {
        X(draws.missing[k].first, draws.missing[k].second) =
            draws.imputed.col(static_cast<Eigen::Index>(k)).mean();
    }
    return X;
}

void write_draws_csv(const std::string& path, const PosteriorDraws& draws) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    const auto names = draws.parameter_names();
    const Eigen::MatrixXd P = draws.parameter_matrix();
    os << "chain";
    for (const auto& n : names) os << ',' << n;
    os << '\n' << std::setprecision(17);
    for (Eigen::Index s = 0; s < P.rows(); ++s) {
        os << draws.chain[static_cast<std::size_t>(s)];
        for (Eigen::Index c = 0; c < P.cols(); ++c) os << ',' << P(s, c);
        os << '\n';
    }
}

}  // namespace fcomb
