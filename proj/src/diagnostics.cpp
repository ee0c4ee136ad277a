#include "fcomb/diagnostics.hpp"

#include "fcomb/errors.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <limits>

namespace fcomb {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Autocovariance at every lag via zero-padded FFT (biased, divided by n).
Eigen::VectorXd autocovariance(const Eigen::VectorXd& x) {
    const Eigen::Index n = x.size();
    Eigen::Index size = 1;
    while (size < 2 * n) size <<= 1;
    std::vector<double> padded(static_cast<std::size_t>(size), 0.0);
    const double mean = x.mean();
    for (Eigen::Index i = 0; i < n; ++i) padded[static_cast<std::size_t>(i)] = x(i) - mean;
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> freq;
    fft.fwd(freq, padded);
    for (auto& c : freq) c = std::complex<double>(std::norm(c), 0.0);
    std::vector<double> back;
    fft.inv(back, freq);
    Eigen::VectorXd acov(n);
    for (Eigen::Index k = 0; k < n; ++k) acov(k) = back[static_cast<std::size_t>(k)] / static_cast<double>(n);
    return acov;
}

// Exact check: a mean-subtracted variance of repeated 0.3 is not exactly zero.
bool is_constant(const Eigen::MatrixXd& x) { return x.size() == 0 || x.maxCoeff() == x.minCoeff(); }

}  // namespace

double potential_scale_reduction(const Eigen::MatrixXd& chains, bool split) {
    if (is_constant(chains)) return kNaN;
    Eigen::MatrixXd c = chains;
    if (split) {
        const Eigen::Index half = chains.rows() / 2;
        c.resize(half, 2 * chains.cols());
        for (Eigen::Index k = 0; k < chains.cols(); ++k) {
            c.col(2 * k) = chains.col(k).head(half);
            c.col(2 * k + 1) = chains.col(k).segment(chains.rows() - half, half);
        }
    }
    const Eigen::Index n = c.rows();
    const Eigen::Index m = c.cols();
    if (m < 2 || n < 2) return kNaN;
    const Eigen::VectorXd means = c.colwise().mean().transpose();
    double W = 0.0;
    for (Eigen::Index k = 0; k < m; ++k) {
        W += (c.col(k).array() - means(k)).square().sum() / static_cast<double>(n - 1);
    }
    W /= static_cast<double>(m);
    const double B = static_cast<double>(n) * (means.array() - means.mean()).square().sum() /
                     static_cast<double>(m - 1);
    if (!(W > 0.0)) return kNaN;
    const double var_plus = (static_cast<double>(n - 1) / static_cast<double>(n)) * W +
                            B / static_cast<double>(n);
    return std::sqrt(var_plus / W);
}

double effective_sample_size(const Eigen::MatrixXd& chains) {
    const Eigen::Index n = chains.rows();
    const Eigen::Index m = chains.cols();
    if (n < 4 || m < 1 || is_constant(chains)) return 0.0;
    Eigen::MatrixXd acov(n, m);
    for (Eigen::Index k = 0; k < m; ++k) acov.col(k) = autocovariance(chains.col(k));
    const Eigen::VectorXd means = chains.colwise().mean().transpose();
    const double dn = static_cast<double>(n);
    const double W = acov.row(0).mean() * dn / (dn - 1.0);
    double var_plus = W * (dn - 1.0) / dn;
    if (m > 1) var_plus += (means.array() - means.mean()).square().sum() / static_cast<double>(m - 1);
    if (!(var_plus > 0.0)) return 0.0;

    const auto rho = [&](Eigen::Index lag) {
        return 1.0 - (W - acov.row(lag).mean()) / var_plus;
    };
    // Geyer: sum consecutive pairs while positive, forcing the pair sums to be monotone.
    double sum = 0.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t + 1 < n; t += 2) {
        double pair = rho(t) + rho(t + 1);
        if (pair <= 0.0) break;
        pair = std::min(pair, prev_pair);
        prev_pair = pair;
        sum += pair;
    }
    const double tau = -1.0 + 2.0 * sum;
    const double total = dn * static_cast<double>(m);
    if (!(tau > 0.0)) return total;
    return std::min(total / tau, total * std::log10(total));
}

const ParameterDiagnostic* DiagnosticReport::find(const std::string& name) const {
    for (const auto& p : parameters) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

DiagnosticReport diagnose(const PosteriorDraws& draws, double rhat_threshold) {
    if (draws.chains < 1 || draws.keep < 1) throw ContractError("diagnose: no draws");
    const Eigen::MatrixXd P = draws.parameter_matrix();
    const auto names = draws.parameter_names();
    DiagnosticReport report;
    report.rhat_available = draws.chains >= 2;
    for (Eigen::Index c = 0; c < P.cols(); ++c) {
        const Eigen::Map<const Eigen::MatrixXd> chains(P.col(c).data(), draws.keep, draws.chains);
        ParameterDiagnostic d;
        d.name = names[static_cast<std::size_t>(c)];
        d.mean = P.col(c).mean();
        d.sd = std::sqrt((P.col(c).array() - d.mean).square().sum() /
                         std::max<double>(1.0, static_cast<double>(P.rows() - 1)));
        d.ess = effective_sample_size(chains);
        d.rhat = report.rhat_available ? potential_scale_reduction(chains, true) : kNaN;
        const bool stuck = is_constant(P.col(c));
        d.flagged = stuck || (report.rhat_available && !(d.rhat <= rhat_threshold));
        report.any_flagged = report.any_flagged || d.flagged;
        report.parameters.push_back(std::move(d));
    }
    return report;
}

}  // namespace fcomb
