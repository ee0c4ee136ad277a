#pragma once

#include "fcomb/bayes.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace fcomb {

inline constexpr double kRhatThreshold = 1.05;

/// Gelman-Rubin potential scale reduction over the columns of `chains` (one column per
/// chain, equal lengths). With `split` each chain is halved first. NaN when the pooled
/// within-chain variance is zero.
double potential_scale_reduction(const Eigen::MatrixXd& chains, bool split = true);

/// Effective sample size with Geyer's initial monotone positive sequence, pooled over chains.
/// Zero for a constant series.
double effective_sample_size(const Eigen::MatrixXd& chains);

struct ParameterDiagnostic {
    std::string name;
    double mean = 0.0;
    double sd = 0.0;
    double rhat = 0.0;  // NaN with a single chain or a constant series
    double ess = 0.0;
    bool flagged = false;  // rhat above threshold, or a stuck (constant) series
};

struct DiagnosticReport {
    std::vector<ParameterDiagnostic> parameters;
    bool rhat_available = true;
    bool any_flagged = false;
    [[nodiscard]] const ParameterDiagnostic* find(const std::string& name) const;
};

DiagnosticReport diagnose(const PosteriorDraws& draws, double rhat_threshold = kRhatThreshold);

}  // namespace fcomb
