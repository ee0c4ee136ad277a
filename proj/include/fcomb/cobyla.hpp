#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace fcomb {

/// Options for the linear-approximation trust-region minimizer.
struct CobylaOptions {
    double rho_begin = 0.25;
    double rho_end = 1e-6;
    int max_evaluations = 1000;
};

struct CobylaResult {
    Eigen::VectorXd x;
    double f = 0.0;
    int evaluations = 0;
    int iterations = 0;
    bool budget_exhausted = false;
    double final_rho = 0.0;
    std::vector<double> best_history;  // nonincreasing best-so-far values
};

/// Derivative-free minimization of f over the polytope {x : G x <= h}.
///
/// Works like Powell's COBYLA: a simplex of n+1 evaluated points defines a linear model of f,
/// each step minimizes that model over the trust region intersected with the constraints, and
/// the radius shrinks from rho_begin to rho_end. Because the constraints here are linear they
/// are handled exactly, and every evaluated point is feasible. `start` must be feasible; an
/// interior start lets the geometry repairs move off the boundary.
CobylaResult cobyla_linear(const std::function<double(const Eigen::VectorXd&)>& f,
                           const Eigen::MatrixXd& G, const Eigen::VectorXd& h,
                           const Eigen::VectorXd& start, const CobylaOptions& options);

namespace detail {

/// Lawson-Hanson nonnegative least squares: argmin ||C v - e|| subject to v >= 0.
Eigen::VectorXd nnls(const Eigen::MatrixXd& C, const Eigen::VectorXd& e);

}  // namespace detail

}  // namespace fcomb
