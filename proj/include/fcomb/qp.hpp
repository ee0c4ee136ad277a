#pragma once

#include "fcomb/discount.hpp"
#include "fcomb/errors.hpp"
#include "fcomb/panel.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace fcomb {

/// Intercept plus simplex weights, with the solver's bookkeeping attached.
struct WeightSolution {
    double omega0 = 0.0;
    Eigen::VectorXd omega;
    double lambda = 0.0;
    double objective = 0.0;  // discounted loss at the solution

    struct Diagnostics {
        int iterations = 0;
        int evaluations = 0;
        bool converged = false;
        bool budget_exhausted = false;
        std::vector<int> active_set;          // indices into the inequality rows (omega_j >= 0)
        Eigen::VectorXd multipliers;          // one per constraint row, 0 when inactive
        std::vector<double> best_history;     // best-so-far objective (derivative-free solver)
        double final_radius = 0.0;
    } diagnostics;

    [[nodiscard]] std::size_t num_weights() const { return static_cast<std::size_t>(omega.size()); }
};

/// min 1/2 v'Dv - c'v over v = (omega0, omega) (or v = omega without intercept)
/// subject to sum(omega) = 1 and omega >= 0.
struct QuadraticProgram {
    Eigen::MatrixXd D;      // after positive-definite repair
    Eigen::MatrixXd D_raw;  // X'WX as built
    Eigen::VectorXd c;
    double constant = 0.0;  // y'Wy, dropped from the minimization
    bool has_intercept = true;
    double lambda = 0.0;

    [[nodiscard]] Eigen::Index dimension() const { return c.size(); }
    [[nodiscard]] Eigen::Index num_weights() const {
        return has_intercept ? c.size() - 1 : c.size();
    }
    /// Constraint rows a_i' v >= b_i; row 0 is the sum-to-one equality.
    [[nodiscard]] Eigen::MatrixXd constraint_matrix() const;
    [[nodiscard]] Eigen::VectorXd constraint_rhs() const;
    /// Discounted squared error (y'Wy - 2c'v + v'D_raw v) at v.
    [[nodiscard]] double loss(const Eigen::VectorXd& v) const;
};

/// Thrown when the active-set iteration cap is hit; carries the last iterate.
class QpNonConvergence : public Error {
public:
    QpNonConvergence(const std::string& what, WeightSolution best)
        : Error(what), best_(std::move(best)) {}
    [[nodiscard]] const WeightSolution& best() const { return best_; }

private:
    WeightSolution best_;
};

inline constexpr double kDefaultPdFloor = 1e-8;

/// Requires a complete window (no missing cells) whose length matches the schedule.
QuadraticProgram build_qp(const WindowView& window, const DiscountSchedule& schedule,
                          bool intercept = true, double pd_floor = kDefaultPdFloor);

/// Clips eigenvalues below `relative_floor * max_eigenvalue`; returns D unchanged when
/// it already clears the floor. Throws ContractError on a non-symmetric input.
Eigen::MatrixXd repair_pd(const Eigen::MatrixXd& D, double relative_floor = kDefaultPdFloor);

/// Dual active-set (Goldfarb-Idnani) solve. `max_iterations` <= 0 uses 10 * (n)^2.
WeightSolution solve_qp(const QuadraticProgram& qp, int max_iterations = 0);

/// omega0 + omega' x_{t+1}. Throws ContractError if a target forecast is missing.
double predict(const WindowView& window, const WeightSolution& solution);

/// Discounted squared error of (omega0, omega) over a complete window.
double discounted_squared_error(const WindowView& window, const DiscountSchedule& schedule,
                                double omega0, const Eigen::VectorXd& omega);

/// Clips tiny negative weights to zero and rescales onto the simplex.
void snap_to_simplex(Eigen::VectorXd& omega);

}  // namespace fcomb
