#include "fcomb/qp.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>

namespace fcomb {

Eigen::MatrixXd QuadraticProgram::constraint_matrix() const {
    const Eigen::Index n = dimension();
    const Eigen::Index m = num_weights();
    const Eigen::Index off = has_intercept ? 1 : 0;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + 1, n);
    A.block(0, off, 1, m).setOnes();
    for (Eigen::Index j = 0; j < m; ++j) A(j + 1, off + j) = 1.0;
    return A;
}

Eigen::VectorXd QuadraticProgram::constraint_rhs() const {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(num_weights() + 1);
    b(0) = 1.0;
    return b;
}

double QuadraticProgram::loss(const Eigen::VectorXd& v) const {
    return constant - 2.0 * c.dot(v) + v.dot(D_raw * v);
}

Eigen::MatrixXd repair_pd(const Eigen::MatrixXd& D, double relative_floor) {
    if (D.rows() != D.cols()) throw ContractError("repair_pd: matrix is not square");
    const double scale = std::max(1.0, D.cwiseAbs().maxCoeff());
    if ((D - D.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw ContractError("repair_pd: matrix is not symmetric");
    }
    const Eigen::MatrixXd sym = 0.5 * (D + D.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
    Eigen::VectorXd values = eig.eigenvalues();
    const double top = values.cwiseAbs().maxCoeff();
    const double floor = relative_floor * (top > 0.0 ? top : 1.0);
    if (values.minCoeff() >= floor) return D;
    for (Eigen::Index i = 0; i < values.size(); ++i) values(i) = std::max(values(i), floor);
    Eigen::MatrixXd out = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

QuadraticProgram build_qp(const WindowView& window, const DiscountSchedule& schedule,
                          bool intercept, double pd_floor) {
    const Eigen::Index L = window.X.rows();
    const Eigen::Index m = window.X.cols();
    if (static_cast<std::size_t>(L) != schedule.length()) {
        throw ContractError("build_qp: schedule length does not match window length");
    }
    if (!window.complete()) throw ContractError("build_qp: window has missing forecasts");
    if (m == 0) throw ContractError("build_qp: window has no analysts");

    const Eigen::Index off = intercept ? 1 : 0;
    Eigen::MatrixXd X(L, m + off);
    if (intercept) X.col(0).setOnes();
    X.rightCols(m) = window.X;
    const Eigen::Map<const Eigen::VectorXd> w(schedule.weights.data(), L);

    QuadraticProgram qp;
    qp.has_intercept = intercept;
    qp.lambda = schedule.lambda;
    qp.D_raw = X.transpose() * w.asDiagonal() * X;
    qp.D_raw = 0.5 * (qp.D_raw + qp.D_raw.transpose());
    qp.c = X.transpose() * w.asDiagonal() * window.y;
    qp.constant = (w.array() * window.y.array().square()).sum();
    qp.D = repair_pd(qp.D_raw, pd_floor);
    return qp;
}

void snap_to_simplex(Eigen::VectorXd& omega) {
    for (Eigen::Index j = 0; j < omega.size(); ++j) omega(j) = std::max(omega(j), 0.0);
    const double total = omega.sum();
    if (total > 0.0) omega /= total;
}

namespace {

WeightSolution unpack(const QuadraticProgram& qp, const Eigen::VectorXd& v) {
    WeightSolution s;
    s.lambda = qp.lambda;
    if (qp.has_intercept) {
        s.omega0 = v(0);
        s.omega = v.tail(qp.num_weights());
    } else {
        s.omega = v;
    }
    snap_to_simplex(s.omega);
    Eigen::VectorXd snapped(qp.dimension());
    if (qp.has_intercept) {
        snapped << s.omega0, s.omega;
    } else {
        snapped = s.omega;
    }
    s.objective = qp.loss(snapped);
    return s;
}

}  // namespace

WeightSolution solve_qp(const QuadraticProgram& qp, int max_iterations) {
    const Eigen::Index n = qp.dimension();
    if (qp.D.rows() != n || qp.D.cols() != n) throw ContractError("solve_qp: D does not match c");
    if (max_iterations <= 0) max_iterations = static_cast<int>(10 * n * n);

    const Eigen::LLT<Eigen::MatrixXd> chol(qp.D);
    if (chol.info() != Eigen::Success) throw ContractError("solve_qp: D is not positive definite");

    const Eigen::MatrixXd A = qp.constraint_matrix();  // rows a_i
    const Eigen::VectorXd b = qp.constraint_rhs();
    const Eigen::Index rows = A.rows();
    constexpr Eigen::Index kEq = 0;
    const double tol = 1e-12 * std::max(1.0, qp.c.cwiseAbs().maxCoeff());

    Eigen::VectorXd x = chol.solve(qp.c);
    std::vector<Eigen::Index> active;  // constraint rows in the working set
    std::vector<double> sign;          // +1, or -1 for a flipped equality
    std::vector<double> u;             // multipliers for the working set
    double eq_sign = 1.0;

    const auto normal = [&](Eigen::Index i, double sgn) -> Eigen::VectorXd {
        return sgn * A.row(i).transpose();
    };

    int iter = 0;
    bool done = false;
    while (!done) {
        if (iter >= max_iterations) {
            WeightSolution best = unpack(qp, x);
            best.diagnostics.iterations = iter;
            throw QpNonConvergence("solve_qp: active-set iteration cap reached", std::move(best));
        }
        ++iter;

        // Pick the constraint to add: the equality first, then the most violated bound.
        Eigen::Index p = -1;
        double p_sign = 1.0;
        const bool eq_active = std::find(active.begin(), active.end(), kEq) != active.end();
        if (!eq_active) {
            p = kEq;
            const double s = A.row(kEq).dot(x) - b(kEq);
            p_sign = s > 0.0 ? -1.0 : 1.0;
            eq_sign = p_sign;
        } else {
            double worst = -tol;
            for (Eigen::Index i = 1; i < rows; ++i) {
                if (std::find(active.begin(), active.end(), i) != active.end()) continue;
                const double s = A.row(i).dot(x) - b(i);
                if (s < worst) {
                    worst = s;
                    p = i;
                }
            }
        }
        if (p < 0) {
            done = true;
            break;
        }

        const Eigen::VectorXd np = normal(p, p_sign);
        const double bp = p_sign * b(p);
        double up = 0.0;

        for (;;) {
            const auto q = static_cast<Eigen::Index>(active.size());
            Eigen::MatrixXd N(n, q);
            for (Eigen::Index k = 0; k < q; ++k) {
                N.col(k) = normal(active[static_cast<std::size_t>(k)],
                                  sign[static_cast<std::size_t>(k)]);
            }
            const Eigen::VectorXd Dinv_np = chol.solve(np);
            Eigen::VectorXd z = Dinv_np;
            Eigen::VectorXd r = Eigen::VectorXd::Zero(q);
            if (q > 0) {
                const Eigen::MatrixXd Dinv_N = chol.solve(N);
                const Eigen::MatrixXd M = N.transpose() * Dinv_N;
                r = M.ldlt().solve(N.transpose() * Dinv_np);
                z -= Dinv_N * r;
            }

            // Partial step: the largest move keeping active bound multipliers nonnegative.
            double t1 = std::numeric_limits<double>::infinity();
            Eigen::Index k_drop = -1;
            for (Eigen::Index k = 0; k < q; ++k) {
                if (active[static_cast<std::size_t>(k)] == kEq) continue;
                if (r(k) > 0.0) {
                    const double ratio = u[static_cast<std::size_t>(k)] / r(k);
                    if (ratio < t1) {
                        t1 = ratio;
                        k_drop = k;
                    }
                }
            }

            const double curvature = z.dot(np);
            const double sp = np.dot(x) - bp;
            if (curvature <= 1e-14 * np.squaredNorm() * (1.0 + Dinv_np.norm())) {
                if (k_drop < 0) throw ContractError("solve_qp: constraints are infeasible");
                for (Eigen::Index k = 0; k < q; ++k) u[static_cast<std::size_t>(k)] -= t1 * r(k);
                up += t1;
                active.erase(active.begin() + k_drop);
                sign.erase(sign.begin() + k_drop);
                u.erase(u.begin() + k_drop);
                continue;
            }
            const double t2 = std::max(0.0, -sp / curvature);
            const double t = std::min(t1, t2);
            x += t * z;
            for (Eigen::Index k = 0; k < q; ++k) u[static_cast<std::size_t>(k)] -= t * r(k);
            up += t;
            if (t2 <= t1) {
                active.push_back(p);
                sign.push_back(p == kEq ? eq_sign : 1.0);
                u.push_back(up);
                break;
            }
            active.erase(active.begin() + k_drop);
            sign.erase(sign.begin() + k_drop);
            u.erase(u.begin() + k_drop);
        }
    }

    WeightSolution sol = unpack(qp, x);
    sol.diagnostics.iterations = iter;
    sol.diagnostics.converged = true;
    sol.diagnostics.multipliers = Eigen::VectorXd::Zero(rows);
    for (std::size_t k = 0; k < active.size(); ++k) {
        sol.diagnostics.multipliers(active[k]) = sign[k] * u[k];
        if (active[k] != kEq) sol.diagnostics.active_set.push_back(static_cast<int>(active[k]) - 1);
    }
    std::sort(sol.diagnostics.active_set.begin(), sol.diagnostics.active_set.end());
    return sol;
}

double predict(const WindowView& window, const WeightSolution& solution) {
    if (window.target_x.size() != solution.omega.size()) {
        throw ContractError("predict: weight count does not match target forecasts");
    }
    if (window.target_x.hasNaN()) throw ContractError("predict: missing target forecast");
    return solution.omega0 + solution.omega.dot(window.target_x);
}

double discounted_squared_error(const WindowView& window, const DiscountSchedule& schedule,
                                double omega0, const Eigen::VectorXd& omega) {
    double total = 0.0;
    for (Eigen::Index t = 0; t < window.X.rows(); ++t) {
        const double e = window.y(t) - omega0 - window.X.row(t).dot(omega);
        total += schedule[static_cast<std::size_t>(t)] * e * e;
    }
    return total;
}

}  // namespace fcomb
