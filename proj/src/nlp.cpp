#include "fcomb/nlp.hpp"

#include "fcomb/cobyla.hpp"
#include "fcomb/errors.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace fcomb {

namespace {

struct Reduced {
    Eigen::Index m = 0;
    bool intercept = true;

    [[nodiscard]] Eigen::Index dim() const { return (intercept ? 1 : 0) + m - 1; }

    void unpack(const Eigen::VectorXd& v, double& omega0, Eigen::VectorXd& omega) const {
        const Eigen::Index off = intercept ? 1 : 0;
        omega0 = intercept ? v(0) : 0.0;
        omega.resize(m);
        double rest = 1.0;
        for (Eigen::Index j = 0; j + 1 < m; ++j) {
            omega(j) = std::max(v(off + j), 0.0);
            rest -= omega(j);
        }
        omega(m - 1) = std::max(rest, 0.0);
    }
};

struct RowTerm {
    Eigen::Index row;
    double weight;
    double denom;
};

// Rows with a usable consensus, weights rescaled to sum to one after dropping the others.
std::vector<RowTerm> usable_rows(const WindowView& window, const DiscountSchedule& schedule) {
    if (schedule.length() != window.length()) {
        throw ContractError("schedule length does not match window length");
    }
    std::vector<RowTerm> rows;
    double mass = 0.0;
    for (Eigen::Index t = 0; t < window.y.size(); ++t) {
        const double d = window.y(t) - window.consensus(t);
        if (std::isnan(d) || d == 0.0) continue;
        rows.push_back({t, schedule[static_cast<std::size_t>(t)], d});
        mass += rows.back().weight;
    }
    if (rows.empty() || !(mass > 0.0)) {
        throw ContractError("win-rate objective: every training row has an exact consensus");
    }
    for (auto& r : rows) r.weight /= mass;
    return rows;
}

void require_complete(const WindowView& window, const char* who) {
    if (!window.complete()) throw ContractError(std::string(who) + ": window has missing forecasts");
    if (window.X.cols() == 0) throw ContractError(std::string(who) + ": window has no analysts");
}

}  // namespace

WeightSolution cobyla_minimize(const NlpProblem& problem) {
    if (problem.num_weights == 0) throw ContractError("cobyla_minimize: no weights");
    if (!problem.objective) throw ContractError("cobyla_minimize: no objective");
    if (problem.intercept && !(problem.intercept_bound > 0.0)) {
        throw ContractError("cobyla_minimize: intercept bound must be positive");
    }
    const Reduced red{static_cast<Eigen::Index>(problem.num_weights), problem.intercept};
    const Eigen::Index n = red.dim();
    const Eigen::Index m = red.m;
    const Eigen::Index off = problem.intercept ? 1 : 0;

    // G v <= h: omega_j >= 0 for the free weights, their sum <= 1, and the intercept box.
    const Eigen::Index rows = (m > 1 ? m : 0) + (problem.intercept ? 2 : 0);
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(rows, n);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(rows);
    Eigen::Index r = 0;
    if (m > 1) {
        for (Eigen::Index j = 0; j + 1 < m; ++j) G(r++, off + j) = -1.0;
        G.block(r, off, 1, m - 1).setOnes();
        h(r++) = 1.0;
    }
    if (problem.intercept) {
        G(r, 0) = 1.0;
        h(r++) = problem.intercept_bound;
        G(r, 0) = -1.0;
        h(r++) = problem.intercept_bound;
    }

    CobylaOptions opt;
    opt.rho_begin = problem.rho_begin;
    opt.rho_end = problem.rho_end;
    opt.max_evaluations = problem.max_evaluations > 0 ? problem.max_evaluations
                                                      : 5000 * static_cast<int>(m + 1);

    double omega0 = 0.0;
    Eigen::VectorXd omega;
    const auto f = [&](const Eigen::VectorXd& v) {
        red.unpack(v, omega0, omega);
        return problem.objective(omega0, omega);
    };

    Eigen::VectorXd start = Eigen::VectorXd::Zero(n);
    for (Eigen::Index j = 0; j + 1 < m; ++j) start(off + j) = 1.0 / static_cast<double>(m);
    std::vector<Eigen::VectorXd> starts{start};
    for (const auto& [w0, w] : problem.extra_starts) {
        if (w.size() != m) throw ContractError("cobyla_minimize: start has the wrong weight count");
        Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
        if (problem.intercept) v(0) = std::clamp(w0, -problem.intercept_bound, problem.intercept_bound);
        Eigen::VectorXd ws = w;
        snap_to_simplex(ws);
        // A point strictly inside the simplex keeps the geometry repairs free to move.
        ws = 0.98 * ws.array() + 0.02 / static_cast<double>(m);
        for (Eigen::Index j = 0; j + 1 < m; ++j) v(off + j) = ws(j);
        starts.push_back(v);
    }

    CobylaResult best;
    int evaluations = 0;
    int iterations = 0;
    for (std::size_t k = 0; k < starts.size(); ++k) {
        CobylaResult res = cobyla_linear(f, G, h, starts[k], opt);
        evaluations += res.evaluations;
        iterations += res.iterations;
        if (k == 0 || res.f < best.f) best = std::move(res);
    }

    WeightSolution sol;
    red.unpack(best.x, sol.omega0, sol.omega);
    snap_to_simplex(sol.omega);
    sol.objective = problem.objective(sol.omega0, sol.omega);
    sol.diagnostics.iterations = iterations;
    sol.diagnostics.evaluations = evaluations;
    sol.diagnostics.budget_exhausted = best.budget_exhausted;
    sol.diagnostics.converged = !best.budget_exhausted;
    sol.diagnostics.best_history = best.best_history;
    sol.diagnostics.final_radius = best.final_rho;
    return sol;
}

CombinationObjective win_rate_objective(const WindowView& window, const DiscountSchedule& schedule,
                                        const SurrogateSpec& spec) {
    require_complete(window, "win_rate_objective");
    auto rows = usable_rows(window, schedule);
    const double inv_L = 1.0 / static_cast<double>(window.length());
    return [rows = std::move(rows), inv_L, spec, y = window.y, X = window.X](
               double omega0, const Eigen::VectorXd& omega) {
        double total = 0.0;
        for (const auto& r : rows) {
            const double e = y(r.row) - omega0 - X.row(r.row).dot(omega);
            total += r.weight * surrogate_cdf(spec, std::abs(e / r.denom) - 1.0);
        }
        return inv_L * total;
    };
}

double exact_win_rate_loss(const WindowView& window, const DiscountSchedule& schedule,
                           double omega0, const Eigen::VectorXd& omega) {
    require_complete(window, "exact_win_rate_loss");
    const auto rows = usable_rows(window, schedule);
    double total = 0.0;
    for (const auto& r : rows) {
        const double e = window.y(r.row) - omega0 - window.X.row(r.row).dot(omega);
        total += r.weight * (std::abs(e / r.denom) > 1.0 ? 1.0 : 0.0);
    }
    return total / static_cast<double>(window.length());
}

double logistic_probability(double eta) {
    const double p = eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
    return std::clamp(p, kProbFloor, 1.0 - kProbFloor);
}

CombinationObjective hit_rate_objective(const WindowView& window,
                                        const DiscountSchedule& schedule) {
    require_complete(window, "hit_rate_objective");
    if (schedule.length() != window.length()) {
        throw ContractError("schedule length does not match window length");
    }
    const Eigen::Index L = window.y.size();
    Eigen::VectorXi target(L);
    Eigen::VectorXd weight(L);
    for (Eigen::Index t = 0; t < L; ++t) {
        const double c = window.consensus(t);
        target(t) = std::isnan(c) ? 0 : binary_target(window.y(t), c);
        weight(t) = std::isnan(c) ? 0.0 : schedule[static_cast<std::size_t>(t)];
    }
    const double inv_L = 1.0 / static_cast<double>(L);
    return [target, weight, inv_L, X = window.X](double omega0, const Eigen::VectorXd& omega) {
        const Eigen::VectorXd eta = (X * omega).array() + omega0;
        double total = 0.0;
        for (Eigen::Index t = 0; t < eta.size(); ++t) {
            if (weight(t) == 0.0) continue;
            total += weight(t) * hit_rate_loss(logistic_probability(eta(t)), target(t));
        }
        return inv_L * total;
    };
}

double predict_hit_probability(const WindowView& window, const WeightSolution& solution) {
    if (window.target_x.size() != solution.omega.size()) {
        throw ContractError("predict_hit_probability: weight count does not match target row");
    }
    return logistic_probability(solution.omega0 + solution.omega.dot(window.target_x));
}

std::vector<std::pair<double, Eigen::VectorXd>> default_extra_starts(const WindowView& window,
                                                                     const DiscountSchedule& schedule,
                                                                     int count) {
    std::vector<std::pair<double, Eigen::VectorXd>> out;
    if (count <= 1) return out;
    const Eigen::Index m = window.X.cols();
    const auto intercept_for = [&](const Eigen::VectorXd& w) {
        double s = 0.0;
        for (Eigen::Index t = 0; t < window.X.rows(); ++t) {
            s += schedule[static_cast<std::size_t>(t)] * (window.y(t) - window.X.row(t).dot(w));
        }
        return s;
    };
    try {
        const WeightSolution se = solve_qp(build_qp(window, schedule));
        out.emplace_back(se.omega0, se.omega);
    } catch (const Error&) {
        // Fall through to the vertex starts.
    }
    // Equal weights shifted so the combination hits one training row exactly, newest row first.
    const Eigen::VectorXd eq = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
    for (Eigen::Index t = window.X.rows() - 1; t >= 0 && static_cast<int>(out.size()) < count - 1; --t) {
        out.emplace_back(window.y(t) - window.X.row(t).dot(eq), eq);
    }
    for (Eigen::Index j = 0; j < m && static_cast<int>(out.size()) < count - 1; ++j) {
        Eigen::VectorXd w = Eigen::VectorXd::Constant(m, 0.1 / static_cast<double>(m));
        w(j) += 0.9;
        out.emplace_back(intercept_for(w), w);
    }
    if (static_cast<int>(out.size()) > count - 1) out.resize(static_cast<std::size_t>(count - 1));
    return out;
}

WeightSolution fit_win_rate(const WindowView& window, const DiscountSchedule& schedule,
                            SurrogateFamily family, double epsilon, int max_evaluations,
                            int starts) {
    const SurrogateSpec spec = calibrate_for_window(window, family, epsilon);
    NlpProblem p;
    p.num_weights = window.num_analysts();
    p.objective = win_rate_objective(window, schedule, spec);
    p.intercept_bound = kWinInterceptBound;
    p.max_evaluations = max_evaluations;
    p.extra_starts = default_extra_starts(window, schedule, starts);
    WeightSolution sol = cobyla_minimize(p);
    sol.lambda = schedule.lambda;
    return sol;
}

WeightSolution fit_hit_rate(const WindowView& window, const DiscountSchedule& schedule,
                            int max_evaluations, int starts) {
    NlpProblem p;
    p.num_weights = window.num_analysts();
    p.objective = hit_rate_objective(window, schedule);
    p.intercept_bound = kHitInterceptBound;
    p.max_evaluations = max_evaluations;
    // The squared-error intercept lives on the log scale, not the log-odds scale.
    for (auto& s : default_extra_starts(window, schedule, starts)) p.extra_starts.emplace_back(0.0, s.second);
    WeightSolution sol = cobyla_minimize(p);
    sol.lambda = schedule.lambda;
    return sol;
}

}  // namespace fcomb
