#include "fcomb/cobyla.hpp"

#include "fcomb/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fcomb {

namespace detail {

Eigen::VectorXd nnls(const Eigen::MatrixXd& C, const Eigen::VectorXd& e) {
    const Eigen::Index k = C.cols();
    Eigen::VectorXd v = Eigen::VectorXd::Zero(k);
    if (k == 0) return v;
    std::vector<bool> passive(static_cast<std::size_t>(k), false);
    const double tol = 1e-12 * std::max(1.0, C.cwiseAbs().maxCoeff() * e.cwiseAbs().maxCoeff());

    const auto solve_passive = [&]() {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < k; ++j) {
            if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
        }
        Eigen::MatrixXd Cp(C.rows(), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) Cp.col(static_cast<Eigen::Index>(i)) = C.col(idx[i]);
        const Eigen::VectorXd sp = Cp.completeOrthogonalDecomposition().solve(e);
        Eigen::VectorXd s = Eigen::VectorXd::Zero(k);
        for (std::size_t i = 0; i < idx.size(); ++i) s(idx[i]) = sp(static_cast<Eigen::Index>(i));
        return s;
    };

    for (int outer = 0; outer < 3 * static_cast<int>(k) + 3; ++outer) {
        const Eigen::VectorXd w = C.transpose() * (e - C * v);
        Eigen::Index t = -1;
        double best = tol;
        for (Eigen::Index j = 0; j < k; ++j) {
            if (!passive[static_cast<std::size_t>(j)] && w(j) > best) {
                best = w(j);
                t = j;
            }
        }
        if (t < 0) break;
        passive[static_cast<std::size_t>(t)] = true;
        Eigen::VectorXd s = solve_passive();
        for (int inner = 0; inner < 3 * static_cast<int>(k) + 3; ++inner) {
            double alpha = std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < k; ++j) {
                if (passive[static_cast<std::size_t>(j)] && s(j) <= 0.0) {
                    const double denom = v(j) - s(j);
                    alpha = std::min(alpha, denom > 0.0 ? v(j) / denom : 0.0);
                }
            }
            if (!std::isfinite(alpha)) break;
            v += alpha * (s - v);
            for (Eigen::Index j = 0; j < k; ++j) {
                if (passive[static_cast<std::size_t>(j)] && v(j) <= tol) {
                    passive[static_cast<std::size_t>(j)] = false;
                    v(j) = 0.0;
                }
            }
            s = solve_passive();
        }
        v = s;
    }
    return v.cwiseMax(0.0);
}

}  // namespace detail

namespace {

constexpr double kAlpha = 0.25;   // minimum simplex "height" relative to rho
constexpr double kBeta = 2.1;     // maximum vertex distance relative to rho
constexpr double kShortStep = 0.5;

class Minimizer {
public:
    Minimizer(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::MatrixXd& G,
              const Eigen::VectorXd& h, const Eigen::VectorXd& start, const CobylaOptions& opt)
        : f_(f), G_(G), h_(h), interior_(start), opt_(opt), n_(start.size()) {
        feas_tol_ = 1e-12 * std::max(1.0, h_.cwiseAbs().maxCoeff());
    }

    CobylaResult run() {
        CobylaResult res;
        rho_ = opt_.rho_begin;
        if (!feasible(interior_)) throw ContractError("cobyla: start point is infeasible");
        const double f_start = evaluate(interior_);
        best_x_ = interior_;
        best_f_ = f_start;
        history_.push_back(best_f_);
        if (n_ == 0) return finish(res);

        pts_.resize(n_, n_ + 1);
        fv_.resize(n_ + 1);
        pts_.col(0) = interior_;
        fv_(0) = f_start;
        for (Eigen::Index i = 0; i < n_; ++i) {
            Eigen::VectorXd dir = Eigen::VectorXd::Zero(n_);
            dir(i) = 1.0;
            Eigen::VectorXd p;
            if (!feasible_probe(interior_, dir, rho_, p)) {
                throw ContractError("cobyla: cannot build a feasible initial simplex");
            }
            pts_.col(i + 1) = p;
            fv_(i + 1) = evaluate(p);
            if (budget_hit()) break;
        }
        sort_best();

        // Geometry repairs are capped per radius so a simplex pinned against the constraints
        // cannot stall the radius schedule.
        int repairs = 0;
        const auto try_repair = [&]() {
            if (repairs > n_ + 1) return false;
            ++repairs;
            return improve_geometry();
        };
        const auto shrink = [&]() {
            if (rho_ <= opt_.rho_end) return false;
            reduce_rho();
            repairs = 0;
            return true;
        };

        while (!budget_hit()) {
            ++iterations_;
            if (!update_model()) {
                if (!try_repair() && !shrink()) break;
                continue;
            }
            const Eigen::VectorXd d = trust_step();
            if (d.norm() < kShortStep * rho_) {
                if (!geometry_ok() && try_repair()) continue;
                if (!shrink()) break;
                continue;
            }
            const Eigen::VectorXd xn = pts_.col(0) + d;
            const double fn = evaluate(xn);
            const double pred = -grad_.dot(d);
            const double ared = fv_(0) - fn;
            replace_vertex(xn, fn, d);
            const double ratio = pred > 0.0 ? ared / pred : -1.0;
            if (ratio > 0.1) {
                repairs = 0;
                continue;
            }
            update_model();
            if (!geometry_ok() && try_repair()) continue;
            if (!shrink()) break;
        }
        res.budget_exhausted = budget_hit();
        return finish(res);
    }

private:
    CobylaResult finish(CobylaResult& res) {
        res.x = best_x_;
        res.f = best_f_;
        res.evaluations = evals_;
        res.iterations = iterations_;
        res.final_rho = rho_;
        res.best_history = std::move(history_);
        return res;
    }

    [[nodiscard]] bool budget_hit() const { return evals_ >= opt_.max_evaluations; }

    [[nodiscard]] bool feasible(const Eigen::VectorXd& x) const {
        if (G_.rows() == 0) return true;
        return ((G_ * x - h_).array() <= feas_tol_).all();
    }

    double evaluate(const Eigen::VectorXd& x) {
        ++evals_;
        double v = f_(x);
        if (std::isnan(v)) v = std::numeric_limits<double>::infinity();
        if (v < best_f_) {
            best_f_ = v;
            best_x_ = x;
            history_.push_back(v);
        }
        return v;
    }

    // Finds a feasible point base + s*dir for s in {+-len, +-len/2, ...}.
    bool feasible_probe(const Eigen::VectorXd& base, const Eigen::VectorXd& dir, double len,
                        Eigen::VectorXd& out) const {
        for (int k = 0; k < 40; ++k, len *= 0.5) {
            for (double sgn : {1.0, -1.0}) {
                Eigen::VectorXd p = base + sgn * len * dir;
                if (feasible(p)) {
                    out = std::move(p);
                    return true;
                }
            }
        }
        return false;
    }

    void sort_best() {
        Eigen::Index b = 0;
        fv_.minCoeff(&b);
        if (b != 0) {
            pts_.col(0).swap(pts_.col(b));
            std::swap(fv_(0), fv_(b));
        }
    }

    // Linear model through the simplex; false when the simplex is degenerate.
    bool update_model() {
        E_ = pts_.rightCols(n_).colwise() - pts_.col(0);
        Eigen::FullPivLU<Eigen::MatrixXd> lu(E_);
        if (!lu.isInvertible()) return false;
        Einv_ = lu.inverse();
        const Eigen::VectorXd df = fv_.tail(n_).array() - fv_(0);
        grad_ = Einv_.transpose() * df;
        if (!grad_.allFinite()) grad_.setZero();
        return true;
    }

    [[nodiscard]] bool geometry_ok() const {
        for (Eigen::Index i = 0; i < n_; ++i) {
            if (E_.col(i).norm() > kBeta * rho_) return false;
            if (1.0 / Einv_.row(i).norm() < kAlpha * rho_) return false;
        }
        return true;
    }

    // Replaces the worst-placed vertex with a point normal to its opposite face.
    bool improve_geometry() {
        if (!update_model()) {
            // Degenerate simplex: rebuild around the best point.
            return rebuild_simplex();
        }
        Eigen::Index j = -1;
        double worst = kBeta * rho_;
        for (Eigen::Index i = 0; i < n_; ++i) {
            const double dist = E_.col(i).norm();
            if (dist > worst) {
                worst = dist;
                j = i;
            }
        }
        if (j < 0) {
            double smallest = std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < n_; ++i) {
                const double height = 1.0 / Einv_.row(i).norm();
                if (height < smallest) {
                    smallest = height;
                    j = i;
                }
            }
        }
        const Eigen::VectorXd u = Einv_.row(j).transpose().normalized();
        const Eigen::VectorXd x0 = pts_.col(0);
        const double sgn = grad_.dot(u) > 0.0 ? -1.0 : 1.0;
        Eigen::VectorXd p;
        if (!geometry_candidate(x0, sgn * u, p)) return false;
        pts_.col(j + 1) = p;
        fv_(j + 1) = evaluate(p);
        sort_best();
        return true;
    }

    bool geometry_candidate(const Eigen::VectorXd& x0, const Eigen::VectorXd& u,
                            Eigen::VectorXd& out) const {
        for (double sgn : {1.0, -1.0}) {
            const Eigen::VectorXd p = x0 + sgn * rho_ * u;
            if (feasible(p)) {
                out = p;
                return true;
            }
        }
        // Near a corner neither direction fits; lean towards the interior point.
        const Eigen::VectorXd inward = interior_ - x0;
        const double inward_norm = inward.norm();
        const double beta = inward_norm > 0.0 ? std::min(1.0, 0.5 * rho_ / inward_norm) : 0.0;
        const Eigen::VectorXd base = x0 + beta * inward;
        double len = rho_;
        Eigen::VectorXd best;
        double best_height = 0.0;
        for (int k = 0; k < 30; ++k, len *= 0.5) {
            for (double sgn : {1.0, -1.0}) {
                const Eigen::VectorXd p = base + sgn * len * u;
                if (!feasible(p)) continue;
                const double height = std::abs(u.dot(p - x0));
                if (height >= 0.1 * rho_) {
                    out = p;
                    return true;
                }
                if (height > best_height) {
                    best_height = height;
                    best = p;
                }
            }
        }
        if (best_height > 1e-3 * rho_) {
            out = best;
            return true;
        }
        return false;
    }

    bool rebuild_simplex() {
        const Eigen::VectorXd x0 = pts_.col(0);
        for (Eigen::Index i = 0; i < n_; ++i) {
            Eigen::VectorXd dir = Eigen::VectorXd::Zero(n_);
            dir(i) = 1.0;
            Eigen::VectorXd p;
            if (!geometry_candidate(x0, dir, p)) return false;
            pts_.col(i + 1) = p;
            fv_(i + 1) = evaluate(p);
            if (budget_hit()) return true;
        }
        sort_best();
        return true;
    }

    void reduce_rho() {
        rho_ *= 0.5;
        if (rho_ <= 3.0 * opt_.rho_end) rho_ = opt_.rho_end;
    }

    // Minimizes grad'd over {|d| <= rho} intersected with the constraints, following the
    // projected steepest-descent path and collecting constraints as they are hit.
    Eigen::VectorXd trust_step() const {
        const Eigen::VectorXd x0 = pts_.col(0);
        Eigen::VectorXd d = Eigen::VectorXd::Zero(n_);
        const double gnorm = grad_.norm();
        if (gnorm == 0.0) return d;
        const Eigen::Index nc = G_.rows();
        const Eigen::VectorXd slack = nc > 0 ? Eigen::VectorXd(h_ - G_ * x0) : Eigen::VectorXd();
        std::vector<Eigen::Index> active;
        for (int iter = 0; iter < 2 * static_cast<int>(n_ + nc) + 2; ++iter) {
            Eigen::VectorXd s = -grad_;
            if (!active.empty()) {
                Eigen::MatrixXd Ct(n_, static_cast<Eigen::Index>(active.size()));
                for (std::size_t k = 0; k < active.size(); ++k) {
                    Ct.col(static_cast<Eigen::Index>(k)) = G_.row(active[k]).transpose();
                }
                const Eigen::VectorXd nu = detail::nnls(Ct, -grad_);
                s = -(grad_ + Ct * nu);
            }
            if (s.norm() <= 1e-12 * gnorm) break;
            const double ds = d.dot(s);
            const double ss = s.squaredNorm();
            const double room = std::max(0.0, rho_ * rho_ - d.squaredNorm());
            const double a_ball = (-ds + std::sqrt(ds * ds + ss * room)) / ss;
            double a_con = std::numeric_limits<double>::infinity();
            Eigen::Index hit = -1;
            for (Eigen::Index i = 0; i < nc; ++i) {
                if (std::find(active.begin(), active.end(), i) != active.end()) continue;
                const double gs = G_.row(i).dot(s);
                if (gs <= 1e-14 * s.norm() * G_.row(i).norm()) continue;
                const double a = std::max(0.0, (slack(i) - G_.row(i).dot(d)) / gs);
                if (a < a_con) {
                    a_con = a;
                    hit = i;
                }
            }
            if (hit >= 0 && a_con < a_ball) {
                d += a_con * s;
                active.push_back(hit);
            } else {
                d += a_ball * s;
                break;
            }
        }
        // Rounding can leave the step a hair outside the polytope; pull it back. Sliding along
        // an active face leaves G_i d at rounding level, which the tolerance absorbs.
        if (nc > 0) {
            double scale = 1.0;
            const Eigen::VectorXd Gd = G_ * d;
            for (Eigen::Index i = 0; i < nc; ++i) {
                if (Gd(i) - slack(i) > 0.5 * feas_tol_) {
                    scale = std::min(scale, std::max(slack(i), 0.0) / Gd(i));
                }
            }
            d *= scale;
        }
        return d;
    }

    // Inserts the trial point, dropping the vertex whose removal keeps the simplex best shaped.
    void replace_vertex(const Eigen::VectorXd& xn, double fn, const Eigen::VectorXd& d) {
        const Eigen::VectorXd sigma = Einv_ * d;
        const bool improved = fn < fv_(0);
        Eigen::Index drop = -1;
        double best_score = improved ? 0.0 : 1.0;
        const auto weight = [&](const Eigen::VectorXd& p, const Eigen::VectorXd& ref) {
            const double r = (p - ref).norm() / rho_;
            return std::max(1.0, r * r * r);
        };
        const Eigen::VectorXd ref = improved ? xn : Eigen::VectorXd(pts_.col(0));
        for (Eigen::Index i = 0; i < n_; ++i) {
            const double score = std::abs(sigma(i)) * weight(pts_.col(i + 1), ref);
            if (score > best_score) {
                best_score = score;
                drop = i + 1;
            }
        }
        if (improved) {
            const double score0 = std::abs(1.0 - sigma.sum()) * weight(pts_.col(0), ref);
            if (score0 > best_score || drop < 0) drop = 0;
        }
        if (drop < 0) return;
        pts_.col(drop) = xn;
        fv_(drop) = fn;
        sort_best();
    }

    const std::function<double(const Eigen::VectorXd&)>& f_;
    const Eigen::MatrixXd& G_;
    const Eigen::VectorXd& h_;
    Eigen::VectorXd interior_;
    CobylaOptions opt_;
    Eigen::Index n_;
    double feas_tol_ = 0.0;
    double rho_ = 0.0;
    int evals_ = 0;
    int iterations_ = 0;

    Eigen::MatrixXd pts_;
    Eigen::VectorXd fv_;
    Eigen::MatrixXd E_;
    Eigen::MatrixXd Einv_;
    Eigen::VectorXd grad_;

    Eigen::VectorXd best_x_;
    double best_f_ = std::numeric_limits<double>::infinity();
    std::vector<double> history_;
};

}  // namespace

CobylaResult cobyla_linear(const std::function<double(const Eigen::VectorXd&)>& f,
                           const Eigen::MatrixXd& G, const Eigen::VectorXd& h,
                           const Eigen::VectorXd& start, const CobylaOptions& options) {
    if (G.rows() != h.size() || (G.rows() > 0 && G.cols() != start.size())) {
        throw ContractError("cobyla: constraint dimensions disagree");
    }
    if (options.max_evaluations < 1) throw ContractError("cobyla: need at least one evaluation");
    if (!(options.rho_begin >= options.rho_end && options.rho_end > 0.0)) {
        throw ContractError("cobyla: need rho_begin >= rho_end > 0");
    }
    Minimizer m(f, G, h, start, options);
    return m.run();
}

}  // namespace fcomb
