#pragma once

// Limited-memory BFGS with a strong-Wolfe line search (bracketing + zoom with
// safeguarded cubic interpolation).

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>

#include "lrf/core.hpp"

namespace lrf {

struct LbfgsOptions {
    int memory = 10;
    int max_iters = 500;
    /// Stop when ||g||_inf <= grad_tol * max(1, |f|).
    double grad_tol = 1e-8;
    /// Stop when an iteration decreases f by less than ftol * max(1, |f|).
    double ftol = 1e-16;
    double c1 = 1e-4;
    double c2 = 0.9;
    int max_linesearch = 40;
};

struct LbfgsResult {
    enum class Status { Converged, MaxIterations, Stalled, LineSearchFailed };

    Vector x;
    double f = 0.0;
    double grad_inf = 0.0;
    int iterations = 0;
    int evaluations = 0;
    Status status = Status::MaxIterations;
};

/// Objective callback: returns f(x) and writes the gradient into `grad`.
using Objective = std::function<double(const Vector& x, Vector& grad)>;

namespace detail {

// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db).
inline double cubic_min(double a, double fa, double da, double b, double fb, double db) {
    const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - da * db;
    if (disc < 0) return std::numeric_limits<double>::quiet_NaN();
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    return b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
}

struct LinePoint {
    double a = 0.0;
    double f = 0.0;
    double d = 0.0;
};

}  // namespace detail

inline LbfgsResult lbfgs_minimize(const Objective& fun, Vector x0, const LbfgsOptions& opt = {}) {
    detail::require(opt.memory >= 1, "L-BFGS memory must be at least 1");
    detail::require(opt.grad_tol > 0, "L-BFGS gradient tolerance must be positive");

    LbfgsResult res;
    res.x = std::move(x0);
    const Eigen::Index dim = res.x.size();
    Vector g(dim);
    res.f = fun(res.x, g);
    res.evaluations = 1;
    if (!std::isfinite(res.f) || !g.allFinite()) throw NumericalError("L-BFGS: non-finite objective at start");
    if (dim == 0) {
        res.status = LbfgsResult::Status::Converged;
        return res;
    }

    std::deque<Vector> S, Y;
    std::deque<double> rho;
    Vector d(dim), xt(dim), gt(dim);
    std::vector<double> alpha_buf;

    auto converged = [&](double f, const Vector& grad) {
        return grad.lpNorm<Eigen::Infinity>() <= opt.grad_tol * std::max(1.0, std::abs(f));
    };

    res.grad_inf = g.lpNorm<Eigen::Infinity>();
    if (converged(res.f, g)) {
        res.status = LbfgsResult::Status::Converged;
        return res;
    }

    for (res.iterations = 0; res.iterations < opt.max_iters;) {
        // two-loop recursion
        d = -g;
        alpha_buf.assign(S.size(), 0.0);
        for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
            alpha_buf[i] = rho[i] * S[i].dot(d);
            d -= alpha_buf[i] * Y[i];
        }
        if (!S.empty()) d *= S.back().dot(Y.back()) / Y.back().squaredNorm();
        for (std::size_t i = 0; i < S.size(); ++i) {
            const double beta = rho[i] * Y[i].dot(d);
            d += (alpha_buf[i] - beta) * S[i];
        }
        double dphi0 = g.dot(d);
        if (!(dphi0 < 0)) {
            S.clear();
            Y.clear();
            rho.clear();
            d = -g;
            dphi0 = -g.squaredNorm();
        }

        const double f0 = res.f;
        auto eval = [&](double a) {
            xt = res.x + a * d;
            const double f = fun(xt, gt);
            ++res.evaluations;
            return detail::LinePoint{a, std::isfinite(f) ? f : std::numeric_limits<double>::infinity(), gt.dot(d)};
        };

        // strong-Wolfe search; `accepted` ends up holding xt/gt of the chosen point
        double a_init = S.empty() ? std::min(1.0, 1.0 / d.lpNorm<Eigen::Infinity>()) : 1.0;
        detail::LinePoint prev{0.0, f0, dphi0};
        detail::LinePoint lo, hi;
        bool found = false, need_zoom = false;
        double acc_f = f0;
        double a = a_init;
        int evals = 0;
        for (; evals < opt.max_linesearch; ++evals) {
            const auto cur = eval(a);
            if (cur.f > f0 + opt.c1 * a * dphi0 || (evals > 0 && cur.f >= prev.f)) {
                lo = prev;
                hi = cur;
                need_zoom = true;
                break;
            }
            if (std::abs(cur.d) <= -opt.c2 * dphi0) {
                found = true;
                acc_f = cur.f;
                break;
            }
            if (cur.d >= 0) {
                lo = cur;
                hi = prev;
                need_zoom = true;
                break;
            }
            prev = cur;
            a *= 2.0;
        }
        Vector best_x, best_g;
        double best_f = f0;
        if (need_zoom) {
            for (; evals < opt.max_linesearch; ++evals) {
                double trial = detail::cubic_min(lo.a, lo.f, lo.d, hi.a, hi.f, hi.d);
                const double left = std::min(lo.a, hi.a), width = std::abs(hi.a - lo.a);
                if (!std::isfinite(hi.f) || !std::isfinite(trial) || trial < left + 0.1 * width ||
                    trial > left + 0.9 * width)
                    trial = 0.5 * (lo.a + hi.a);
                if (width <= 1e-16 * std::max(1.0, left)) break;
                const auto cur = eval(trial);
                if (cur.f > f0 + opt.c1 * trial * dphi0 || cur.f >= lo.f) {
                    hi = cur;
                } else {
                    if (cur.f < best_f) {
                        best_f = cur.f;
                        best_x = xt;
                        best_g = gt;
                    }
                    if (std::abs(cur.d) <= -opt.c2 * dphi0) {
                        found = true;
                        acc_f = cur.f;
                        break;
                    }
                    if (cur.d * (hi.a - lo.a) >= 0) hi = lo;
                    lo = cur;
                }
            }
        }

        if (!found) {
            if (best_f < f0 && best_x.size() == dim) {
                // sufficient decrease without curvature: take the step, drop memory
                res.x = best_x;
                g = best_g;
                res.f = best_f;
                S.clear();
                Y.clear();
                rho.clear();
                ++res.iterations;
                res.grad_inf = g.lpNorm<Eigen::Infinity>();
                if (converged(res.f, g)) {
                    res.status = LbfgsResult::Status::Converged;
                    return res;
                }
                continue;
            }
            res.status = LbfgsResult::Status::LineSearchFailed;
            res.grad_inf = g.lpNorm<Eigen::Infinity>();
            return res;
        }

        Vector s = xt - res.x;
        Vector y = gt - g;
        const double sy = s.dot(y);
        res.x.swap(xt);
        g.swap(gt);
        const double f_old = res.f;
        res.f = acc_f;  // xt/gt hold the accepted (last evaluated) point
        ++res.iterations;
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (static_cast<int>(S.size()) == opt.memory) {
                S.pop_front();
                Y.pop_front();
                rho.pop_front();
            }
            S.push_back(std::move(s));
            Y.push_back(std::move(y));
            rho.push_back(1.0 / sy);
        }
        res.grad_inf = g.lpNorm<Eigen::Infinity>();
        if (!std::isfinite(res.f)) throw NumericalError("L-BFGS: objective became non-finite");
        if (converged(res.f, g)) {
            res.status = LbfgsResult::Status::Converged;
            return res;
        }
        if (f_old - res.f <= opt.ftol * std::max(1.0, std::abs(res.f))) {
            res.status = LbfgsResult::Status::Stalled;
            return res;
        }
    }
    res.status = LbfgsResult::Status::MaxIterations;
    return res;
}

}  // namespace lrf
