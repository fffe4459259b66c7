#pragma once

// Limited-memory BFGS with a strong-Wolfe line search, for smooth
// unconstrained problems. Objective callback fills the gradient and returns
// the value.

#include <exitrate/common.hpp>

#include <cmath>
#include <deque>
#include <functional>

namespace exitrate {

struct LbfgsOptions {
    int max_iterations = 2000;
    int history = 10;
    double grad_tol = 1e-6;        // sup-norm of the gradient
    double f_rel_tol = 1e-14;      // relative progress cutoff
    int max_line_search = 40;
};

struct LbfgsResult {
    double value = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

using Objective = std::function<double(const Vector&, Vector&)>;

namespace detail {

// strong Wolfe via bracketing + bisection/interpolation
inline bool wolfe_line_search(const Objective& fn, Vector& x, double& f, Vector& g,
                              const Vector& dir, double dir_dot_g0, int max_evals) {
    constexpr double c1 = 1e-4;
    constexpr double c2 = 0.9;
    const Vector x0 = x;
    const double f0 = f;
    double alpha = 1.0;
    double alpha_lo = 0.0, alpha_hi = 0.0;
    double f_lo = f0;
    bool bracketed = false;
    Vector g_trial(g.size());

    for (int eval = 0; eval < max_evals; ++eval) {
        x = x0 + alpha * dir;
        const double f_trial = fn(x, g_trial);
        const double dg = g_trial.dot(dir);
        const bool armijo = f_trial <= f0 + c1 * alpha * dir_dot_g0;
        if (armijo && std::abs(dg) <= -c2 * dir_dot_g0) {
            f = f_trial;
            g = g_trial;
            return true;
        }
        if (!bracketed) {
            if (!armijo || f_trial >= f_lo) {
                bracketed = true;
                alpha_hi = alpha;
                alpha = 0.5 * (alpha_lo + alpha_hi);
            } else if (dg >= 0.0) {
                bracketed = true;
                alpha_hi = alpha_lo;
                alpha_lo = alpha;
                f_lo = f_trial;
                alpha = 0.5 * (alpha_lo + alpha_hi);
            } else {
                alpha_lo = alpha;
                f_lo = f_trial;
                alpha *= 2.0;
            }
        } else {
            if (!armijo || f_trial >= f_lo) {
                alpha_hi = alpha;
            } else {
                if (dg * (alpha_hi - alpha_lo) >= 0.0) alpha_hi = alpha_lo;
                alpha_lo = alpha;
                f_lo = f_trial;
            }
            alpha = 0.5 * (alpha_lo + alpha_hi);
        }
        if (std::abs(alpha_hi - alpha_lo) < 1e-16 && bracketed) break;
    }
    // fall back to the best Armijo point seen, if any
    if (alpha_lo > 0.0) {
        x = x0 + alpha_lo * dir;
        f = fn(x, g);
        return f < f0;
    }
    x = x0;
    f = f0;
    fn(x, g);
    return false;
}

}  // namespace detail

inline LbfgsResult lbfgs_minimize(const Objective& fn, Vector& x, const LbfgsOptions& opts = {}) {
    Vector g(x.size());
    double f = fn(x, g);
    std::deque<Vector> s_hist, y_hist;
    std::deque<double> rho_hist;
    LbfgsResult res;

    for (int it = 0; it < opts.max_iterations; ++it) {
        res.iterations = it;
        res.grad_norm = g.size() > 0 ? g.cwiseAbs().maxCoeff() : 0.0;
        if (res.grad_norm <= opts.grad_tol) {
            res.converged = true;
            break;
        }

        // two-loop recursion
        Vector q = g;
        std::vector<double> alphas(s_hist.size());
        for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
            const auto k = static_cast<std::size_t>(i);
            alphas[k] = rho_hist[k] * s_hist[k].dot(q);
            q -= alphas[k] * y_hist[k];
        }
        if (!s_hist.empty()) {
            const auto& s = s_hist.back();
            const auto& y = y_hist.back();
            q *= s.dot(y) / y.squaredNorm();
        }
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alphas[i] - beta) * s_hist[i];
        }
        Vector dir = -q;
        double dg0 = dir.dot(g);
        if (dg0 >= 0.0) {  // not a descent direction; reset to steepest descent
            dir = -g;
            dg0 = -g.squaredNorm();
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        const Vector x_prev = x;
        const Vector g_prev = g;
        const double f_prev = f;
        if (!detail::wolfe_line_search(fn, x, f, g, dir, dg0, opts.max_line_search)) break;

        const Vector s = x - x_prev;
        const Vector y = g - g_prev;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(s);
            y_hist.push_back(y);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opts.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        if (std::abs(f_prev - f) <= opts.f_rel_tol * std::max(1.0, std::abs(f_prev))) {
            res.grad_norm = g.cwiseAbs().maxCoeff();
            res.converged = res.grad_norm <= opts.grad_tol;
            break;
        }
    }
    res.value = f;
    res.grad_norm = g.size() > 0 ? g.cwiseAbs().maxCoeff() : 0.0;
    if (res.grad_norm <= opts.grad_tol) res.converged = true;
    return res;
}

}  // namespace exitrate
