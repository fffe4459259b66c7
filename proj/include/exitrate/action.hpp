#pragma once

// Path-space cost of atypical motion: the Lagrangian penalizes deviation of a
// path's velocity from the mode's closed-loop drift, measured in the inverse
// diffusion metric. Rate functions are minima of the discretized action over
// paths from the start point to boundary targets, with the exit time handled
// by an outer grid over horizons.

#include <exitrate/common.hpp>
#include <exitrate/domain.hpp>
#include <exitrate/lbfgs.hpp>
#include <exitrate/system.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

namespace exitrate {

struct DiscretePath {
    Vector times;    // strictly increasing, t0 = 0
    Matrix states;   // (N+1) x d, row k is the state at times[k]

    [[nodiscard]] Eigen::Index segments() const { return times.size() - 1; }
    [[nodiscard]] Eigen::Index dim() const { return states.cols(); }

    void validate() const {
        if (times.size() < 2 || states.rows() != times.size())
            throw NumericalError("path needs >= 2 nodes with matching times/states");
        if (!states.allFinite() || !times.allFinite())
            throw NumericalError("path contains non-finite entries");
        for (Eigen::Index k = 0; k + 1 < times.size(); ++k)
            if (!(times[k] < times[k + 1]))
                throw NumericalError("path time grid must be strictly increasing");
    }
};

struct ActionResult {
    double value = 0.0;
    DiscretePath path;
    double horizon = 0.0;          // T at which the best value was found
    bool converged = false;
    int restarts_used = 0;
    bool horizon_warning = false;  // free-time certificate failed to stabilize
    Vector endpoint;
    double grad_norm = 0.0;
};

/// Thrown when every restart of the action minimizer fails to converge.
struct ActionNonconvergence : NumericalError {
    ActionNonconvergence(const std::string& msg, ActionResult best_so_far)
        : NumericalError(msg), best(std::move(best_so_far)) {}
    ActionResult best;
};

struct ActionSolverOptions {
    int n_segments = 400;
    std::vector<double> t_grid = {2.0, 4.0, 8.0, 16.0};
    double grad_tol = 1e-6;
    double free_time_tol = 0.01;
    double interior_tol = 1e-9;
    double penalty_weight = 100.0;
    int penalty_sweeps = 3;
    int max_iterations = 2000;
    int restarts = 2;              // straight line + flow-then-jump
    int boundary_samples = 64;
    int refine_iters = 16;
    double tie_tol_rel = 1e-3;
};

// ---------------------------------------------------------------------------
// Lagrangian / Hamiltonian
// ---------------------------------------------------------------------------

/// Per-mode evaluation cache: drift matrix, and the diffusion inverse when it
/// is state-independent.
class ModeLagrangian {
public:
    ModeLagrangian(const MultiChannelSystem& sys, int mode)
        : sys_(&sys), drift_(sys.drift_matrix(mode)) {
        if (sys.diffusion.kind == DiffusionSpec::Kind::Constant) {
            const Matrix s = sys.diffusion.sigma0;
            Matrix a = s * s.transpose();
            a = 0.5 * (a + a.transpose());
            constant_a_ = a;
            constant_a_inv_ = invert(a);
        }
    }

    [[nodiscard]] const Matrix& drift_matrix() const { return drift_; }
    [[nodiscard]] Vector drift(const Vector& x) const { return drift_ * x; }

    [[nodiscard]] Matrix a(const Vector& x) const {
        if (constant_a_) return *constant_a_;
        const Matrix s = sys_->diffusion.sigma(x);
        Matrix m = s * s.transpose();
        return 0.5 * (m + m.transpose());
    }

    [[nodiscard]] Matrix a_inv(const Vector& x) const {
        if (constant_a_inv_) return *constant_a_inv_;
        return invert(a(x));
    }

    [[nodiscard]] double value(const Vector& x, const Vector& v) const {
        const Vector r = v - drift_ * x;
        return 0.5 * r.dot(a_inv(x) * r);
    }

    /// Value plus gradients with respect to the state and velocity arguments.
    double value_with_grad(const Vector& x, const Vector& v, Vector& gx, Vector& gv) const {
        const Matrix ainv = a_inv(x);
        const Vector r = v - drift_ * x;
        const Vector w = ainv * r;
        gv = w;
        gx = -drift_.transpose() * w;
        if (!constant_a_inv_) {
            // d a^{-1}/dx_i = -a^{-1} (da/dx_i) a^{-1}
            const Matrix s = sys_->diffusion.sigma(x);
            for (Eigen::Index i = 0; i < x.size(); ++i) {
                const Matrix& c = sys_->diffusion.coeffs[static_cast<std::size_t>(i)];
                const Matrix da = c * s.transpose() + s * c.transpose();
                gx[i] -= 0.5 * w.dot(da * w);
            }
        }
        return 0.5 * r.dot(w);
    }

private:
    static Matrix invert(const Matrix& a) {
        Eigen::LDLT<Matrix> ldlt(a);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
            ldlt.vectorD().minCoeff() <= 0.0)
            throw EllipticityError("diffusion matrix a(x) is singular; cannot form the action metric");
        return ldlt.solve(Matrix::Identity(a.rows(), a.cols()));
    }

    const MultiChannelSystem* sys_;
    Matrix drift_;
    std::optional<Matrix> constant_a_;
    std::optional<Matrix> constant_a_inv_;
};

inline double lagrangian(const MultiChannelSystem& sys, int mode, const Vector& x,
                         const Vector& v) {
    return ModeLagrangian(sys, mode).value(x, v);
}

/// Legendre dual of the Lagrangian: <p, b(x)> - (1/2) p^T a(x) p, the value of
/// inf_v { L(x,v) + <p,v> } attained at v = b(x) - a(x) p.
inline double hamiltonian(const MultiChannelSystem& sys, int mode, const Vector& x,
                          const Vector& p) {
    const ModeLagrangian lag(sys, mode);
    return p.dot(lag.drift(x)) - 0.5 * p.dot(lag.a(x) * p);
}

// ---------------------------------------------------------------------------
// Action of a given path (nodal velocities, trapezoid weights)
// ---------------------------------------------------------------------------

namespace detail {

// nodal velocity operator: centered differences inside, second-order
// one-sided at the ends; returns velocities as rows
inline Matrix nodal_velocities(const DiscretePath& path) {
    const Eigen::Index n = path.times.size();
    Matrix v(n, path.dim());
    if (n == 2) {
        const double h = path.times[1] - path.times[0];
        v.row(0) = (path.states.row(1) - path.states.row(0)) / h;
        v.row(1) = v.row(0);
        return v;
    }
    for (Eigen::Index j = 1; j + 1 < n; ++j)
        v.row(j) = (path.states.row(j + 1) - path.states.row(j - 1)) /
                   (path.times[j + 1] - path.times[j - 1]);
    {
        const double h0 = path.times[1] - path.times[0];
        const double h1 = path.times[2] - path.times[1];
        // second-order one-sided difference on a possibly nonuniform grid
        const double a0 = -(2.0 * h0 + h1) / (h0 * (h0 + h1));
        const double a1 = (h0 + h1) / (h0 * h1);
        const double a2 = -h0 / (h1 * (h0 + h1));
        v.row(0) = a0 * path.states.row(0) + a1 * path.states.row(1) + a2 * path.states.row(2);
    }
    {
        const Eigen::Index m = n - 1;
        const double h1 = path.times[m] - path.times[m - 1];
        const double h0 = path.times[m - 1] - path.times[m - 2];
        const double a2 = (2.0 * h1 + h0) / (h1 * (h0 + h1));
        const double a1 = -(h0 + h1) / (h0 * h1);
        const double a0 = h1 / (h0 * (h0 + h1));
        v.row(m) = a0 * path.states.row(m - 2) + a1 * path.states.row(m - 1) +
                   a2 * path.states.row(m);
    }
    return v;
}

inline Vector trapezoid_weights(const Vector& times) {
    const Eigen::Index n = times.size();
    Vector w = Vector::Zero(n);
    for (Eigen::Index k = 0; k + 1 < n; ++k) {
        const double h = times[k + 1] - times[k];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    return w;
}

}  // namespace detail

inline double path_action(const MultiChannelSystem& sys, int mode, const DiscretePath& path) {
    path.validate();
    const ModeLagrangian lag(sys, mode);
    const Matrix vel = detail::nodal_velocities(path);
    const Vector w = detail::trapezoid_weights(path.times);
    double total = 0.0;
    for (Eigen::Index j = 0; j < path.times.size(); ++j)
        total += w[j] * lag.value(path.states.row(j).transpose(), vel.row(j).transpose());
    return total;
}

/// Action with its gradient with respect to every node state (rows match
/// path.states).
inline double path_action_with_gradient(const MultiChannelSystem& sys, int mode,
                                        const DiscretePath& path, Matrix& grad) {
    path.validate();
    const ModeLagrangian lag(sys, mode);
    const Matrix vel = detail::nodal_velocities(path);
    const Vector w = detail::trapezoid_weights(path.times);
    const Eigen::Index n = path.times.size();
    const Eigen::Index d = path.dim();
    grad = Matrix::Zero(n, d);
    Matrix gv_rows(n, d);
    Vector gx(d), gv(d);
    double total = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        total += w[j] * lag.value_with_grad(path.states.row(j).transpose(),
                                            vel.row(j).transpose(), gx, gv);
        grad.row(j) += w[j] * gx.transpose();
        gv_rows.row(j) = w[j] * gv.transpose();
    }
    // transpose of the velocity operator
    if (n == 2) {
        const double h = path.times[1] - path.times[0];
        grad.row(0) -= (gv_rows.row(0) + gv_rows.row(1)) / h;
        grad.row(1) += (gv_rows.row(0) + gv_rows.row(1)) / h;
        return total;
    }
    for (Eigen::Index j = 1; j + 1 < n; ++j) {
        const double span = path.times[j + 1] - path.times[j - 1];
        grad.row(j + 1) += gv_rows.row(j) / span;
        grad.row(j - 1) -= gv_rows.row(j) / span;
    }
    {
        const double h0 = path.times[1] - path.times[0];
        const double h1 = path.times[2] - path.times[1];
        const double a0 = -(2.0 * h0 + h1) / (h0 * (h0 + h1));
        const double a1 = (h0 + h1) / (h0 * h1);
        const double a2 = -h0 / (h1 * (h0 + h1));
        grad.row(0) += a0 * gv_rows.row(0);
        grad.row(1) += a1 * gv_rows.row(0);
        grad.row(2) += a2 * gv_rows.row(0);
    }
    {
        const Eigen::Index m = n - 1;
        const double h1 = path.times[m] - path.times[m - 1];
        const double h0 = path.times[m - 1] - path.times[m - 2];
        const double a2 = (2.0 * h1 + h0) / (h1 * (h0 + h1));
        const double a1 = -(h0 + h1) / (h0 * h1);
        const double a0 = h1 / (h0 * (h0 + h1));
        grad.row(m - 2) += a0 * gv_rows.row(m);
        grad.row(m - 1) += a1 * gv_rows.row(m);
        grad.row(m) += a2 * gv_rows.row(m);
    }
    return total;
}

// ---------------------------------------------------------------------------
// Minimization
// ---------------------------------------------------------------------------

namespace detail {

// Discretization used by the minimizer: per segment, chord velocity with the
// Lagrangian state averaged over the segment ends,
//   S = sum_k (h/2) [ L(x_k, v_k) + L(x_{k+1}, v_k) ].
// Convex in the nodes whenever L is jantly convex, and dyadic refinement of a
// piecewise-linear path never increases the value, which makes the minimum
// monotone under N doubling.
class SegmentObjective {
public:
    SegmentObjective(const ModeLagrangian& lag, const DomainSpec* domain, Vector x0, Vector xN,
                     double horizon, int n_segments, double interior_tol)
        : lag_(&lag), domain_(domain), x0_(std::move(x0)), xN_(std::move(xN)),
          h_(horizon / n_segments), n_(n_segments), d_(x0_.size()),
          interior_tol_(interior_tol) {}

    void set_penalty_weight(double w) { penalty_weight_ = w; }

    [[nodiscard]] Eigen::Index free_size() const { return (n_ - 1) * d_; }

    double operator()(const Vector& z, Vector& grad) const {
        grad.setZero(z.size());
        double total = 0.0;
        Vector xa = x0_, xb(d_), v(d_), gxa(d_), gxb(d_), gv(d_);
        for (int k = 0; k < n_; ++k) {
            node(z, k + 1, xb);
            v = (xb - xa) / h_;
            double seg = lag_->value_with_grad(xa, v, gxa, gv);
            Vector ga = 0.5 * h_ * gxa - 0.5 * gv;
            Vector gb = 0.5 * gv;
            seg += lag_->value_with_grad(xb, v, gxb, gv);
            ga -= 0.5 * gv;
            gb += 0.5 * h_ * gxb + 0.5 * gv;
            total += 0.5 * h_ * seg;
            add_to(grad, k, ga);
            add_to(grad, k + 1, gb);
            xa = xb;
        }
        if (domain_ != nullptr && penalty_weight_ > 0.0) total += penalty(z, grad);
        return total;
    }

    [[nodiscard]] DiscretePath to_path(const Vector& z) const {
        DiscretePath p;
        p.times = Vector::LinSpaced(n_ + 1, 0.0, h_ * n_);
        p.states.resize(n_ + 1, d_);
        p.states.row(0) = x0_.transpose();
        for (int k = 1; k < n_; ++k)
            p.states.row(k) = z.segment((k - 1) * d_, d_).transpose();
        p.states.row(n_) = xN_.transpose();
        return p;
    }

    [[nodiscard]] Vector from_path(const DiscretePath& p) const {
        // resample onto this objective's uniform grid
        Vector z(free_size());
        const double T = h_ * n_;
        const double src_T = p.times[p.times.size() - 1];
        for (int k = 1; k < n_; ++k) {
            const double t = (static_cast<double>(k) / n_) * T;
            const double s = src_T > 0.0 ? t / T * src_T : 0.0;
            z.segment((k - 1) * d_, d_) = interpolate(p, s);
        }
        return z;
    }

private:
    void node(const Vector& z, int k, Vector& out) const {
        if (k == 0) out = x0_;
        else if (k == n_) out = xN_;
        else out = z.segment((k - 1) * d_, d_);
    }

    void add_to(Vector& grad, int k, const Vector& g) const {
        if (k > 0 && k < n_) grad.segment((k - 1) * d_, d_) += g;
    }

    double penalty(const Vector& z, Vector& grad) const {
        double total = 0.0;
        for (int k = 1; k < n_; ++k) {
            const Vector x = z.segment((k - 1) * d_, d_);
            double excess = 0.0;
            Vector dir = Vector::Zero(d_);
            switch (domain_->kind()) {
                case DomainSpec::Kind::Interval: {
                    const double lo = domain_->interval_lo(), hi = domain_->interval_hi();
                    if (x[0] > hi + interior_tol_) { excess = x[0] - hi - interior_tol_; dir[0] = 1.0; }
                    else if (x[0] < lo - interior_tol_) { excess = lo - interior_tol_ - x[0]; dir[0] = -1.0; }
                    break;
                }
                default: {
                    const double sd = domain_->signed_distance(x);
                    if (sd > interior_tol_) {
                        excess = sd - interior_tol_;
                        // finite-difference direction; only active off the feasible set
                        const double eps = 1e-7;
                        for (Eigen::Index i = 0; i < d_; ++i) {
                            Vector xp = x, xm = x;
                            xp[i] += eps;
                            xm[i] -= eps;
                            dir[i] = (domain_->signed_distance(xp) - domain_->signed_distance(xm)) /
                                     (2.0 * eps);
                        }
                    }
                    break;
                }
            }
            if (excess > 0.0) {
                total += penalty_weight_ * h_ * excess * excess;
                grad.segment((k - 1) * d_, d_) += 2.0 * penalty_weight_ * h_ * excess * dir;
            }
        }
        return total;
    }

    static Vector interpolate(const DiscretePath& p, double t) {
        const Eigen::Index n = p.times.size();
        if (t <= p.times[0]) return p.states.row(0).transpose();
        if (t >= p.times[n - 1]) return p.states.row(n - 1).transpose();
        Eigen::Index k = 0;
        while (k + 2 < n && p.times[k + 1] < t) ++k;
        const double h = p.times[k + 1] - p.times[k];
        const double u = h > 0.0 ? (t - p.times[k]) / h : 0.0;
        return ((1.0 - u) * p.states.row(k) + u * p.states.row(k + 1)).transpose();
    }

    const ModeLagrangian* lag_;
    const DomainSpec* domain_;
    Vector x0_, xN_;
    double h_;
    int n_;
    Eigen::Index d_;
    double interior_tol_;
    double penalty_weight_ = 0.0;
};

// flow of the unperturbed mode dynamics by classical RK4
inline Vector flow_step(const ModeLagrangian& lag, const Vector& x, double h) {
    const Vector k1 = lag.drift(x);
    const Vector k2 = lag.drift(x + 0.5 * h * k1);
    const Vector k3 = lag.drift(x + 0.5 * h * k2);
    const Vector k4 = lag.drift(x + h * k3);
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

/// Local minimum of the discretized action over paths from x0 to y in time T,
/// interior states softly constrained to the closed domain. Multi-restart;
/// throws ActionNonconvergence if no restart satisfies the gradient tolerance.
inline ActionResult minimize_action_fixed(const MultiChannelSystem& sys, int mode,
                                          const Vector& x0, const Vector& y, double T, int N,
                                          const ActionSolverOptions& opts = {},
                                          const DomainSpec* domain = nullptr,
                                          const DiscretePath* warm_start = nullptr) {
    if (!(T > 0.0) || N < 2) throw NumericalError("minimize_action_fixed: need T > 0 and N >= 2");
    const ModeLagrangian lag(sys, mode);
    detail::SegmentObjective obj(lag, domain, x0, y, T, N, opts.interior_tol);

    std::vector<Vector> starts;
    {  // straight line
        DiscretePath line;
        line.times = Vector::LinSpaced(N + 1, 0.0, T);
        line.states.resize(N + 1, x0.size());
        for (int k = 0; k <= N; ++k) {
            const double u = static_cast<double>(k) / N;
            line.states.row(k) = ((1.0 - u) * x0 + u * y).transpose();
        }
        starts.push_back(obj.from_path(line));
    }
    if (opts.restarts >= 2) {  // relax along the flow, then jump to the target
        DiscretePath fj;
        fj.times = Vector::LinSpaced(N + 1, 0.0, T);
        fj.states.resize(N + 1, x0.size());
        const int split = (3 * N) / 4;
        Vector x = x0;
        fj.states.row(0) = x.transpose();
        const double h = T / N;
        for (int k = 1; k <= split; ++k) {
            x = detail::flow_step(lag, x, h);
            fj.states.row(k) = x.transpose();
        }
        for (int k = split + 1; k <= N; ++k) {
            const double u = static_cast<double>(k - split) / (N - split);
            fj.states.row(k) = ((1.0 - u) * x + u * y).transpose();
        }
        starts.push_back(obj.from_path(fj));
    }
    if (warm_start != nullptr && warm_start->times.size() >= 2)
        starts.push_back(obj.from_path(*warm_start));

    ActionResult best;
    best.value = std::numeric_limits<double>::infinity();
    best.horizon = T;
    best.endpoint = y;
    LbfgsOptions lopts;
    lopts.grad_tol = opts.grad_tol;
    lopts.max_iterations = opts.max_iterations;

    int used = 0;
    for (auto& z : starts) {
        ++used;
        LbfgsResult lres;
        double w = opts.penalty_weight;
        for (int sweep = 0; sweep < std::max(1, opts.penalty_sweeps); ++sweep) {
            obj.set_penalty_weight(domain != nullptr ? w : 0.0);
            lres = lbfgs_minimize([&](const Vector& v, Vector& g) { return obj(v, g); }, z, lopts);
            w *= 10.0;
            if (domain == nullptr) break;
        }
        // report the unpenalized action of the final iterate
        obj.set_penalty_weight(0.0);
        Vector g(z.size());
        const double raw = obj(z, g);
        if (raw < best.value) {
            best.value = raw;
            best.path = obj.to_path(z);
            best.converged = lres.converged;
            best.grad_norm = lres.grad_norm;
            best.restarts_used = used;
        } else if (lres.converged && !best.converged && raw <= best.value * (1.0 + 1e-9)) {
            best.converged = true;
        }
    }
    if (!best.converged) {
        const bool any_finite = std::isfinite(best.value);
        if (!any_finite)
            throw ActionNonconvergence("action minimization diverged on every restart", best);
        // converged flag stays false; caller decides severity
    }
    return best;
}

// ---------------------------------------------------------------------------
// Rates, profiles, exit sets
// ---------------------------------------------------------------------------

namespace detail {

struct TargetEvaluation {
    double value = std::numeric_limits<double>::infinity();
    ActionResult result;
    bool horizon_warning = false;
};

// min over the horizon grid with warm starts carried across T values
inline TargetEvaluation minimize_over_horizons(const MultiChannelSystem& sys, int mode,
                                               const Vector& x0, const Vector& y,
                                               const ActionSolverOptions& opts,
                                               const DomainSpec* domain) {
    TargetEvaluation ev;
    std::vector<double> grid = opts.t_grid;
    std::sort(grid.begin(), grid.end());
    const DiscretePath* warm = nullptr;
    DiscretePath prev;
    std::vector<double> per_t;
    for (double T : grid) {
        ActionResult r;
        try {
            r = minimize_action_fixed(sys, mode, x0, y, T, opts.n_segments, opts, domain, warm);
        } catch (const ActionNonconvergence& e) {
            r = e.best;
        }
        per_t.push_back(r.value);
        if (r.value < ev.value) {
            ev.value = r.value;
            ev.result = r;
        }
        prev = r.path;
        warm = &prev;
    }
    if (per_t.size() >= 2) {
        const double a = per_t[per_t.size() - 2];
        const double b = per_t[per_t.size() - 1];
        const double scale = std::max({std::abs(a), std::abs(b), 1e-12});
        ev.horizon_warning = std::abs(a - b) / scale >= opts.free_time_tol;
    }
    ev.result.horizon_warning = ev.horizon_warning;
    return ev;
}

}  // namespace detail

/// Minimal action from x0 to the boundary section: coarse boundary sampling,
/// optional golden-section refinement along the boundary parameter, and an
/// outer horizon grid certified by stabilization of the two largest T values.
inline ActionResult rate_to_section(const MultiChannelSystem& sys, int mode,
                                    const DomainSpec& domain, const Vector& x0,
                                    const BoundarySection& section,
                                    const ActionSolverOptions& opts = {}) {
    const int coarse = domain.discrete_boundary() ? 2 : opts.boundary_samples;
    std::vector<Vector> targets;
    std::vector<double> params;
    for (int i = 0; i < coarse; ++i) {
        const double p = static_cast<double>(i) / coarse;
        Vector y = domain.boundary_point(p);
        if (!section_membership(domain, section, y)) continue;
        targets.push_back(y);
        params.push_back(p);
    }
    if (targets.empty()) {
        for (const auto& y : section_sample_points(domain, section)) {
            targets.push_back(y);
            params.push_back(domain.boundary_param(y));
        }
    }

    ActionResult best;
    best.value = std::numeric_limits<double>::infinity();
    double best_param = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        auto ev = detail::minimize_over_horizons(sys, mode, x0, targets[i], opts, &domain);
        if (ev.value < best.value) {
            best = ev.result;
            best.value = ev.value;
            best_param = params[i];
        }
    }

    if (!domain.discrete_boundary() && targets.size() > 2 && opts.refine_iters > 0) {
        // golden-section refinement on the boundary parameter around the best
        // coarse sample
        const double spacing = 1.0 / coarse;
        const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
        double lo = best_param - spacing, hi = best_param + spacing;
        auto eval = [&](double p) -> std::pair<double, ActionResult> {
            double pw = p - std::floor(p);
            Vector y = domain.boundary_point(pw);
            if (!section_membership(domain, section, y))
                return {std::numeric_limits<double>::infinity(), {}};
            auto ev = detail::minimize_over_horizons(sys, mode, x0, y, opts, &domain);
            return {ev.value, ev.result};
        };
        double a = hi - golden * (hi - lo);
        double b = lo + golden * (hi - lo);
        auto fa = eval(a);
        auto fb = eval(b);
        for (int it = 0; it < opts.refine_iters; ++it) {
            if (fa.first <= fb.first) {
                hi = b;
                b = a;
                fb = fa;
                a = hi - golden * (hi - lo);
                fa = eval(a);
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + golden * (hi - lo);
                fb = eval(b);
            }
        }
        for (const auto& cand : {fa, fb})
            if (cand.first < best.value) {
                best = cand.second;
                best.value = cand.first;
            }
    }
    if (!std::isfinite(best.value))
        throw ActionNonconvergence("rate_to_section: no admissible target produced a finite value",
                                   best);
    return best;
}

struct QuasipotentialProfile {
    Vector anchor;                 // interior start point x*
    std::vector<double> params;    // boundary parametrization of each sample
    std::vector<Vector> points;
    std::vector<double> values;
    std::vector<char> converged;   // per-sample flag
    double min_value = 0.0;
};

/// Boundary profile of the point-to-point minimal action from an interior
/// anchor; samples that fail to converge are flagged and excluded from the
/// minimum (error if more than 5% are flagged).
inline QuasipotentialProfile quasipotential_profile(const MultiChannelSystem& sys, int mode,
                                                    const DomainSpec& domain, const Vector& anchor,
                                                    int boundary_samples,
                                                    const ActionSolverOptions& opts = {}) {
    if (!domain.contains(anchor))
        throw NumericalError("quasipotential_profile: anchor must lie in the open domain");
    QuasipotentialProfile profile;
    profile.anchor = anchor;
    const int n = domain.discrete_boundary() ? 2 : boundary_samples;
    int flagged = 0;
    double vmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        const double p = static_cast<double>(i) / n;
        const Vector y = domain.boundary_point(domain.discrete_boundary() ? (i == 0 ? 0.0 : 0.5)
                                                                          : p);
        auto ev = detail::minimize_over_horizons(sys, mode, anchor, y, opts, &domain);
        profile.params.push_back(domain.boundary_param(y));
        profile.points.push_back(y);
        profile.values.push_back(ev.value);
        const bool ok = ev.result.converged && std::isfinite(ev.value);
        profile.converged.push_back(ok ? 1 : 0);
        if (!ok) ++flagged;
        else vmin = std::min(vmin, ev.value);
    }
    if (flagged * 20 > n)
        throw NumericalError("quasipotential_profile: more than 5% of boundary samples failed");
    if (!std::isfinite(vmin))
        throw NumericalError("quasipotential_profile: no converged samples");
    profile.min_value = vmin;
    return profile;
}

/// Boundary argmin set of the profile within the tie tolerance, ordered by
/// boundary parametrization.
inline std::vector<Vector> exit_set(const QuasipotentialProfile& profile, double tie_tol) {
    std::vector<std::pair<double, Vector>> hits;
    for (std::size_t i = 0; i < profile.values.size(); ++i) {
        if (!profile.converged[i]) continue;
        if (profile.values[i] <= profile.min_value + tie_tol)
            hits.emplace_back(profile.params[i], profile.points[i]);
    }
    std::sort(hits.begin(), hits.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Vector> out;
    out.reserve(hits.size());
    for (auto& h : hits) out.push_back(std::move(h.second));
    return out;
}

/// Terminal cost M * dist(y, section)^2: zero on the section, growing without
/// bound off it as M increases.
class PenaltyTerminalCost {
public:
    PenaltyTerminalCost(const DomainSpec& domain, const BoundarySection& section, double strength,
                        int resolution = 2048)
        : strength_(strength) {
        if (!(strength > 0.0)) throw NumericalError("penalty strength must be positive");
        if (section.kind != BoundarySection::Kind::FullBoundary)
            points_ = section_sample_points(domain, section, resolution);
    }

    double operator()(const Vector& y) const {
        if (points_.empty()) return 0.0;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : points_) best = std::min(best, (y - p).squaredNorm());
        return strength_ * best;
    }

    [[nodiscard]] double strength() const { return strength_; }

private:
    double strength_;
    std::vector<Vector> points_;
};

inline PenaltyTerminalCost penalty_terminal_cost(const DomainSpec& domain,
                                                 const BoundarySection& section, double strength) {
    return PenaltyTerminalCost(domain, section, strength);
}

}  // namespace exitrate
