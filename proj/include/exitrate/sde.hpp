#pragma once

// Euler-Maruyama simulation of the perturbed closed-loop modes, first-exit
// detection by segment-boundary interpolation, and the Monte Carlo
// estimators built on top: per-section exit probabilities, empirical rates,
// exit-location statistics, terminal functionals with their log transform,
// and controlled exit costs.
//
// Every trial draws from its own counter-based stream keyed by
// (seed, trial_index); estimator folds run in trial order, so results are
// bitwise identical for any worker count.

#include <exitrate/action.hpp>
#include <exitrate/common.hpp>
#include <exitrate/domain.hpp>
#include <exitrate/parallel.hpp>
#include <exitrate/rng.hpp>
#include <exitrate/system.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace exitrate {

struct SimParams {
    double epsilon = 0.1;
    double dt = 1e-3;
    double t_max = 10.0;
    std::size_t trials = 10000;
    std::uint64_t seed = 0;
    double censor_limit = 0.01;    // acceptable censored fraction for q-hat
    double phi_cap_factor = 10.0;  // terminal-cost cap for censored trials
    int workers = 0;               // 0 = auto (EXITRATE_THREADS / hardware)

    void validate() const {
        if (!(epsilon > 0.0)) throw ConfigError("sim: epsilon must be positive");
        if (!(dt > 0.0) || !(dt < t_max)) throw ConfigError("sim: need 0 < dt < t_max");
        if (trials < 1) throw ConfigError("sim: trials must be >= 1");
    }
};

struct ExitEvent {
    bool exited = false;
    double tau = 0.0;
    Vector point;
    bool censored = false;
};

struct ExitStats {
    std::size_t trials = 0;
    std::size_t in_section = 0;
    std::size_t exited = 0;
    std::size_t censored = 0;
    double q_hat = 0.0;
    double ci95 = 0.0;
    double censored_fraction = 0.0;
};

struct ExitRecord {
    std::uint64_t trial = 0;
    double tau = 0.0;
    Vector point;
};

// ---------------------------------------------------------------------------
// stepping kernel
// ---------------------------------------------------------------------------

namespace detail {

constexpr int kMaxSimDim = 8;

struct SimKernel {
    int d = 1;
    double dt = 0.0;
    long n_steps = 0;
    double drift_dt[kMaxSimDim * kMaxSimDim] = {};
    double noise_const[kMaxSimDim * kMaxSimDim] = {};  // sqrt(eps*dt) * sigma0
    bool state_affine = false;
    double noise_coeff[kMaxSimDim][kMaxSimDim * kMaxSimDim] = {};  // per-coordinate
    // geometry
    DomainSpec::Kind kind = DomainSpec::Kind::Interval;
    double lo = -1.0, hi = 1.0;
    double center[kMaxSimDim] = {};
    double quad[kMaxSimDim * kMaxSimDim] = {};
    int n_faces = 0;
    std::vector<double> faces;    // row-major n_faces x d
    std::vector<double> offsets;

    [[nodiscard]] bool inside(const double* x) const {
        switch (kind) {
            case DomainSpec::Kind::Interval:
                return x[0] > lo && x[0] < hi;
            case DomainSpec::Kind::Ellipsoid: {
                double s = 0.0;
                for (int i = 0; i < d; ++i) {
                    double row = 0.0;
                    for (int j = 0; j < d; ++j) row += quad[i * d + j] * (x[j] - center[j]);
                    s += (x[i] - center[i]) * row;
                }
                return s < 1.0;
            }
            case DomainSpec::Kind::Polytope: {
                for (int f = 0; f < n_faces; ++f) {
                    double s = 0.0;
                    for (int j = 0; j < d; ++j) s += faces[static_cast<std::size_t>(f) * d + j] * x[j];
                    if (s >= offsets[static_cast<std::size_t>(f)]) return false;
                }
                return true;
            }
        }
        return false;
    }

    // fraction s in [0,1] of the first boundary crossing on segment a -> b,
    // assuming a inside and b outside
    [[nodiscard]] double crossing_fraction(const double* a, const double* b) const {
        switch (kind) {
            case DomainSpec::Kind::Interval: {
                const double delta = b[0] - a[0];
                double s = 1.0;
                if (b[0] >= hi && delta > 0.0) s = std::min(s, (hi - a[0]) / delta);
                if (b[0] <= lo && delta < 0.0) s = std::min(s, (lo - a[0]) / delta);
                return s;
            }
            case DomainSpec::Kind::Ellipsoid: {
                double u[kMaxSimDim], w[kMaxSimDim];
                for (int i = 0; i < d; ++i) {
                    u[i] = a[i] - center[i];
                    w[i] = b[i] - a[i];
                }
                double qa = 0.0, qb = 0.0, qc = -1.0;
                for (int i = 0; i < d; ++i) {
                    double qu = 0.0, qw = 0.0;
                    for (int j = 0; j < d; ++j) {
                        qu += quad[i * d + j] * u[j];
                        qw += quad[i * d + j] * w[j];
                    }
                    qa += w[i] * qw;
                    qb += 2.0 * u[i] * qw;
                    qc += u[i] * qu;
                }
                const double disc = qb * qb - 4.0 * qa * qc;
                if (qa <= 0.0 || disc < 0.0) return 1.0;
                return std::clamp((-qb + std::sqrt(disc)) / (2.0 * qa), 0.0, 1.0);
            }
            case DomainSpec::Kind::Polytope: {
                double s = 1.0;
                for (int f = 0; f < n_faces; ++f) {
                    double da = -offsets[static_cast<std::size_t>(f)];
                    double db = da;
                    for (int j = 0; j < d; ++j) {
                        da += faces[static_cast<std::size_t>(f) * d + j] * a[j];
                        db += faces[static_cast<std::size_t>(f) * d + j] * b[j];
                    }
                    if (db >= 0.0 && db > da) s = std::min(s, std::clamp(-da / (db - da), 0.0, 1.0));
                }
                return s;
            }
        }
        return 1.0;
    }
};

inline SimKernel make_kernel(const MultiChannelSystem& sys, int mode, const DomainSpec& domain,
                             const SimParams& params) {
    const int d = static_cast<int>(sys.dim());
    if (d > kMaxSimDim)
        throw NumericalError("simulation supports state dimension <= " + std::to_string(kMaxSimDim));
    SimKernel k;
    k.d = d;
    k.dt = params.dt;
    k.n_steps = std::lround(params.t_max / params.dt);
    const Matrix b = sys.drift_matrix(mode);
    const double amp = std::sqrt(params.epsilon * params.dt);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            k.drift_dt[i * d + j] = b(i, j) * params.dt;
            k.noise_const[i * d + j] = amp * sys.diffusion.sigma0(i, j);
        }
    k.state_affine = sys.diffusion.kind == DiffusionSpec::Kind::StateAffine;
    if (k.state_affine)
        for (int c = 0; c < d; ++c)
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j)
                    k.noise_coeff[c][i * d + j] =
                        amp * sys.diffusion.coeffs[static_cast<std::size_t>(c)](i, j);

    k.kind = domain.kind();
    switch (domain.kind()) {
        case DomainSpec::Kind::Interval:
            k.lo = domain.interval_lo();
            k.hi = domain.interval_hi();
            break;
        case DomainSpec::Kind::Ellipsoid: {
            const Vector& c = domain.ellipsoid_center();
            const Matrix& q = domain.ellipsoid_matrix();
            for (int i = 0; i < d; ++i) {
                k.center[i] = c[i];
                for (int j = 0; j < d; ++j) k.quad[i * d + j] = q(i, j);
            }
            break;
        }
        case DomainSpec::Kind::Polytope: {
            const Matrix& faces = domain.polytope_faces();
            const Vector& offs = domain.polytope_offsets();
            k.n_faces = static_cast<int>(faces.rows());
            k.faces.resize(static_cast<std::size_t>(k.n_faces) * d);
            k.offsets.resize(static_cast<std::size_t>(k.n_faces));
            for (int f = 0; f < k.n_faces; ++f) {
                k.offsets[static_cast<std::size_t>(f)] = offs[f];
                for (int j = 0; j < d; ++j)
                    k.faces[static_cast<std::size_t>(f) * d + j] = faces(f, j);
            }
            break;
        }
    }
    return k;
}

struct NoRecorder {
    void operator()(long, const double*) const {}
};

template <class Recorder>
ExitEvent run_trial(const SimKernel& k, const double* start, NormalStream& rng, Recorder&& record) {
    double x[kMaxSimDim], xn[kMaxSimDim], z[kMaxSimDim];
    const int d = k.d;
    for (int i = 0; i < d; ++i) x[i] = start[i];
    record(0, x);
    for (long step = 0; step < k.n_steps; ++step) {
        for (int j = 0; j < d; ++j) z[j] = rng.next();
        for (int i = 0; i < d; ++i) {
            double acc = x[i];
            for (int j = 0; j < d; ++j) acc += k.drift_dt[i * d + j] * x[j];
            for (int j = 0; j < d; ++j) acc += k.noise_const[i * d + j] * z[j];
            xn[i] = acc;
        }
        if (k.state_affine) {
            for (int c = 0; c < d; ++c)
                for (int i = 0; i < d; ++i) {
                    double acc = 0.0;
                    for (int j = 0; j < d; ++j) acc += k.noise_coeff[c][i * d + j] * z[j];
                    xn[i] += x[c] * acc;
                }
        }
        bool finite = true;
        for (int i = 0; i < d; ++i) finite = finite && std::isfinite(xn[i]);
        if (!finite) throw NumericalError("simulation overflow (non-finite state)");
        if (!k.inside(xn)) {
            const double s = k.crossing_fraction(x, xn);
            ExitEvent ev;
            ev.exited = true;
            ev.tau = (static_cast<double>(step) + s) * k.dt;
            ev.point.resize(d);
            for (int i = 0; i < d; ++i) ev.point[i] = x[i] + s * (xn[i] - x[i]);
            record(step + 1, ev.point.data());
            return ev;
        }
        for (int i = 0; i < d; ++i) x[i] = xn[i];
        record(step + 1, x);
    }
    ExitEvent ev;
    ev.censored = true;
    ev.tau = static_cast<double>(k.n_steps) * k.dt;
    ev.point.resize(d);
    for (int i = 0; i < d; ++i) ev.point[i] = x[i];
    return ev;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// operations
// ---------------------------------------------------------------------------

/// One Euler-Maruyama trajectory until first exit or the horizon cap. The exit
/// point is the linear interpolation of the crossing segment with the
/// boundary, and the path is truncated there.
inline std::pair<DiscretePath, ExitEvent> simulate_trajectory(const MultiChannelSystem& sys,
                                                              int mode, const DomainSpec& domain,
                                                              const Vector& x0,
                                                              const SimParams& params,
                                                              std::uint64_t trial_index) {
    params.validate();
    if (!domain.contains(x0)) throw NumericalError("simulate_trajectory: x0 must lie in the domain");
    const auto kernel = detail::make_kernel(sys, mode, domain, params);
    NormalStream rng(params.seed, trial_index);

    std::vector<double> flat;
    flat.reserve(1024);
    auto recorder = [&](long, const double* x) {
        for (int i = 0; i < kernel.d; ++i) flat.push_back(x[i]);
    };
    ExitEvent ev;
    try {
        ev = detail::run_trial(kernel, x0.data(), rng, recorder);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " in trial " + std::to_string(trial_index));
    }
    const auto n_nodes = static_cast<Eigen::Index>(flat.size() / static_cast<std::size_t>(kernel.d));
    DiscretePath path;
    path.states.resize(n_nodes, kernel.d);
    path.times.resize(n_nodes);
    for (Eigen::Index r = 0; r < n_nodes; ++r) {
        path.times[r] = static_cast<double>(r) * params.dt;
        for (int c = 0; c < kernel.d; ++c)
            path.states(r, c) = flat[static_cast<std::size_t>(r) * kernel.d + c];
    }
    if (ev.exited && n_nodes >= 2) path.times[n_nodes - 1] = ev.tau;
    return {path, ev};
}

namespace detail {

struct TrialFold {
    std::size_t in_section = 0;
    std::size_t exited = 0;
    std::size_t censored = 0;
    std::vector<ExitRecord> records;
};

template <typename Visit>
void run_trial_range(const MultiChannelSystem& sys, int mode, const DomainSpec& domain,
                     const Vector& x0, const SimParams& params, std::size_t begin,
                     std::size_t end, Visit&& visit) {
    const SimKernel kernel = make_kernel(sys, mode, domain, params);
    for (std::size_t t = begin; t < end; ++t) {
        NormalStream rng(params.seed, t);
        ExitEvent ev;
        try {
            ev = run_trial(kernel, x0.data(), rng, NoRecorder{});
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " in trial " + std::to_string(t));
        }
        visit(t, ev);
    }
}

}  // namespace detail

/// Fraction of trials whose first exit lands in the section, with a binomial
/// 95% confidence half-width. Censored trials are reported separately and
/// never counted in the numerator.
inline ExitStats estimate_exit_probability(const MultiChannelSystem& sys, int mode,
                                           const DomainSpec& domain, const Vector& x0,
                                           const BoundarySection& section, const SimParams& params,
                                           std::vector<ExitRecord>* exit_dump = nullptr) {
    params.validate();
    if (!domain.contains(x0)) throw NumericalError("estimate_exit_probability: x0 not in domain");

    auto chunk = [&](std::size_t b, std::size_t e) {
        detail::TrialFold f;
        detail::run_trial_range(sys, mode, domain, x0, params, b, e,
                                [&](std::size_t t, const ExitEvent& ev) {
                                    if (ev.censored) {
                                        ++f.censored;
                                        return;
                                    }
                                    ++f.exited;
                                    if (section_membership(domain, section, ev.point)) ++f.in_section;
                                    if (exit_dump != nullptr)
                                        f.records.push_back({t, ev.tau, ev.point});
                                });
        return f;
    };
    auto fold = [](detail::TrialFold acc, detail::TrialFold part) {
        acc.in_section += part.in_section;
        acc.exited += part.exited;
        acc.censored += part.censored;
        acc.records.insert(acc.records.end(), part.records.begin(), part.records.end());
        return acc;
    };
    const auto total =
        parallel_chunked<detail::TrialFold>(params.trials, 1024, chunk, {}, fold, params.workers);

    ExitStats stats;
    stats.trials = params.trials;
    stats.in_section = total.in_section;
    stats.exited = total.exited;
    stats.censored = total.censored;
    const auto n = static_cast<double>(params.trials);
    stats.q_hat = static_cast<double>(total.in_section) / n;
    stats.ci95 = 1.96 * std::sqrt(stats.q_hat * (1.0 - stats.q_hat) / n);
    stats.censored_fraction = static_cast<double>(total.censored) / n;
    if (exit_dump != nullptr) *exit_dump = std::move(total.records);
    if (stats.censored_fraction > params.censor_limit)
        throw HorizonError("censored fraction " + format_double(stats.censored_fraction) +
                           " exceeds censor_limit " + format_double(params.censor_limit) +
                           "; increase t_max");
    return stats;
}

/// -eps log q; q = 0 maps to the infinite-rate marker (+inf), signaling an
/// undersampled rare event rather than an error.
inline double empirical_rate(double q_hat, double epsilon) {
    if (!(epsilon > 0.0)) throw NumericalError("empirical_rate: epsilon must be positive");
    if (q_hat < 0.0 || q_hat > 1.0) throw NumericalError("empirical_rate: q outside [0,1]");
    if (q_hat == 0.0) return std::numeric_limits<double>::infinity();
    return -epsilon * std::log(q_hat);
}

struct ExitHistogram {
    std::vector<std::size_t> bin_counts;  // over the boundary parametrization
    std::size_t exits = 0;
    std::size_t censored = 0;
    double concentration = 0.0;  // fraction of exits within delta of Sigma
};

enum class BoundaryMetric { Euclidean, Geodesic };

/// Histogram of exit locations over the boundary parametrization plus the
/// concentration statistic against a caller-supplied candidate exit set.
inline ExitHistogram exit_location_histogram(const MultiChannelSystem& sys, int mode,
                                             const DomainSpec& domain, const Vector& x0,
                                             const SimParams& params, int bins,
                                             const std::vector<Vector>& sigma, double delta,
                                             BoundaryMetric metric = BoundaryMetric::Euclidean) {
    params.validate();
    if (bins < 1) throw ConfigError("exit_location_histogram: bins must be >= 1");
    SimParams relaxed = params;
    relaxed.censor_limit = 1.0;  // censoring is accounted for explicitly here

    struct Fold {
        std::vector<std::size_t> bins;
        std::size_t exits = 0;
        std::size_t censored = 0;
        std::size_t near = 0;
    };
    auto chunk = [&](std::size_t b, std::size_t e) {
        Fold f;
        f.bins.assign(static_cast<std::size_t>(bins), 0);
        detail::run_trial_range(sys, mode, domain, x0, relaxed, b, e,
                                [&](std::size_t, const ExitEvent& ev) {
                                    if (ev.censored) {
                                        ++f.censored;
                                        return;
                                    }
                                    ++f.exits;
                                    const double p = domain.boundary_param(ev.point);
                                    auto bin = static_cast<std::size_t>(p * bins);
                                    if (bin >= static_cast<std::size_t>(bins))
                                        bin = static_cast<std::size_t>(bins) - 1;
                                    ++f.bins[bin];
                                    double dist = std::numeric_limits<double>::infinity();
                                    for (const auto& s : sigma)
                                        dist = std::min(dist,
                                                        metric == BoundaryMetric::Euclidean
                                                            ? (ev.point - s).norm()
                                                            : domain.geodesic_distance(ev.point, s));
                                    if (dist <= delta) ++f.near;
                                });
        return f;
    };
    auto fold = [](Fold acc, Fold part) {
        if (acc.bins.empty()) acc.bins = std::move(part.bins);
        else
            for (std::size_t i = 0; i < acc.bins.size(); ++i) acc.bins[i] += part.bins[i];
        acc.exits += part.exits;
        acc.censored += part.censored;
        acc.near += part.near;
        return acc;
    };
    const auto total = parallel_chunked<Fold>(params.trials, 1024, chunk, {}, fold, params.workers);
    if (total.exits == 0)
        throw NumericalError("exit_location_histogram: no uncensored exits in the sample");
    ExitHistogram h;
    h.bin_counts = total.bins;
    h.exits = total.exits;
    h.censored = total.censored;
    h.concentration = static_cast<double>(total.near) / static_cast<double>(total.exits);
    return h;
}

struct TerminalFunctionalEstimate {
    double f_hat = 0.0;      // mean of exp(-Phi(exit)/eps)
    double j_hat = 0.0;      // -eps log f_hat
    double se_f = 0.0;
    double se_j = 0.0;
    double censored_fraction = 0.0;
    double phi_cap = 0.0;
    bool censored_bias_flagged = false;
};

/// Sample mean of exp(-Phi(exit)/eps) and its log transform. Censored trials
/// contribute exp(-phi_cap/eps) with phi_cap = phi_cap_factor * max Phi over a
/// boundary probe set, and flag the estimate as biased.
inline TerminalFunctionalEstimate estimate_terminal_functional(
    const MultiChannelSystem& sys, int mode, const DomainSpec& domain, const Vector& x0,
    const std::function<double(const Vector&)>& terminal_cost, const SimParams& params) {
    params.validate();
    SimParams relaxed = params;
    relaxed.censor_limit = 1.0;

    double phi_max = 0.0;
    for (const auto& y : domain.boundary_samples(256)) {
        const double v = terminal_cost(y);
        if (v < 0.0) throw NumericalError("terminal cost must be nonnegative on the boundary");
        phi_max = std::max(phi_max, v);
    }
    const double phi_cap = params.phi_cap_factor * phi_max;
    const double censored_weight = std::exp(-phi_cap / params.epsilon);

    struct Fold {
        double sum = 0.0;
        double sum_sq = 0.0;
        std::size_t censored = 0;
    };
    auto chunk = [&](std::size_t b, std::size_t e) {
        Fold f;
        detail::run_trial_range(sys, mode, domain, x0, relaxed, b, e,
                                [&](std::size_t, const ExitEvent& ev) {
                                    double w;
                                    if (ev.censored) {
                                        ++f.censored;
                                        w = censored_weight;
                                    } else {
                                        w = std::exp(-terminal_cost(ev.point) / params.epsilon);
                                    }
                                    f.sum += w;
                                    f.sum_sq += w * w;
                                });
        return f;
    };
    auto fold = [](Fold acc, Fold part) {
        acc.sum += part.sum;
        acc.sum_sq += part.sum_sq;
        acc.censored += part.censored;
        return acc;
    };
    const auto total = parallel_chunked<Fold>(params.trials, 1024, chunk, {}, fold, params.workers);

    const auto n = static_cast<double>(params.trials);
    TerminalFunctionalEstimate est;
    est.f_hat = total.sum / n;
    est.phi_cap = phi_cap;
    est.censored_fraction = static_cast<double>(total.censored) / n;
    est.censored_bias_flagged = total.censored > 0;
    const double var = std::max(0.0, total.sum_sq / n - est.f_hat * est.f_hat);
    est.se_f = std::sqrt(var / n);
    if (est.f_hat <= 0.0) {
        est.j_hat = std::numeric_limits<double>::infinity();
        est.se_j = std::numeric_limits<double>::infinity();
    } else {
        est.j_hat = -params.epsilon * std::log(est.f_hat);
        est.se_j = params.epsilon * est.se_f / est.f_hat;  // delta method
    }
    return est;
}

struct ControlCostEstimate {
    double j_hat = 0.0;
    double se = 0.0;
    double censored_fraction = 0.0;
};

/// Monte Carlo value of the controlled exit cost: simulate
/// d eta = v(t, eta) dt + sqrt(eps) sigma(eta) dW, accumulate the running
/// Lagrangian of the mode and add the terminal cost at exit. Censored trials
/// contribute their running cost only.
inline ControlCostEstimate evaluate_exit_control_cost(
    const std::function<Vector(double, const Vector&)>& control, const MultiChannelSystem& sys,
    int mode, const DomainSpec& domain, const Vector& x0,
    const std::function<double(const Vector&)>& terminal_cost, const SimParams& params) {
    params.validate();
    const ModeLagrangian lag(sys, mode);
    const auto n_steps = static_cast<long>(std::lround(params.t_max / params.dt));
    const double amp = std::sqrt(params.epsilon * params.dt);

    struct Fold {
        double sum = 0.0;
        double sum_sq = 0.0;
        std::size_t censored = 0;
    };
    auto chunk = [&](std::size_t b, std::size_t e) {
        Fold f;
        const Eigen::Index d = sys.dim();
        for (std::size_t t = b; t < e; ++t) {
            NormalStream rng(params.seed, t);
            Vector x = x0, z(d), drift(d);
            double cost = 0.0;
            bool exited = false;
            for (long step = 0; step < n_steps; ++step) {
                const double time = static_cast<double>(step) * params.dt;
                drift = control(time, x);
                cost += lag.value(x, drift) * params.dt;
                for (Eigen::Index i = 0; i < d; ++i) z[i] = rng.next();
                Vector xn = x + drift * params.dt + amp * (sys.diffusion.sigma(x) * z);
                if (!xn.allFinite())
                    throw NumericalError("controlled simulation overflow in trial " +
                                         std::to_string(t));
                if (!domain.contains(xn)) {
                    const auto crossing = domain.boundary_crossing(x, xn);
                    cost += terminal_cost(crossing.point);
                    exited = true;
                    break;
                }
                x = xn;
            }
            if (!exited) ++f.censored;
            f.sum += cost;
            f.sum_sq += cost * cost;
        }
        return f;
    };
    auto fold = [](Fold acc, Fold part) {
        acc.sum += part.sum;
        acc.sum_sq += part.sum_sq;
        acc.censored += part.censored;
        return acc;
    };
    const auto total = parallel_chunked<Fold>(params.trials, 1024, chunk, {}, fold, params.workers);
    const auto n = static_cast<double>(params.trials);
    ControlCostEstimate est;
    est.j_hat = total.sum / n;
    est.censored_fraction = static_cast<double>(total.censored) / n;
    const double var = std::max(0.0, total.sum_sq / n - est.j_hat * est.j_hat);
    est.se = std::sqrt(var / n);
    return est;
}

}  // namespace exitrate
