#pragma once

// Low-dimensional finite-difference oracle for the exit boundary value
// problem: (eps/2) sum a_ik d2f + <b(x), grad f> = 0 in the domain with
// f = exp(-Phi/eps) on the boundary, its log transform J = -eps log f, and
// the residual of J in the transformed (Hamiltonian) equation.
//
// Central differences with a one-sided fallback on the advection term when
// the cell Peclet number exceeds 2; direct sparse solve. d <= 2.

#include <exitrate/action.hpp>
#include <exitrate/common.hpp>
#include <exitrate/domain.hpp>
#include <exitrate/system.hpp>

#include <Eigen/Sparse>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace exitrate {

/// Tensor grid over the domain's bounding box. In 2D, nodes outside the
/// domain act as Dirichlet carriers with boundary data snapped to the nearest
/// boundary point (geometry error O(h), acceptable for an oracle).
struct Grid {
    int dim = 1;
    double h = 0.0;
    Vector lo, hi;          // bounding box corners
    Eigen::Index nx = 0, ny = 1;  // node counts per axis
    std::vector<char> interior;   // node mask
    const DomainSpec* domain = nullptr;

    static Grid build(const DomainSpec& domain, double h) {
        Grid g;
        g.domain = &domain;
        g.h = h;
        g.dim = static_cast<int>(domain.dim());
        if (g.dim > 2) throw ConfigError("pde grids support d <= 2 only");
        if (!(h > 0.0)) throw ConfigError("pde grid spacing must be positive");
        if (g.dim == 1) {
            g.lo = Vector::Constant(1, domain.interval_lo());
            g.hi = Vector::Constant(1, domain.interval_hi());
            g.nx = static_cast<Eigen::Index>(std::lround((g.hi[0] - g.lo[0]) / h)) + 1;
            g.ny = 1;
            if (g.nx < 12) throw ConfigError("pde grid needs >= 10 interior nodes per axis");
            g.interior.assign(static_cast<std::size_t>(g.nx), 0);
            for (Eigen::Index i = 1; i + 1 < g.nx; ++i) g.interior[static_cast<std::size_t>(i)] = 1;
        } else {
            // bounding box from boundary samples, padded by one cell
            const auto pts = domain.boundary_samples(512);
            g.lo = Vector::Constant(2, std::numeric_limits<double>::infinity());
            g.hi = Vector::Constant(2, -std::numeric_limits<double>::infinity());
            for (const auto& p : pts)
                for (int k = 0; k < 2; ++k) {
                    g.lo[k] = std::min(g.lo[k], p[k]);
                    g.hi[k] = std::max(g.hi[k], p[k]);
                }
            g.lo.array() -= h;
            g.hi.array() += h;
            g.nx = static_cast<Eigen::Index>(std::ceil((g.hi[0] - g.lo[0]) / h)) + 1;
            g.ny = static_cast<Eigen::Index>(std::ceil((g.hi[1] - g.lo[1]) / h)) + 1;
            g.interior.assign(static_cast<std::size_t>(g.nx * g.ny), 0);
            Eigen::Index count_x = 0;
            for (Eigen::Index j = 0; j < g.ny; ++j)
                for (Eigen::Index i = 0; i < g.nx; ++i) {
                    Vector x = g.node(i, j);
                    if (domain.contains(x)) g.interior[g.flat(i, j)] = 1;
                }
            for (Eigen::Index i = 0; i < g.nx; ++i) {
                bool any = false;
                for (Eigen::Index j = 0; j < g.ny; ++j) any = any || g.interior[g.flat(i, j)];
                if (any) ++count_x;
            }
            if (count_x < 10) throw ConfigError("pde grid needs >= 10 interior nodes per axis");
        }
        return g;
    }

    [[nodiscard]] std::size_t flat(Eigen::Index i, Eigen::Index j) const {
        return static_cast<std::size_t>(j * nx + i);
    }

    [[nodiscard]] Vector node(Eigen::Index i, Eigen::Index j = 0) const {
        Vector x(dim);
        x[0] = lo[0] + static_cast<double>(i) * h;
        if (dim == 2) x[1] = lo[1] + static_cast<double>(j) * h;
        return x;
    }

    [[nodiscard]] bool is_interior(Eigen::Index i, Eigen::Index j = 0) const {
        if (i < 0 || i >= nx || j < 0 || j >= ny) return false;
        return interior[flat(i, j)] != 0;
    }
};

struct FieldSolution {
    Grid grid;
    std::vector<double> values;   // f or J, node-indexed
    double epsilon = 0.0;
    int mode = 0;
    bool is_log_transformed = false;
};

namespace detail {

// boundary value at a non-interior node: data evaluated at the nearest
// boundary point (exact for 1D endpoints)
inline Vector snap_to_boundary(const DomainSpec& domain, const Vector& x) {
    if (domain.kind() == DomainSpec::Kind::Interval) {
        Vector y(1);
        y[0] = std::abs(x[0] - domain.interval_lo()) <= std::abs(x[0] - domain.interval_hi())
                   ? domain.interval_lo()
                   : domain.interval_hi();
        return y;
    }
    // project along the segment from an interior anchor through x
    // (cheap and adequate: domains are convex)
    Vector anchor = domain.kind() == DomainSpec::Kind::Ellipsoid
                        ? domain.ellipsoid_center()
                        : Vector::Zero(x.size());
    if (!domain.contains(anchor)) {
        // fall back to the boundary sample nearest to x
        double best = std::numeric_limits<double>::infinity();
        Vector out = x;
        for (const auto& p : domain.boundary_samples(1024)) {
            const double d2 = (p - x).squaredNorm();
            if (d2 < best) {
                best = d2;
                out = p;
            }
        }
        return out;
    }
    const auto crossing = domain.boundary_crossing(anchor, anchor + 4.0 * (x - anchor));
    return crossing.point;
}

}  // namespace detail

/// Solves the exit boundary value problem for the mode's generator at the
/// given noise level. The terminal cost enters through the Dirichlet data
/// f = exp(-Phi/eps); infinite cost is represented by f = 0.
inline FieldSolution solve_exit_bvp(const MultiChannelSystem& sys, int mode, double epsilon,
                                    const Grid& grid,
                                    const std::function<double(const Vector&)>& terminal_cost) {
    if (!(epsilon > 0.0)) throw ConfigError("solve_exit_bvp: epsilon must be positive");
    const Matrix drift = sys.drift_matrix(mode);
    const DomainSpec& domain = *grid.domain;
    const double h = grid.h;

    // index interior unknowns
    std::vector<Eigen::Index> unknown_of(grid.interior.size(), -1);
    std::vector<std::size_t> node_of;
    for (std::size_t n = 0; n < grid.interior.size(); ++n)
        if (grid.interior[n]) {
            unknown_of[n] = static_cast<Eigen::Index>(node_of.size());
            node_of.push_back(n);
        }
    const auto n_unknown = static_cast<Eigen::Index>(node_of.size());

    auto dirichlet = [&](Eigen::Index i, Eigen::Index j) {
        const Vector y = detail::snap_to_boundary(domain, grid.node(i, j));
        const double phi = terminal_cost(y);
        if (phi < 0.0) throw NumericalError("terminal cost must be nonnegative on the boundary");
        return std::isinf(phi) ? 0.0 : std::exp(-phi / epsilon);
    };

    std::vector<Eigen::Triplet<double>> trips;
    Vector rhs = Vector::Zero(n_unknown);
    const Eigen::Index nx = grid.nx;

    auto add = [&](Eigen::Index row, Eigen::Index i, Eigen::Index j, double coeff) {
        if (coeff == 0.0) return;
        if (grid.is_interior(i, j))
            trips.emplace_back(row, unknown_of[grid.flat(i, j)], coeff);
        else
            rhs[row] -= coeff * dirichlet(i, j);
    };

    for (Eigen::Index row = 0; row < n_unknown; ++row) {
        const auto n = node_of[static_cast<std::size_t>(row)];
        const Eigen::Index j = static_cast<Eigen::Index>(n) / nx;
        const Eigen::Index i = static_cast<Eigen::Index>(n) % nx;
        const Vector x = grid.node(i, j);
        const Matrix a = diffusion_matrix(sys, x);
        const Vector b = drift * x;
        double diag = 0.0;

        for (int axis = 0; axis < grid.dim; ++axis) {
            const double diff = 0.5 * epsilon * a(axis, axis) / (h * h);
            const double adv = b[axis] / (2.0 * h);
            const Eigen::Index di = axis == 0 ? 1 : 0;
            const Eigen::Index dj = axis == 0 ? 0 : 1;
            const double peclet = std::abs(b[axis]) * h / (epsilon * a(axis, axis));
            if (peclet <= 2.0) {
                add(row, i + di, j + dj, diff + adv);
                add(row, i - di, j - dj, diff - adv);
                diag += -2.0 * diff;
            } else {
                // one-sided advection in the drift direction keeps the stencil
                // monotone when the problem is advection-dominated
                add(row, i + di, j + dj, diff + (b[axis] > 0.0 ? b[axis] / h : 0.0));
                add(row, i - di, j - dj, diff + (b[axis] < 0.0 ? -b[axis] / h : 0.0));
                diag += -2.0 * diff - std::abs(b[axis]) / h;
            }
        }
        if (grid.dim == 2 && a(0, 1) != 0.0) {
            const double cross = 0.5 * epsilon * a(0, 1) / (4.0 * h * h);
            add(row, i + 1, j + 1, 2.0 * cross);
            add(row, i - 1, j - 1, 2.0 * cross);
            add(row, i + 1, j - 1, -2.0 * cross);
            add(row, i - 1, j + 1, -2.0 * cross);
        }
        trips.emplace_back(row, row, diag);
    }

    Eigen::SparseMatrix<double> mat(n_unknown, n_unknown);
    mat.setFromTriplets(trips.begin(), trips.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> solver;
    solver.compute(mat);
    if (solver.info() != Eigen::Success)
        throw NumericalError("solve_exit_bvp: sparse factorization failed (singular stencil)");
    const Vector sol = solver.solve(rhs);
    if (solver.info() != Eigen::Success)
        throw NumericalError("solve_exit_bvp: sparse solve failed");

    FieldSolution field;
    field.grid = grid;
    field.epsilon = epsilon;
    field.mode = mode;
    field.values.assign(grid.interior.size(), 0.0);
    for (std::size_t n = 0; n < grid.interior.size(); ++n) {
        if (grid.interior[n]) {
            field.values[n] = sol[unknown_of[n]];
        } else {
            const Eigen::Index j = static_cast<Eigen::Index>(n) / nx;
            const Eigen::Index i = static_cast<Eigen::Index>(n) % nx;
            field.values[n] = dirichlet(i, j);
        }
    }
    return field;
}

/// J = -eps log f nodewise; requires f > 0 at interior nodes.
inline FieldSolution log_transform(const FieldSolution& field) {
    if (field.is_log_transformed) throw NumericalError("field is already log-transformed");
    FieldSolution out = field;
    out.is_log_transformed = true;
    for (std::size_t n = 0; n < field.values.size(); ++n) {
        const double f = field.values[n];
        if (field.grid.interior[n] && !(f > 0.0))
            throw NumericalError("log_transform: nonpositive interior value (BVP solver failure)");
        out.values[n] = f > 0.0 ? -field.epsilon * std::log(f)
                                : std::numeric_limits<double>::infinity();
    }
    return out;
}

struct ResidualReport {
    double max_abs = 0.0;
    double rms = 0.0;
    Eigen::Index nodes_checked = 0;
};

/// Residual of the transformed field in
/// (eps/2) sum a_ik d2J + H(x, grad J) = 0, checked at interior nodes whose
/// full central stencil is interior.
inline ResidualReport hjb_residual(const FieldSolution& j_field, const MultiChannelSystem& sys,
                                   int mode) {
    if (!j_field.is_log_transformed)
        throw NumericalError("hjb_residual expects the log-transformed field");
    const Grid& grid = j_field.grid;
    const double h = grid.h;
    const double eps = j_field.epsilon;
    ResidualReport report;
    double sum_sq = 0.0;

    for (Eigen::Index j = 0; j < grid.ny; ++j)
        for (Eigen::Index i = 0; i < grid.nx; ++i) {
            if (!grid.is_interior(i, j)) continue;
            bool full = grid.is_interior(i - 1, j) && grid.is_interior(i + 1, j);
            if (grid.dim == 2)
                full = full && grid.is_interior(i, j - 1) && grid.is_interior(i, j + 1);
            if (!full) continue;
            const Vector x = grid.node(i, j);
            const Matrix a = diffusion_matrix(sys, x);
            const double c = j_field.values[grid.flat(i, j)];
            Vector grad(grid.dim);
            double second = 0.0;
            {
                const double fp = j_field.values[grid.flat(i + 1, j)];
                const double fm = j_field.values[grid.flat(i - 1, j)];
                grad[0] = (fp - fm) / (2.0 * h);
                second += a(0, 0) * (fp - 2.0 * c + fm) / (h * h);
            }
            if (grid.dim == 2) {
                const double fp = j_field.values[grid.flat(i, j + 1)];
                const double fm = j_field.values[grid.flat(i, j - 1)];
                grad[1] = (fp - fm) / (2.0 * h);
                second += a(1, 1) * (fp - 2.0 * c + fm) / (h * h);
                if (a(0, 1) != 0.0 && grid.is_interior(i + 1, j + 1) &&
                    grid.is_interior(i - 1, j - 1) && grid.is_interior(i + 1, j - 1) &&
                    grid.is_interior(i - 1, j + 1)) {
                    const double cross =
                        (j_field.values[grid.flat(i + 1, j + 1)] -
                         j_field.values[grid.flat(i + 1, j - 1)] -
                         j_field.values[grid.flat(i - 1, j + 1)] +
                         j_field.values[grid.flat(i - 1, j - 1)]) /
                        (4.0 * h * h);
                    second += 2.0 * a(0, 1) * cross;
                }
            }
            const double residual = 0.5 * eps * second + hamiltonian(sys, mode, x, grad);
            report.max_abs = std::max(report.max_abs, std::abs(residual));
            sum_sq += residual * residual;
            ++report.nodes_checked;
        }
    if (report.nodes_checked > 0)
        report.rms = std::sqrt(sum_sq / static_cast<double>(report.nodes_checked));
    return report;
}

/// Field value at a point by multilinear interpolation of grid nodes.
inline double field_value_at(const FieldSolution& field, const Vector& x) {
    const Grid& g = field.grid;
    const double fx = (x[0] - g.lo[0]) / g.h;
    const auto i0 = static_cast<Eigen::Index>(std::floor(fx));
    const double tx = fx - static_cast<double>(i0);
    auto clamp_x = [&](Eigen::Index i) { return std::clamp<Eigen::Index>(i, 0, g.nx - 1); };
    if (g.dim == 1) {
        const double v0 = field.values[g.flat(clamp_x(i0), 0)];
        const double v1 = field.values[g.flat(clamp_x(i0 + 1), 0)];
        return v0 * (1.0 - tx) + v1 * tx;
    }
    const double fy = (x[1] - g.lo[1]) / g.h;
    const auto j0 = static_cast<Eigen::Index>(std::floor(fy));
    const double ty = fy - static_cast<double>(j0);
    auto clamp_y = [&](Eigen::Index j) { return std::clamp<Eigen::Index>(j, 0, g.ny - 1); };
    const double v00 = field.values[g.flat(clamp_x(i0), clamp_y(j0))];
    const double v10 = field.values[g.flat(clamp_x(i0 + 1), clamp_y(j0))];
    const double v01 = field.values[g.flat(clamp_x(i0), clamp_y(j0 + 1))];
    const double v11 = field.values[g.flat(clamp_x(i0 + 1), clamp_y(j0 + 1))];
    return (v00 * (1.0 - tx) + v10 * tx) * (1.0 - ty) + (v01 * (1.0 - tx) + v11 * tx) * ty;
}

}  // namespace exitrate
