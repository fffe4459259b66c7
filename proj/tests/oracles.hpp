#pragma once

// Independent oracles used by tests only. These must not share code with the
// implementation paths they check.

#include <exitrate/common.hpp>

#include <cmath>
#include <optional>
#include <vector>

namespace exitrate::test {

/// Hitting probability of the upper endpoint for dx = -lam x dt + sqrt(eps) dW
/// on (lo, hi), via the scale-function integral with composite Simpson.
inline double scale_hit_probability(double lam, double eps, double x0, double lo = -1.0,
                                    double hi = 1.0) {
    auto integrand = [&](double s) { return std::exp(lam * s * s / eps); };
    auto simpson = [&](double a, double b) {
        const int n = 4000;  // even
        const double h = (b - a) / n;
        double acc = integrand(a) + integrand(b);
        for (int i = 1; i < n; ++i) acc += integrand(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
        return acc * h / 3.0;
    };
    return simpson(lo, x0) / simpson(lo, hi);
}

/// Characteristic polynomial coefficients (monic, descending powers) by the
/// Faddeev-LeVerrier recursion.
inline std::vector<double> characteristic_polynomial(const Matrix& a) {
    const auto d = a.rows();
    std::vector<double> coeffs(static_cast<std::size_t>(d) + 1, 0.0);
    coeffs[0] = 1.0;
    Matrix m = Matrix::Zero(d, d);
    double c = 1.0;
    for (Eigen::Index k = 1; k <= d; ++k) {
        m = a * (m + c * Matrix::Identity(d, d));
        c = -m.trace() / static_cast<double>(k);
        coeffs[static_cast<std::size_t>(k)] = c;
    }
    return coeffs;
}

/// Routh-Hurwitz test for all roots in the open left half-plane. Returns
/// nullopt when a pivot is too close to zero to call (borderline instance).
inline std::optional<bool> routh_hurwitz_stable(const Matrix& a, double pivot_tol = 1e-7) {
    const auto coeffs = characteristic_polynomial(a);
    const std::size_t n = coeffs.size() - 1;  // degree
    if (n == 0) return true;
    double scale = 0.0;
    for (double c : coeffs) scale = std::max(scale, std::abs(c));
    // necessary condition: all coefficients strictly positive (monic case)
    for (double c : coeffs) {
        if (std::abs(c) <= pivot_tol * scale) return std::nullopt;
        if (c < 0.0) return false;
    }
    // Routh array
    const std::size_t cols = (n + 2) / 2;
    std::vector<std::vector<double>> rows(n + 1, std::vector<double>(cols + 1, 0.0));
    for (std::size_t i = 0; i < coeffs.size(); ++i) rows[i % 2][i / 2] = coeffs[i];
    for (std::size_t r = 2; r <= n; ++r) {
        const double pivot = rows[r - 1][0];
        if (std::abs(pivot) <= pivot_tol * scale) return std::nullopt;
        for (std::size_t c = 0; c + 1 <= cols; ++c)
            rows[r][c] =
                (rows[r - 1][0] * rows[r - 2][c + 1] - rows[r - 2][0] * rows[r - 1][c + 1]) /
                rows[r - 1][0];
    }
    for (std::size_t r = 0; r <= n; ++r) {
        if (std::abs(rows[r][0]) <= pivot_tol * scale) return std::nullopt;
        if (rows[r][0] < 0.0) return false;
    }
    return true;
}

}  // namespace exitrate::test
