#pragma once

// Multi-channel linear system with single-channel failure modes. Mode 0 is the
// nominal closed loop; mode j >= 1 removes channel j's feedback.

#include <exitrate/common.hpp>

#include <Eigen/Eigenvalues>

#include <string>
#include <utility>
#include <vector>

namespace exitrate {

struct Channel {
    Matrix B;  // d x r_i
    Matrix K;  // r_i x d
};

/// Diffusion term sigma(x); either constant or affine in the state,
/// sigma(x) = sigma0 + sum_i x_i * coeff[i].
struct DiffusionSpec {
    enum class Kind { Constant, StateAffine };

    Kind kind = Kind::Constant;
    Matrix sigma0;
    std::vector<Matrix> coeffs;     // one d x d matrix per state coordinate
    double lipschitz_bound = 0.0;   // declared bound for the state-affine case
    double ellipticity_floor = 1e-6;

    [[nodiscard]] Eigen::Index dim() const { return sigma0.rows(); }

    [[nodiscard]] Matrix sigma(const Vector& x) const {
        if (kind == Kind::Constant) return sigma0;
        Matrix s = sigma0;
        for (Eigen::Index i = 0; i < x.size(); ++i) s += x[i] * coeffs[static_cast<std::size_t>(i)];
        return s;
    }

    /// Sum of coefficient spectral-norm bounds; a Lipschitz constant for sigma.
    [[nodiscard]] double coefficient_norm() const {
        double total = 0.0;
        for (const auto& c : coeffs) total += c.norm();
        return total;
    }
};

struct MultiChannelSystem {
    Matrix A;
    std::vector<Channel> channels;
    DiffusionSpec diffusion;

    [[nodiscard]] Eigen::Index dim() const { return A.rows(); }
    [[nodiscard]] int n_channels() const { return static_cast<int>(channels.size()); }

    void validate_dimensions() const {
        const Eigen::Index d = dim();
        if (d < 1 || A.cols() != d) throw ConfigError("system matrix A must be square and nonempty");
        for (std::size_t i = 0; i < channels.size(); ++i) {
            const auto& ch = channels[i];
            if (ch.B.rows() != d || ch.B.cols() < 1)
                throw ConfigError("channel " + std::to_string(i + 1) + ": B must be d x r with r >= 1");
            if (ch.K.cols() != d || ch.K.rows() != ch.B.cols())
                throw ConfigError("channel " + std::to_string(i + 1) + ": K must be r x d matching B");
        }
        if (diffusion.sigma0.rows() != d || diffusion.sigma0.cols() != d)
            throw ConfigError("diffusion sigma0 must be d x d");
        if (diffusion.kind == DiffusionSpec::Kind::StateAffine &&
            diffusion.coeffs.size() != static_cast<std::size_t>(d))
            throw ConfigError("state-affine diffusion needs one coefficient matrix per coordinate");
    }

    /// Closed-loop drift matrix of the given failure mode (0 = nominal).
    [[nodiscard]] Matrix drift_matrix(int mode) const {
        if (mode < 0 || mode > n_channels())
            throw std::out_of_range("mode " + std::to_string(mode) + " out of range 0.." +
                                    std::to_string(n_channels()));
        Matrix m = A;
        for (int i = 0; i < n_channels(); ++i) {
            if (i + 1 == mode) continue;
            const auto& ch = channels[static_cast<std::size_t>(i)];
            m += ch.B * ch.K;
        }
        return m;
    }
};

inline Vector closed_loop_drift(const MultiChannelSystem& sys, int mode, const Vector& x) {
    if (!x.allFinite()) throw NumericalError("closed_loop_drift: non-finite state");
    return sys.drift_matrix(mode) * x;
}

/// a(x) = sigma(x) sigma(x)^T, checked against the ellipticity floor.
inline Matrix diffusion_matrix(const MultiChannelSystem& sys, const Vector& x) {
    const Matrix s = sys.diffusion.sigma(x);
    Matrix a = s * s.transpose();
    a = 0.5 * (a + a.transpose());  // enforce exact symmetry
    Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw NumericalError("diffusion_matrix: eigenvalue iteration failed");
    if (es.eigenvalues().minCoeff() < sys.diffusion.ellipticity_floor)
        throw EllipticityError("diffusion spec violates ellipticity floor at x = [" +
                               format_double(x.size() > 0 ? x[0] : 0.0) + ", ...]");
    return a;
}

struct ModeStability {
    int mode = 0;
    double spectral_abscissa = 0.0;
    bool stable = false;
};

struct VerificationReport {
    std::vector<ModeStability> modes;
    double margin = 0.0;
    bool pass = false;
};

inline double spectral_abscissa(const Matrix& m, const std::string& label) {
    Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success)
        throw NumericalError("eigenvalue iteration failed for " + label);
    return es.eigenvalues().real().maxCoeff();
}

/// Checks that every mode's closed loop is Hurwitz with the given margin.
/// Strictness tolerance: an abscissa must clear -margin by at least 1e-9.
inline VerificationReport verify_gain_tuple(const MultiChannelSystem& sys, double margin = 0.0) {
    constexpr double kStrictTol = 1e-9;
    sys.validate_dimensions();
    VerificationReport report;
    report.margin = margin;
    report.pass = true;
    for (int j = 0; j <= sys.n_channels(); ++j) {
        ModeStability ms;
        ms.mode = j;
        ms.spectral_abscissa = spectral_abscissa(sys.drift_matrix(j), "mode " + std::to_string(j));
        ms.stable = ms.spectral_abscissa < -margin - kStrictTol;
        report.pass = report.pass && ms.stable;
        report.modes.push_back(ms);
    }
    return report;
}

}  // namespace exitrate
