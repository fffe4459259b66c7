#pragma once

#include <Eigen/Dense>

#include <cstdio>
#include <stdexcept>
#include <string>

namespace exitrate {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Configuration or input rejected before any computation ran.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Geometry inconsistency (point not on boundary, degenerate normals, ...).
struct GeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical failure inside a solver or estimator.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Diffusion matrix a(x) lost uniform ellipticity somewhere it is needed.
struct EllipticityError : NumericalError {
    using NumericalError::NumericalError;
};

/// Simulation horizon too short for the requested estimator.
struct HorizonError : NumericalError {
    using NumericalError::NumericalError;
};

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

}  // namespace exitrate
