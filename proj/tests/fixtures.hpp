#pragma once

// Shared test systems.
//
// EX1: scalar two-channel system, A = 0.5, B1 = B2 = 1, K1 = K2 = -1,
//      unit diffusion, domain (-1, 1). Nominal decay 1.5, failure decay 0.5.
// EX2: planar system with drift diag(-1, -4), identity diffusion, unit disk.

#include <exitrate/domain.hpp>
#include <exitrate/system.hpp>

namespace exitrate::test {

inline MultiChannelSystem ex1_system(double k1 = -1.0, double k2 = -1.0, double sigma = 1.0) {
    MultiChannelSystem sys;
    sys.A = Matrix::Constant(1, 1, 0.5);
    Channel c1{Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, k1)};
    Channel c2{Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, k2)};
    sys.channels = {c1, c2};
    sys.diffusion.kind = DiffusionSpec::Kind::Constant;
    sys.diffusion.sigma0 = Matrix::Constant(1, 1, sigma);
    return sys;
}

inline DomainSpec ex1_domain(double lo = -1.0, double hi = 1.0) {
    DomainSpec d = DomainSpec::interval(lo, hi);
    BoundarySection right;
    right.name = "right";
    right.kind = BoundarySection::Kind::PointBall;
    right.center = Vector::Constant(1, hi);
    right.radius = 0.0;
    BoundarySection left;
    left.name = "left";
    left.kind = BoundarySection::Kind::PointBall;
    left.center = Vector::Constant(1, lo);
    left.radius = 0.0;
    BoundarySection full;
    full.name = "full";
    full.kind = BoundarySection::Kind::FullBoundary;
    d.sections = {right, left, full};
    return d;
}

inline MultiChannelSystem ex2_system() {
    MultiChannelSystem sys;
    sys.A = Matrix::Zero(2, 2);
    sys.A(0, 0) = -1.0;
    sys.A(1, 1) = -4.0;
    Channel c{Matrix::Identity(2, 2), Matrix::Zero(2, 2)};
    sys.channels = {c};
    sys.diffusion.kind = DiffusionSpec::Kind::Constant;
    sys.diffusion.sigma0 = Matrix::Identity(2, 2);
    return sys;
}

inline DomainSpec ex2_domain() {
    DomainSpec d = DomainSpec::ellipsoid(Vector::Zero(2), Matrix::Identity(2, 2));
    BoundarySection full;
    full.name = "full";
    full.kind = BoundarySection::Kind::FullBoundary;
    BoundarySection east;
    east.name = "east";
    east.kind = BoundarySection::Kind::HalfspaceCap;
    east.direction = (Vector(2) << 1.0, 0.0).finished();
    east.center = Vector::Zero(2);
    east.offset = 0.9;
    d.sections = {full, east};
    return d;
}

}  // namespace exitrate::test
