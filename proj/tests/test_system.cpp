#include <catch2/catch_amalgamated.hpp>

#include <exitrate/rng.hpp>
#include <exitrate/system.hpp>

#include "fixtures.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <numeric>

using namespace exitrate;
using Catch::Approx;

TEST_CASE("closed-loop drift matches hand evaluation", "[system]") {
    const auto sys = test::ex1_system();
    Vector x = Vector::Constant(1, 1.0);
    CHECK(closed_loop_drift(sys, 0, x)[0] == Approx(-1.5));
    CHECK(closed_loop_drift(sys, 1, x)[0] == Approx(-0.5));
    CHECK(closed_loop_drift(sys, 2, x)[0] == Approx(-0.5));
    CHECK(closed_loop_drift(sys, 1, Vector::Zero(1))[0] == 0.0);
    CHECK_THROWS_AS(closed_loop_drift(sys, 3, x), std::out_of_range);
    CHECK_THROWS_AS(closed_loop_drift(sys, -1, x), std::out_of_range);
}

TEST_CASE("mode drifts reconstruct the removed channel exactly", "[system]") {
    NormalStream g(2024, 0);
    for (int rep = 0; rep < 20; ++rep) {
        const int d = 1 + rep % 4;
        const int n = 1 + rep % 3;
        MultiChannelSystem sys;
        sys.A.resize(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) sys.A(i, j) = g.next();
        for (int c = 0; c < n; ++c) {
            const int r = 1 + (rep + c) % 2;
            Channel ch;
            ch.B.resize(d, r);
            ch.K.resize(r, d);
            for (int i = 0; i < d * r; ++i) {
                ch.B(i % d, i / d) = g.next();
                ch.K(i / d, i % d) = g.next();
            }
            sys.channels.push_back(ch);
        }
        sys.diffusion.sigma0 = Matrix::Identity(d, d);
        for (int j = 1; j <= n; ++j) {
            const Matrix diff = sys.drift_matrix(0) - sys.drift_matrix(j);
            const Matrix expected = sys.channels[static_cast<std::size_t>(j - 1)].B *
                                    sys.channels[static_cast<std::size_t>(j - 1)].K;
            REQUIRE((diff - expected).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("gain class verification on the scalar example", "[system]") {
    const auto report = verify_gain_tuple(test::ex1_system());
    REQUIRE(report.pass);
    REQUIRE(report.modes.size() == 3);
    CHECK(report.modes[0].spectral_abscissa == Approx(-1.5));
    CHECK(report.modes[1].spectral_abscissa == Approx(-0.5));
    CHECK(report.modes[2].spectral_abscissa == Approx(-0.5));

    const auto weak = verify_gain_tuple(test::ex1_system(-0.4, -0.4));
    REQUIRE_FALSE(weak.pass);
    CHECK(weak.modes[1].spectral_abscissa == Approx(0.1));
    CHECK(weak.modes[2].spectral_abscissa == Approx(0.1));
    CHECK(weak.modes[0].stable);  // nominal 0.5 - 0.8 = -0.3 still stable
}

TEST_CASE("zero gains leave a Hurwitz plant verified", "[system]") {
    MultiChannelSystem sys;
    sys.A.resize(2, 2);
    sys.A << -1.0, 0.3, 0.0, -2.0;
    Channel ch{Matrix::Identity(2, 2), Matrix::Zero(2, 2)};
    sys.channels = {ch};
    sys.diffusion.sigma0 = Matrix::Identity(2, 2);
    const auto report = verify_gain_tuple(sys);
    REQUIRE(report.pass);
    CHECK(report.modes[0].spectral_abscissa == Approx(report.modes[1].spectral_abscissa));
}

TEST_CASE("verification is invariant under channel relabeling", "[system][property]") {
    NormalStream g(77, 0);
    for (int rep = 0; rep < 30; ++rep) {
        const int d = 1 + rep % 3;
        MultiChannelSystem sys;
        sys.A.resize(d, d);
        for (int i = 0; i < d * d; ++i) sys.A(i % d, i / d) = 0.8 * g.next();
        for (int c = 0; c < 2; ++c) {
            Channel ch;
            ch.B.resize(d, 1);
            ch.K.resize(1, d);
            for (int i = 0; i < d; ++i) {
                ch.B(i, 0) = g.next();
                ch.K(0, i) = g.next();
            }
            sys.channels.push_back(ch);
        }
        sys.diffusion.sigma0 = Matrix::Identity(d, d);
        MultiChannelSystem swapped = sys;
        std::swap(swapped.channels[0], swapped.channels[1]);
        REQUIRE(verify_gain_tuple(sys).pass == verify_gain_tuple(swapped).pass);
    }
}

TEST_CASE("diffusion matrix examples", "[system]") {
    auto sys = test::ex1_system();
    CHECK(diffusion_matrix(sys, Vector::Zero(1))(0, 0) == Approx(1.0));

    sys.diffusion.sigma0 = Matrix::Constant(1, 1, 2.0);
    CHECK(diffusion_matrix(sys, Vector::Zero(1))(0, 0) == Approx(4.0));

    auto sys2 = test::ex2_system();
    sys2.diffusion.sigma0 << 1.0, 0.0, 1.0, 1.0;
    const Matrix a = diffusion_matrix(sys2, Vector::Zero(2));
    CHECK(a(0, 0) == Approx(1.0));
    CHECK(a(0, 1) == Approx(1.0));
    CHECK(a(1, 0) == Approx(1.0));
    CHECK(a(1, 1) == Approx(2.0));
}

TEST_CASE("ellipticity floor violations are reported as spec errors", "[system]") {
    auto sys = test::ex1_system();
    sys.diffusion.sigma0 = Matrix::Zero(1, 1);
    CHECK_THROWS_AS(diffusion_matrix(sys, Vector::Zero(1)), EllipticityError);
}

TEST_CASE("state-affine diffusion stays symmetric and elliptic over the domain",
          "[system][property]") {
    auto sys = test::ex1_system();
    sys.diffusion.kind = DiffusionSpec::Kind::StateAffine;
    sys.diffusion.sigma0 = Matrix::Constant(1, 1, 1.0);
    sys.diffusion.coeffs = {Matrix::Constant(1, 1, 0.3)};
    sys.diffusion.lipschitz_bound = 0.3;
    NormalStream g(5, 0);
    for (int k = 0; k < 1000; ++k) {
        Vector x = Vector::Constant(1, std::tanh(g.next()));  // points of [-1,1]
        const Matrix a = diffusion_matrix(sys, x);
        REQUIRE((a - a.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        REQUIRE(a(0, 0) >= sys.diffusion.ellipticity_floor);
    }
    CHECK(sys.diffusion.coefficient_norm() == Approx(0.3));
}

TEST_CASE("dimension validation catches mismatched channels", "[system]") {
    auto sys = test::ex1_system();
    sys.channels[0].K.resize(1, 2);
    CHECK_THROWS_AS(sys.validate_dimensions(), ConfigError);
}
