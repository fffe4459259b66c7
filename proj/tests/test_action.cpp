#include <catch2/catch_amalgamated.hpp>

#include <exitrate/action.hpp>
#include <exitrate/rng.hpp>

#include "fixtures.hpp"

#include <cmath>
#include <numbers>

using namespace exitrate;
using Catch::Approx;

namespace {

Vector v1(double x) { return Vector::Constant(1, x); }
Vector v2(double x, double y) { return (Vector(2) << x, y).finished(); }

// exact minimal action 0 -> y in time T for dx = -lam x dt + dW (a = 1):
// lam |y|^2 / (1 - exp(-2 lam T))
double ou_action(double lam, double y, double T) {
    return lam * y * y / (1.0 - std::exp(-2.0 * lam * T));
}

DiscretePath flow_path(const MultiChannelSystem& sys, int mode, const Vector& x0, double T,
                       int n) {
    const ModeLagrangian lag(sys, mode);
    DiscretePath p;
    p.times = Vector::LinSpaced(n + 1, 0.0, T);
    p.states.resize(n + 1, x0.size());
    Vector x = x0;
    p.states.row(0) = x.transpose();
    const double h = T / n;
    for (int k = 1; k <= n; ++k) {
        const Vector k1 = lag.drift(x);
        const Vector k2 = lag.drift(x + 0.5 * h * k1);
        const Vector k3 = lag.drift(x + 0.5 * h * k2);
        const Vector k4 = lag.drift(x + h * k3);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        p.states.row(k) = x.transpose();
    }
    return p;
}

}  // namespace

TEST_CASE("lagrangian hand values", "[action]") {
    const auto sys = test::ex1_system();
    CHECK(lagrangian(sys, 0, v1(1.0), v1(-1.5)) == Approx(0.0).margin(1e-15));
    CHECK(lagrangian(sys, 0, v1(1.0), v1(0.0)) == Approx(1.125));
    CHECK(lagrangian(sys, 1, v1(1.0), v1(0.0)) == Approx(0.125));
}

TEST_CASE("hamiltonian closed form", "[action]") {
    const auto sys = test::ex1_system();
    CHECK(hamiltonian(sys, 0, v1(1.0), v1(0.0)) == 0.0);
    CHECK(hamiltonian(sys, 0, v1(1.0), v1(1.0)) == Approx(-2.0));
    CHECK(hamiltonian(sys, 0, v1(1.0), v1(-3.0)) == Approx(0.0).margin(1e-14));
}

TEST_CASE("hamiltonian is the inf of L + <p, v> over velocities", "[action][property]") {
    const auto sys1 = test::ex1_system();
    const auto sys2 = test::ex2_system();
    NormalStream g(31, 0);
    const double res = 0.05;
    for (int rep = 0; rep < 100; ++rep) {
        const bool planar = rep % 2 == 1;
        const auto& sys = planar ? sys2 : sys1;
        const Eigen::Index d = planar ? 2 : 1;
        Vector x(d), p(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            x[i] = 0.8 * std::tanh(g.next());
            p[i] = g.next();
        }
        const ModeLagrangian lag(sys, 0);
        const Vector v_star = lag.drift(x) - lag.a(x) * p;
        double grid_min = std::numeric_limits<double>::infinity();
        const int half = 10;
        for (int i = -half; i <= half; ++i)
            for (int j = (d == 2 ? -half : 0); j <= (d == 2 ? half : 0); ++j) {
                Vector v = v_star;
                v[0] += res * i;
                if (d == 2) v[1] += res * j;
                grid_min = std::min(grid_min, lag.value(x, v) + p.dot(v));
            }
        const double h = hamiltonian(sys, 0, x, p);
        REQUIRE(grid_min >= h - 1e-12);
        // nearest grid point is within res/2 per axis; L grows quadratically
        REQUIRE(grid_min - h <= 0.5 * static_cast<double>(d) * (res / 2.0) * (res / 2.0) + 1e-12);
    }
}

TEST_CASE("zero-cost flow path has vanishing action", "[action]") {
    const auto sys = test::ex1_system();
    const auto path = flow_path(sys, 0, v1(1.0), 4.0, 400);
    CHECK(path_action(sys, 0, path) <= 1e-6);
    // perturbing the path off the flow breaks the zero set
    DiscretePath bent = path;
    bent.states(200, 0) += 0.05;
    CHECK(path_action(sys, 0, bent) > 1e-6);
}

TEST_CASE("constant path action is T times the pointwise cost", "[action]") {
    const auto sys = test::ex1_system();
    for (double T : {0.5, 2.0, 8.0, 32.0}) {
        DiscretePath p;
        const int n = 64;
        p.times = Vector::LinSpaced(n + 1, 0.0, T);
        p.states = Matrix::Constant(n + 1, 1, 0.7);
        const double expected = T * lagrangian(sys, 0, v1(0.7), v1(0.0));
        CHECK(path_action(sys, 0, p) == Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("straight-line action matches the hand integral", "[action]") {
    const auto sys = test::ex1_system();
    DiscretePath p;
    const int n = 400;
    p.times = Vector::LinSpaced(n + 1, 0.0, 1.0);
    p.states.resize(n + 1, 1);
    for (int k = 0; k <= n; ++k) p.states(k, 0) = static_cast<double>(k) / n;
    CHECK(path_action(sys, 0, p) == Approx(1.625).margin(2e-4));
}

TEST_CASE("path action gradient matches central differences", "[action][property]") {
    auto check_system = [](const MultiChannelSystem& sys, int mode, Eigen::Index d,
                           std::uint64_t seed) {
        NormalStream g(seed, 0);
        DiscretePath p;
        const int n = 24;
        p.times = Vector::LinSpaced(n + 1, 0.0, 2.0);
        p.states.resize(n + 1, d);
        for (Eigen::Index r = 0; r <= n; ++r)
            for (Eigen::Index c = 0; c < d; ++c) p.states(r, c) = 0.5 * std::tanh(g.next());
        Matrix grad;
        path_action_with_gradient(sys, mode, p, grad);
        const double fd_h = 1e-6;
        for (Eigen::Index r = 0; r <= n; r += 3)
            for (Eigen::Index c = 0; c < d; ++c) {
                DiscretePath pp = p, pm = p;
                pp.states(r, c) += fd_h;
                pm.states(r, c) -= fd_h;
                const double fd =
                    (path_action(sys, mode, pp) - path_action(sys, mode, pm)) / (2.0 * fd_h);
                const double scale = std::max(1.0, std::abs(fd));
                REQUIRE(std::abs(grad(r, c) - fd) <= 1e-5 * scale);
            }
    };
    check_system(test::ex1_system(), 1, 1, 11);
    check_system(test::ex2_system(), 0, 2, 12);
    auto affine = test::ex1_system();
    affine.diffusion.kind = DiffusionSpec::Kind::StateAffine;
    affine.diffusion.sigma0 = Matrix::Constant(1, 1, 1.0);
    affine.diffusion.coeffs = {Matrix::Constant(1, 1, 0.4)};
    check_system(affine, 0, 1, 13);
}

TEST_CASE("constant paths certify unbounded growth of the action in T", "[action]") {
    const auto sys = test::ex1_system();
    double prev = 0.0;
    for (double T : {1.0, 2.0, 4.0, 8.0, 16.0}) {
        DiscretePath p;
        p.times = Vector::LinSpaced(33, 0.0, T);
        p.states = Matrix::Constant(33, 1, 0.5);
        const double a = path_action(sys, 0, p);
        CHECK(a == Approx(T * lagrangian(sys, 0, v1(0.5), v1(0.0))).epsilon(1e-12));
        CHECK(a > prev);
        prev = a;
    }
}

TEST_CASE("resting at the equilibrium costs nothing", "[action][minimize]") {
    const auto sys = test::ex1_system();
    const auto dom = test::ex1_domain();
    const auto r = minimize_action_fixed(sys, 0, v1(0.0), v1(0.0), 4.0, 100, {}, &dom);
    CHECK(r.value == Approx(0.0).margin(1e-12));
    CHECK(r.converged);
}

TEST_CASE("scalar uphill action approaches the quasipotential", "[action][minimize]") {
    const auto sys = test::ex1_system();
    const auto dom = test::ex1_domain();
    ActionSolverOptions opts;
    opts.n_segments = 400;
    const auto nominal = minimize_action_fixed(sys, 0, v1(0.0), v1(1.0), 8.0, 400, opts, &dom);
    REQUIRE(nominal.converged);
    CHECK(nominal.value == Approx(1.5).epsilon(0.02));
    const auto failure = minimize_action_fixed(sys, 1, v1(0.0), v1(1.0), 16.0, 400, opts, &dom);
    REQUIRE(failure.converged);
    CHECK(failure.value == Approx(0.5).epsilon(0.02));
}

TEST_CASE("minimized value is non-increasing under grid refinement", "[action][property]") {
    const auto sys = test::ex1_system();
    const auto dom = test::ex1_domain();
    double prev = std::numeric_limits<double>::infinity();
    for (int n : {100, 200, 400}) {
        const auto r = minimize_action_fixed(sys, 0, v1(0.0), v1(1.0), 8.0, n, {}, &dom);
        REQUIRE(r.value <= prev + 1e-9);
        prev = r.value;
    }
}

TEST_CASE("finite horizon values track the analytic finite-T action", "[action][minimize]") {
    const auto sys = test::ex1_system();
    const auto dom = test::ex1_domain();
    for (double T : {1.0, 2.0, 4.0}) {
        const auto r = minimize_action_fixed(sys, 1, v1(0.0), v1(1.0), T, 200, {}, &dom);
        CHECK(r.value == Approx(ou_action(0.5, 1.0, T)).epsilon(0.02));
    }
}

TEST_CASE("rate to a section equals the endpoint quasipotential", "[action][rate]") {
    const auto sys = test::ex1_system();
    const auto dom = test::ex1_domain();
    ActionSolverOptions opts;
    opts.t_grid = {2.0, 4.0, 8.0, 16.0};
    const auto full = rate_to_section(sys, 0, dom, v1(0.0), dom.sections[2], opts);
    CHECK(full.value == Approx(1.5).epsilon(0.02));
    CHECK_FALSE(full.horizon_warning);
    const auto right = rate_to_section(sys, 0, dom, v1(0.0), dom.sections[0], opts);
    const auto left = rate_to_section(sys, 0, dom, v1(0.0), dom.sections[1], opts);
    CHECK(right.value == Approx(left.value).epsilon(1e-6));
}

TEST_CASE("planar rate lands near the slow axis", "[action][rate]") {
    const auto sys = test::ex2_system();
    const auto dom = test::ex2_domain();
    ActionSolverOptions opts;
    opts.t_grid = {4.0, 8.0, 16.0};
    opts.boundary_samples = 32;
    opts.refine_iters = 10;
    const auto r = rate_to_section(sys, 0, dom, Vector::Zero(2), dom.sections[0], opts);
    CHECK(r.value == Approx(1.0).epsilon(0.03));
    CHECK(std::abs(std::abs(r.endpoint[0]) - 1.0) < 0.05);
    CHECK(std::abs(r.endpoint[1]) < 0.05);
}

TEST_CASE("closure of a section does not change the rate", "[action][rate]") {
    const auto sys = test::ex2_system();
    const auto dom = test::ex2_domain();
    ActionSolverOptions opts;
    opts.t_grid = {4.0, 8.0};
    opts.boundary_samples = 32;
    opts.refine_iters = 8;
    BoundarySection cap = dom.sections[1];
    BoundarySection cap_closed = cap;
    cap_closed.offset -= 1e-9;  // closure of the relative interior
    const auto a = rate_to_section(sys, 0, dom, Vector::Zero(2), cap, opts);
    const auto b = rate_to_section(sys, 0, dom, Vector::Zero(2), cap_closed, opts);
    CHECK(a.value == Approx(b.value).epsilon(1e-3));
}

TEST_CASE("quasipotential profile on the interval", "[action][profile]") {
    const auto sys = test::ex1_system();
    const auto dom = test::ex1_domain();
    ActionSolverOptions opts;
    opts.t_grid = {4.0, 8.0, 16.0};
    opts.n_segments = 200;
    const auto profile = quasipotential_profile(sys, 1, dom, v1(0.0), 2, opts);
    REQUIRE(profile.values.size() == 2);
    CHECK(profile.values[0] == Approx(0.5).epsilon(0.02));
    CHECK(profile.values[1] == Approx(0.5).epsilon(0.02));
    const auto sigma = exit_set(profile, 1e-6);
    REQUIRE(sigma.size() == 2);
    CHECK(sigma[0][0] == Approx(-1.0));
    CHECK(sigma[1][0] == Approx(1.0));
}

TEST_CASE("asymmetric interval selects the cheaper endpoint", "[action][profile]") {
    const auto sys = test::ex1_system();
    const auto dom = test::ex1_domain(-1.0, 2.0);
    ActionSolverOptions opts;
    opts.t_grid = {4.0, 8.0, 16.0};
    opts.n_segments = 200;
    const auto profile = quasipotential_profile(sys, 1, dom, v1(0.0), 2, opts);
    CHECK(profile.values[0] == Approx(0.5).epsilon(0.02));   // y = -1
    CHECK(profile.values[1] == Approx(2.0).epsilon(0.02));   // y = 2, lam * 4
    const auto sigma = exit_set(profile, 1e-3 * profile.min_value);
    REQUIRE(sigma.size() == 1);
    CHECK(sigma[0][0] == Approx(-1.0));
}

TEST_CASE("profile anchor must be interior", "[action][profile]") {
    const auto sys = test::ex1_system();
    const auto dom = test::ex1_domain();
    CHECK_THROWS_AS(quasipotential_profile(sys, 0, dom, v1(1.0), 2, {}), NumericalError);
}

TEST_CASE("penalty terminal cost scales with distance squared", "[action]") {
    const auto dom = test::ex1_domain();
    const auto phi10 = penalty_terminal_cost(dom, dom.sections[0], 10.0);
    CHECK(phi10(v1(1.0)) == Approx(0.0).margin(1e-12));
    CHECK(phi10(v1(-1.0)) == Approx(40.0));
    const auto phi20 = penalty_terminal_cost(dom, dom.sections[0], 20.0);
    CHECK(phi20(v1(-1.0)) == Approx(2.0 * phi10(v1(-1.0))));
    const auto full = penalty_terminal_cost(dom, dom.sections[2], 5.0);
    CHECK(full(v1(-1.0)) == 0.0);
}
