#include <catch2/catch_amalgamated.hpp>

#include <exitrate/domain.hpp>

#include "fixtures.hpp"

#include <cmath>
#include <numbers>

using namespace exitrate;
using Catch::Approx;

namespace {
Vector v1(double x) { return Vector::Constant(1, x); }
Vector v2(double x, double y) { return (Vector(2) << x, y).finished(); }
}  // namespace

TEST_CASE("interval membership and signed distance are consistent", "[domain]") {
    const auto d = DomainSpec::interval(-1.0, 1.0);
    CHECK(d.contains(v1(0.0)));
    CHECK(d.contains(v1(0.999)));
    CHECK_FALSE(d.contains(v1(1.0)));
    CHECK(d.signed_distance(v1(0.25)) == Approx(-0.75));
    CHECK(d.signed_distance(v1(1.5)) == Approx(0.5));
    CHECK(d.outward_normal(v1(1.0))[0] == 1.0);
    CHECK(d.outward_normal(v1(-1.0))[0] == -1.0);
    const auto crossing = d.boundary_crossing(v1(0.5), v1(1.5));
    CHECK(crossing.fraction == Approx(0.5));
    CHECK(crossing.point[0] == Approx(1.0));
}

TEST_CASE("section membership on the interval endpoints", "[domain]") {
    const auto dom = test::ex1_domain();
    const auto& right = dom.sections[0];
    CHECK(section_membership(dom, right, v1(1.0)));
    CHECK_FALSE(section_membership(dom, right, v1(-1.0)));
    CHECK_THROWS_AS(section_membership(dom, right, v1(0.2)), GeometryError);
}

TEST_CASE("halfspace cap on the unit disk", "[domain]") {
    const auto dom = test::ex2_domain();
    const auto& east = dom.sections[1];
    CHECK(section_membership(dom, east, v2(1.0, 0.0)));
    CHECK_FALSE(section_membership(dom, east, v2(0.0, 1.0)));
    // inner products 1.0 vs 0.0 against the 0.9 offset
    CHECK(east.direction.dot(v2(1.0, 0.0) - east.center) == Approx(1.0));
    CHECK(east.direction.dot(v2(0.0, 1.0) - east.center) == Approx(0.0));
}

TEST_CASE("ellipsoid normals are unit and outward", "[domain][property]") {
    Matrix q(2, 2);
    q << 2.0, 0.3, 0.3, 1.0;
    const auto dom = DomainSpec::ellipsoid(v2(0.1, -0.2), q);
    for (const auto& y : dom.boundary_samples(1000)) {
        const Vector n = dom.outward_normal(y);
        REQUIRE(n.norm() == Approx(1.0).margin(1e-10));
        const Vector grad = 2.0 * q * (y - dom.ellipsoid_center());
        REQUIRE(n.dot(grad) > 0.0);
        REQUIRE(std::abs(dom.signed_distance(y)) < 1e-9);
    }
}

TEST_CASE("ellipse boundary parametrization round-trips", "[domain]") {
    Matrix q(2, 2);
    q << 1.0, 0.0, 0.0, 4.0;
    const auto dom = DomainSpec::ellipsoid(Vector::Zero(2), q);
    for (double p : {0.0, 0.1, 0.37, 0.5, 0.73, 0.99}) {
        const Vector y = dom.boundary_point(p);
        CHECK(dom.boundary_param(y) == Approx(p).margin(2e-3));
    }
}

TEST_CASE("geodesic distance on the unit circle is arc length", "[domain]") {
    const auto dom = test::ex2_domain();
    const double quarter = dom.geodesic_distance(v2(1.0, 0.0), v2(0.0, 1.0));
    CHECK(quarter == Approx(std::numbers::pi / 2.0).epsilon(1e-3));
    const double half = dom.geodesic_distance(v2(1.0, 0.0), v2(-1.0, 0.0));
    CHECK(half == Approx(std::numbers::pi).epsilon(1e-3));
    CHECK(dom.geodesic_distance(v2(1.0, 0.0), v2(1.0, 0.0)) == Approx(0.0).margin(1e-9));
}

TEST_CASE("square polytope geometry", "[domain]") {
    Matrix faces(4, 2);
    faces << 1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0;
    Vector offs(4);
    offs << 1.0, 1.0, 1.0, 1.0;
    const auto dom = DomainSpec::polytope(faces, offs);
    CHECK(dom.contains(v2(0.0, 0.0)));
    CHECK_FALSE(dom.contains(v2(1.0, 0.5)));
    CHECK(dom.perimeter() == Approx(8.0));
    CHECK(dom.signed_distance(v2(0.5, 0.0)) == Approx(-0.5));
    const Vector n = dom.outward_normal(v2(1.0, 0.2));
    CHECK(n[0] == Approx(1.0));
    CHECK(n[1] == Approx(0.0).margin(1e-12));
    CHECK_THROWS_AS(dom.outward_normal(v2(1.0, 1.0)), GeometryError);
    const auto crossing = dom.boundary_crossing(v2(0.9, 0.0), v2(1.3, 0.0));
    CHECK(crossing.point[0] == Approx(1.0));
}

TEST_CASE("domain attraction check on the scalar example", "[domain]") {
    const auto sys = test::ex1_system();
    const auto dom = test::ex1_domain();
    const auto nominal = verify_domain_attraction(sys, 0, dom, 64);
    REQUIRE(nominal.pass);
    CHECK(nominal.worst_inner_product == Approx(-1.5));
    const auto failure = verify_domain_attraction(sys, 1, dom, 64);
    REQUIRE(failure.pass);
    CHECK(failure.worst_inner_product == Approx(-0.5));
}

TEST_CASE("outward drift fails the attraction check at both endpoints", "[domain]") {
    auto sys = test::ex1_system();
    sys.A = Matrix::Constant(1, 1, 1.0);
    sys.channels.clear();
    Channel ch{Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 0.0)};
    sys.channels = {ch};
    const auto report = verify_domain_attraction(sys, 0, test::ex1_domain(), 64);
    REQUIRE_FALSE(report.pass);
    CHECK(report.worst_inner_product == Approx(1.0));
}

TEST_CASE("point-ball section around a circle point", "[domain]") {
    const auto dom = test::ex2_domain();
    BoundarySection ball;
    ball.name = "east-point";
    ball.kind = BoundarySection::Kind::PointBall;
    ball.center = v2(1.0, 0.0);
    ball.radius = 0.1;
    CHECK(section_membership(dom, ball, v2(1.0, 0.0)));
    CHECK_FALSE(section_membership(dom, ball, v2(std::cos(0.5), std::sin(0.5))));
    const auto pts = section_sample_points(dom, ball);
    REQUIRE_FALSE(pts.empty());
    for (const auto& p : pts) REQUIRE((p - ball.center).norm() <= ball.radius + 1e-6);
}

TEST_CASE("distance to a section matches hand values", "[domain]") {
    const auto dom = test::ex1_domain();
    CHECK(distance_to_section(dom, dom.sections[0], v1(-1.0)) == Approx(2.0));
    CHECK(distance_to_section(dom, dom.sections[0], v1(1.0)) == Approx(0.0));
    CHECK(distance_to_section(dom, dom.sections[2], v1(-1.0)) == 0.0);
}
