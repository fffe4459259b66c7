#pragma once

// Bounded open domains with closed-form boundary geometry: intervals (d=1),
// ellipsoids (x-c)^T Q (x-c) < 1 (any d), and convex polygons Hx < h (d=2).
// Boundary sections are named subsets of the boundary used to attribute exits.

#include <exitrate/common.hpp>
#include <exitrate/rng.hpp>
#include <exitrate/system.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace exitrate {

struct BoundarySection {
    enum class Kind { FullBoundary, HalfspaceCap, PointBall };

    std::string name;
    Kind kind = Kind::FullBoundary;
    Vector direction;   // halfspace-cap: v in <v, y - c> >= beta
    double offset = 0.0;
    Vector center;      // point-ball: ||y - y0|| <= radius
    double radius = 0.0;
    double tol = 1e-9;
};

struct BoundaryCrossing {
    double fraction = 0.0;  // position along the segment [a, b]
    Vector point;
};

namespace detail {

inline Matrix sqrt_spd(const Matrix& q) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(q);
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
        throw ConfigError("ellipsoid matrix Q must be symmetric positive definite");
    return es.operatorSqrt();
}

}  // namespace detail

class DomainSpec {
public:
    enum class Kind { Interval, Ellipsoid, Polytope };

    std::vector<BoundarySection> sections;
    double boundary_tol = 1e-7;

    static DomainSpec interval(double lo, double hi) {
        if (!(lo < hi)) throw ConfigError("interval domain needs lo < hi");
        DomainSpec d;
        d.kind_ = Kind::Interval;
        d.lo_ = lo;
        d.hi_ = hi;
        return d;
    }

    static DomainSpec ellipsoid(Vector center, Matrix q) {
        DomainSpec d;
        d.kind_ = Kind::Ellipsoid;
        d.center_ = std::move(center);
        d.q_ = 0.5 * (q + q.transpose());
        if (d.q_.rows() != d.center_.size()) throw ConfigError("ellipsoid Q/center dimension mismatch");
        d.q_half_ = detail::sqrt_spd(d.q_);
        d.q_half_inv_ = d.q_half_.inverse();
        if (d.dim() == 2) d.build_arc_table();
        return d;
    }

    /// Convex polygon {x : H x < h}, d = 2 only.
    static DomainSpec polytope(Matrix faces, Vector offsets) {
        DomainSpec d;
        d.kind_ = Kind::Polytope;
        d.faces_ = std::move(faces);
        d.face_offsets_ = std::move(offsets);
        if (d.faces_.cols() != 2) throw ConfigError("polytope domains are supported in d = 2 only");
        if (d.faces_.rows() != d.face_offsets_.size() || d.faces_.rows() < 3)
            throw ConfigError("polytope needs >= 3 face rows matching offsets");
        d.build_polygon();
        d.build_arc_table();
        return d;
    }

    [[nodiscard]] Kind kind() const { return kind_; }
    [[nodiscard]] Eigen::Index dim() const {
        switch (kind_) {
            case Kind::Interval: return 1;
            case Kind::Ellipsoid: return center_.size();
            case Kind::Polytope: return 2;
        }
        return 0;
    }

    [[nodiscard]] double interval_lo() const { return lo_; }
    [[nodiscard]] double interval_hi() const { return hi_; }
    [[nodiscard]] const Vector& ellipsoid_center() const { return center_; }
    [[nodiscard]] const Matrix& ellipsoid_matrix() const { return q_; }
    [[nodiscard]] const Matrix& polytope_faces() const { return faces_; }
    [[nodiscard]] const Vector& polytope_offsets() const { return face_offsets_; }

    [[nodiscard]] bool contains(const Vector& x) const { return signed_distance(x) < 0.0; }

    /// Negative inside, positive outside; metric-accurate near the boundary.
    [[nodiscard]] double signed_distance(const Vector& x) const {
        switch (kind_) {
            case Kind::Interval:
                return std::max(lo_ - x[0], x[0] - hi_);
            case Kind::Ellipsoid: {
                const Vector v = q_half_ * (x - center_);
                const double r = v.norm();
                if (r < 1e-14) return -1.0 / q_half_.operatorNorm();
                // first-order distance: (r - 1) / |grad r|
                const double grad = (q_half_ * (v / r)).norm();
                return (r - 1.0) / grad;
            }
            case Kind::Polytope: {
                double worst = -std::numeric_limits<double>::infinity();
                for (Eigen::Index i = 0; i < faces_.rows(); ++i) {
                    const double s =
                        (faces_.row(i).dot(x) - face_offsets_[i]) / faces_.row(i).norm();
                    worst = std::max(worst, s);
                }
                return worst;
            }
        }
        return 0.0;
    }

    [[nodiscard]] bool on_boundary(const Vector& y) const {
        return std::abs(signed_distance(y)) <= boundary_tol;
    }

    /// Unit outward normal; throws GeometryError where it is not defined
    /// (polygon corners within tol).
    [[nodiscard]] Vector outward_normal(const Vector& y) const {
        switch (kind_) {
            case Kind::Interval: {
                Vector n(1);
                n[0] = (std::abs(y[0] - hi_) <= std::abs(y[0] - lo_)) ? 1.0 : -1.0;
                return n;
            }
            case Kind::Ellipsoid: {
                Vector g = q_ * (y - center_);
                const double norm = g.norm();
                if (norm < 1e-14) throw GeometryError("normal undefined at ellipsoid center");
                return g / norm;
            }
            case Kind::Polytope: {
                int active = -1;
                int n_active = 0;
                const double corner_tol = 10.0 * boundary_tol;
                for (Eigen::Index i = 0; i < faces_.rows(); ++i) {
                    const double s =
                        (faces_.row(i).dot(y) - face_offsets_[i]) / faces_.row(i).norm();
                    if (std::abs(s) <= corner_tol) {
                        ++n_active;
                        active = static_cast<int>(i);
                    }
                }
                if (n_active != 1)
                    throw GeometryError(n_active == 0 ? "point not on polytope boundary"
                                                      : "normal degenerate at polytope corner");
                return faces_.row(active).transpose() / faces_.row(active).norm();
            }
        }
        throw GeometryError("unreachable");
    }

    /// First intersection of the segment a -> b with the boundary, for a
    /// inside and b outside.
    [[nodiscard]] BoundaryCrossing boundary_crossing(const Vector& a, const Vector& b) const {
        switch (kind_) {
            case Kind::Interval: {
                const double d = b[0] - a[0];
                double s = 2.0;
                if (b[0] >= hi_ && d > 0.0) s = std::min(s, (hi_ - a[0]) / d);
                if (b[0] <= lo_ && d < 0.0) s = std::min(s, (lo_ - a[0]) / d);
                if (s > 1.0) throw GeometryError("no boundary crossing on segment");
                Vector y(1);
                y[0] = a[0] + s * d;
                return {s, y};
            }
            case Kind::Ellipsoid: {
                const Vector u = q_half_ * (a - center_);
                const Vector w = q_half_ * (b - a);
                const double qa = w.squaredNorm();
                const double qb = 2.0 * u.dot(w);
                const double qc = u.squaredNorm() - 1.0;
                const double disc = qb * qb - 4.0 * qa * qc;
                if (qa < 1e-300 || disc < 0.0) throw GeometryError("no boundary crossing on segment");
                const double s = (-qb + std::sqrt(disc)) / (2.0 * qa);
                return {s, a + s * (b - a)};
            }
            case Kind::Polytope: {
                double s = std::numeric_limits<double>::infinity();
                for (Eigen::Index i = 0; i < faces_.rows(); ++i) {
                    const double da = faces_.row(i).dot(a) - face_offsets_[i];
                    const double db = faces_.row(i).dot(b) - face_offsets_[i];
                    if (db > 0.0 && db > da) {
                        const double si = -da / (db - da);
                        if (si >= 0.0) s = std::min(s, si);
                    }
                }
                if (!std::isfinite(s) || s > 1.0) throw GeometryError("no boundary crossing on segment");
                return {s, a + s * (b - a)};
            }
        }
        throw GeometryError("unreachable");
    }

    // ---- boundary parametrization ----------------------------------------
    // param in [0,1). Interval boundaries are the two endpoints at params
    // {0, 0.5}; 2D boundaries use normalized arc length.

    [[nodiscard]] bool discrete_boundary() const { return kind_ == Kind::Interval; }

    [[nodiscard]] Vector boundary_point(double param) const {
        switch (kind_) {
            case Kind::Interval: {
                Vector y(1);
                y[0] = (param < 0.25 || param >= 0.75) ? lo_ : hi_;
                return y;
            }
            case Kind::Ellipsoid: {
                if (dim() != 2) throw GeometryError("boundary parametrization needs d <= 2");
                const double theta = 2.0 * std::numbers::pi * arc_to_angle(param);
                Vector u(2);
                u << std::cos(theta), std::sin(theta);
                return center_ + q_half_inv_ * u;
            }
            case Kind::Polytope: {
                const double target = param * perimeter_;
                double acc = 0.0;
                for (std::size_t e = 0; e < poly_vertices_.size(); ++e) {
                    const Vector& v0 = poly_vertices_[e];
                    const Vector& v1 = poly_vertices_[(e + 1) % poly_vertices_.size()];
                    const double len = (v1 - v0).norm();
                    if (target <= acc + len || e + 1 == poly_vertices_.size()) {
                        const double t = len > 0.0 ? std::clamp((target - acc) / len, 0.0, 1.0) : 0.0;
                        return v0 + t * (v1 - v0);
                    }
                    acc += len;
                }
                return poly_vertices_.front();
            }
        }
        throw GeometryError("unreachable");
    }

    [[nodiscard]] double boundary_param(const Vector& y) const {
        switch (kind_) {
            case Kind::Interval:
                return std::abs(y[0] - lo_) <= std::abs(y[0] - hi_) ? 0.0 : 0.5;
            case Kind::Ellipsoid: {
                if (dim() != 2) throw GeometryError("boundary parametrization needs d <= 2");
                const Vector v = q_half_ * (y - center_);
                double theta = std::atan2(v[1], v[0]) / (2.0 * std::numbers::pi);
                if (theta < 0.0) theta += 1.0;
                return angle_to_arc(theta);
            }
            case Kind::Polytope: {
                double best = std::numeric_limits<double>::infinity();
                double best_param = 0.0;
                double acc = 0.0;
                for (std::size_t e = 0; e < poly_vertices_.size(); ++e) {
                    const Vector& v0 = poly_vertices_[e];
                    const Vector& v1 = poly_vertices_[(e + 1) % poly_vertices_.size()];
                    const Vector d = v1 - v0;
                    const double len = d.norm();
                    const double t =
                        len > 0.0 ? std::clamp((y - v0).dot(d) / (len * len), 0.0, 1.0) : 0.0;
                    const double dist = (y - (v0 + t * d)).norm();
                    if (dist < best) {
                        best = dist;
                        best_param = (acc + t * len) / perimeter_;
                    }
                    acc += len;
                }
                return best_param;
            }
        }
        throw GeometryError("unreachable");
    }

    /// Distance along the boundary between two boundary points (d = 2);
    /// Euclidean distance for the interval's two-point boundary.
    [[nodiscard]] double geodesic_distance(const Vector& a, const Vector& b) const {
        if (kind_ == Kind::Interval) return std::abs(a[0] - b[0]);
        const double pa = boundary_param(a);
        const double pb = boundary_param(b);
        const double frac = std::abs(pa - pb);
        return perimeter_ * std::min(frac, 1.0 - frac);
    }

    /// Deterministic quasi-uniform boundary sample of size n.
    [[nodiscard]] std::vector<Vector> boundary_samples(int n, std::uint64_t seed = 0x5eedULL) const {
        std::vector<Vector> out;
        if (kind_ == Kind::Interval) {
            Vector a(1), b(1);
            a[0] = lo_;
            b[0] = hi_;
            out = {a, b};
            return out;
        }
        if (dim() == 2) {
            out.reserve(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i)
                out.push_back(boundary_point(static_cast<double>(i) / n));
            return out;
        }
        // d >= 3 ellipsoid: normalized Gaussian directions from a fixed seed
        NormalStream g(seed, 0);
        out.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            Vector u(dim());
            do {
                for (Eigen::Index k = 0; k < dim(); ++k) u[k] = g.next();
            } while (u.norm() < 1e-12);
            u.normalize();
            out.push_back(center_ + q_half_inv_ * u);
        }
        return out;
    }

    [[nodiscard]] double perimeter() const { return perimeter_; }

private:
    Kind kind_ = Kind::Interval;
    double lo_ = -1.0, hi_ = 1.0;
    Vector center_;
    Matrix q_, q_half_, q_half_inv_;
    Matrix faces_;
    Vector face_offsets_;
    std::vector<Vector> poly_vertices_;
    double perimeter_ = 0.0;
    // cumulative arc length over uniform angle for the ellipse
    std::vector<double> arc_cumulative_;

    void build_polygon() {
        const Eigen::Index m = faces_.rows();
        std::vector<Vector> pts;
        for (Eigen::Index i = 0; i < m; ++i) {
            for (Eigen::Index j = i + 1; j < m; ++j) {
                Matrix a(2, 2);
                a.row(0) = faces_.row(i);
                a.row(1) = faces_.row(j);
                if (std::abs(a.determinant()) < 1e-12) continue;
                Vector rhs(2);
                rhs << face_offsets_[i], face_offsets_[j];
                Vector p = a.colPivHouseholderQr().solve(rhs);
                bool feasible = true;
                for (Eigen::Index k = 0; k < m; ++k)
                    if (faces_.row(k).dot(p) - face_offsets_[k] > 1e-9 * (1.0 + p.norm()))
                        feasible = false;
                if (feasible) pts.push_back(p);
            }
        }
        if (pts.size() < 3) throw ConfigError("polytope is empty or unbounded");
        Vector centroid = Vector::Zero(2);
        for (const auto& p : pts) centroid += p;
        centroid /= static_cast<double>(pts.size());
        std::sort(pts.begin(), pts.end(), [&](const Vector& a, const Vector& b) {
            return std::atan2(a[1] - centroid[1], a[0] - centroid[0]) <
                   std::atan2(b[1] - centroid[1], b[0] - centroid[0]);
        });
        // drop duplicates from corner intersections
        poly_vertices_.clear();
        for (const auto& p : pts)
            if (poly_vertices_.empty() || (p - poly_vertices_.back()).norm() > 1e-10)
                poly_vertices_.push_back(p);
        if ((poly_vertices_.front() - poly_vertices_.back()).norm() <= 1e-10)
            poly_vertices_.pop_back();
        perimeter_ = 0.0;
        for (std::size_t e = 0; e < poly_vertices_.size(); ++e)
            perimeter_ += (poly_vertices_[(e + 1) % poly_vertices_.size()] - poly_vertices_[e]).norm();
    }

    void build_arc_table() {
        if (kind_ != Kind::Ellipsoid) return;
        constexpr int kTable = 4096;
        arc_cumulative_.assign(kTable + 1, 0.0);
        Vector prev = center_;
        for (int i = 0; i <= kTable; ++i) {
            const double theta = 2.0 * std::numbers::pi * i / kTable;
            Vector u(2);
            u << std::cos(theta), std::sin(theta);
            Vector p = center_ + q_half_inv_ * u;
            if (i > 0) arc_cumulative_[static_cast<std::size_t>(i)] =
                arc_cumulative_[static_cast<std::size_t>(i - 1)] + (p - prev).norm();
            prev = p;
        }
        perimeter_ = arc_cumulative_.back();
    }

    // angle fraction (theta / 2pi) -> normalized arc length, and inverse
    [[nodiscard]] double angle_to_arc(double angle_frac) const {
        if (arc_cumulative_.empty()) return angle_frac;
        const double pos = angle_frac * (static_cast<double>(arc_cumulative_.size()) - 1.0);
        const auto i = static_cast<std::size_t>(pos);
        const double t = pos - static_cast<double>(i);
        const double s = (i + 1 < arc_cumulative_.size())
                             ? arc_cumulative_[i] * (1.0 - t) + arc_cumulative_[i + 1] * t
                             : arc_cumulative_.back();
        return s / perimeter_;
    }

    [[nodiscard]] double arc_to_angle(double arc_frac) const {
        if (arc_cumulative_.empty()) return arc_frac;
        const double target = arc_frac * perimeter_;
        const auto it = std::lower_bound(arc_cumulative_.begin(), arc_cumulative_.end(), target);
        if (it == arc_cumulative_.begin()) return 0.0;
        const auto i = static_cast<std::size_t>(it - arc_cumulative_.begin());
        const double s0 = arc_cumulative_[i - 1];
        const double s1 = arc_cumulative_[i];
        const double t = s1 > s0 ? (target - s0) / (s1 - s0) : 0.0;
        return (static_cast<double>(i - 1) + t) / (static_cast<double>(arc_cumulative_.size()) - 1.0);
    }
};

/// True iff y satisfies the section predicate; y must lie near the boundary.
inline bool section_membership(const DomainSpec& domain, const BoundarySection& section,
                               const Vector& y) {
    if (!domain.on_boundary(y))
        throw GeometryError("section_membership: point is not within boundary_tol of the boundary");
    switch (section.kind) {
        case BoundarySection::Kind::FullBoundary:
            return true;
        case BoundarySection::Kind::HalfspaceCap: {
            return section.direction.dot(y - section.center) >= section.offset - section.tol;
        }
        case BoundarySection::Kind::PointBall:
            return (y - section.center).norm() <= section.radius + section.tol;
    }
    return false;
}

/// Representative points of a section, for distance evaluation and search.
inline std::vector<Vector> section_sample_points(const DomainSpec& domain,
                                                 const BoundarySection& section,
                                                 int resolution = 2048) {
    std::vector<Vector> pts;
    for (const auto& y : domain.boundary_samples(resolution))
        if (section_membership(domain, section, y)) pts.push_back(y);
    // a point-ball touching the boundary in a single point can slip through a
    // uniform sample; its center is the natural representative
    if (pts.empty() && section.kind == BoundarySection::Kind::PointBall &&
        domain.on_boundary(section.center))
        pts.push_back(section.center);
    if (pts.empty()) throw GeometryError("boundary section '" + section.name + "' is empty");
    return pts;
}

inline double distance_to_section(const DomainSpec& domain, const BoundarySection& section,
                                  const Vector& y, int resolution = 2048) {
    if (section.kind == BoundarySection::Kind::FullBoundary) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : section_sample_points(domain, section, resolution))
        best = std::min(best, (y - p).norm());
    return best;
}

struct AttractionReport {
    bool pass = false;
    double worst_inner_product = 0.0;
    Vector worst_point;
    int probes = 0;
    int skipped = 0;
};

/// Checks <drift(y), normal(y)> < 0 over a deterministic boundary probe set.
inline AttractionReport verify_domain_attraction(const MultiChannelSystem& sys, int mode,
                                                 const DomainSpec& domain, int n_probes) {
    const Matrix drift = sys.drift_matrix(mode);
    AttractionReport report;
    report.worst_inner_product = -std::numeric_limits<double>::infinity();
    const auto probes = domain.boundary_samples(n_probes);
    for (const auto& y : probes) {
        ++report.probes;
        Vector normal;
        try {
            normal = domain.outward_normal(y);
        } catch (const GeometryError&) {
            ++report.skipped;
            continue;
        }
        const double ip = (drift * y).dot(normal);
        if (ip > report.worst_inner_product) {
            report.worst_inner_product = ip;
            report.worst_point = y;
        }
    }
    if (report.probes > 0 && report.skipped * 10 > report.probes)
        throw GeometryError("verify_domain_attraction: more than 10% of probes had degenerate normals");
    report.pass = report.worst_inner_product < 0.0;
    return report;
}

}  // namespace exitrate
