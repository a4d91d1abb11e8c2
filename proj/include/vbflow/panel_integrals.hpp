#pragma once

// Closed-form integrals of the Newtonian kernel 1/(4 pi r) and its gradient
// over a flat triangle with constant source density.  Used for the singular
// self/near interactions of the boundary solver; far interactions use the
// one-point centroid rule.
//
// Conventions: the panel's geometric normal m follows the outward winding of
// the vertices (it points into the fluid).  The signed solid angle W(P) is
// positive on the +m side.  For P in the panel plane the formulas return the
// principal value; callers add the +/- 2 pi jump explicitly when they need a
// one-sided limit.

#include "vbflow/core.hpp"

#include <array>

namespace vbflow::panel {

struct Triangle {
    std::array<Vec3, 3> v;
    Vec3 m;        // unit geometric normal (outward winding)
    Vec3 centroid;
    double area;
    double diameter;

    static Triangle from_vertices(const Vec3& a, const Vec3& b, const Vec3& c) {
        Triangle t;
        t.v = {a, b, c};
        const Vec3 cross = (b - a).cross(c - a);
        t.area = 0.5 * cross.norm();
        t.m = cross.normalized();
        t.centroid = (a + b + c) / 3.0;
        t.diameter = std::max({(b - a).norm(), (c - b).norm(), (a - c).norm()});
        return t;
    }
};

/// Signed solid angle subtended by the triangle at P (positive on the +m side).
inline double solid_angle(const Triangle& t, const Vec3& p) {
    const Vec3 r1 = t.v[0] - p, r2 = t.v[1] - p, r3 = t.v[2] - p;
    const double n1 = r1.norm(), n2 = r2.norm(), n3 = r3.norm();
    const double numer = r1.dot(r2.cross(r3));
    const double denom = n1 * n2 * n3 + r1.dot(r2) * n3 + r2.dot(r3) * n1 + r3.dot(r1) * n2;
    if (numer == 0.0 && denom >= 0.0) return 0.0;  // in-plane, outside: principal value
    return -2.0 * std::atan2(numer, denom);
}

/// Potential of a unit source density: (1/4pi) * integral of 1/r over the panel.
inline double source_potential(const Triangle& t, const Vec3& p) {
    const double h = (p - t.v[0]).dot(t.m);
    double acc = 0.0;
    for (int k = 0; k < 3; ++k) {
        const Vec3 a = t.v[k], b = t.v[(k + 1) % 3];
        const Vec3 edge = b - a;
        const double len = edge.norm();
        if (len == 0.0) continue;
        const Vec3 e = edge / len;
        const Vec3 nu = e.cross(t.m);  // outward in-plane edge normal
        const double d = (a - p).dot(nu);
        const double ra = (a - p).norm(), rb = (b - p).norm();
        const double denom = ra + rb - len;
        const double log_term = std::log((ra + rb + len) / std::max(denom, 1e-300));
        acc += d * log_term;
    }
    acc -= h * solid_angle(t, p);
    return acc / (4.0 * pi());
}

/// In-plane (edge-log) part of the unit-source potential gradient.
inline Vec3 source_velocity_edge_part(const Triangle& t, const Vec3& p) {
    Vec3 acc = Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
        const Vec3 a = t.v[k], b = t.v[(k + 1) % 3];
        const Vec3 edge = b - a;
        const double len = edge.norm();
        if (len == 0.0) continue;
        const Vec3 e = edge / len;
        const double ra = (a - p).norm(), rb = (b - p).norm();
        const double denom = ra + rb - len;
        const double log_term = std::log((ra + rb + len) / std::max(denom, 1e-300));
        acc += e.cross(t.m) * log_term;
    }
    return -acc / (4.0 * pi());
}

/// Gradient of the unit-source potential at P with an explicit solid angle
/// (pass +/- 2 pi for a one-sided limit at the panel itself, 0 for the
/// in-plane principal value).
inline Vec3 source_velocity(const Triangle& t, const Vec3& p, double w) {
    return source_velocity_edge_part(t, p) - t.m * (w / (4.0 * pi()));
}

/// Gradient of the unit-source potential at P off the panel plane.
inline Vec3 source_velocity(const Triangle& t, const Vec3& p) {
    return source_velocity(t, p, solid_angle(t, p));
}

/// One-point (centroid) approximations for far interactions.
inline double source_potential_far(const Triangle& t, const Vec3& p) {
    return t.area / (4.0 * pi() * (p - t.centroid).norm());
}

inline Vec3 source_velocity_far(const Triangle& t, const Vec3& p) {
    const Vec3 z = p - t.centroid;
    const double r = z.norm();
    return -t.area / (4.0 * pi()) * z / (r * r * r);
}

inline Mat3 source_hessian_point(const Vec3& z, double weight) {
    const double r2 = z.squaredNorm();
    const double r = std::sqrt(r2);
    const double r5 = r2 * r2 * r;
    return weight / (4.0 * pi()) * (3.0 * z * z.transpose() / r5 - Mat3::Identity() / (r2 * r));
}

/// Hessian of the unit-source potential; recursive panel subdivision near the
/// panel, centroid rule otherwise.
inline Mat3 source_hessian(const Triangle& t, const Vec3& p, int depth = 4) {
    const double dist = (p - t.centroid).norm();
    if (depth <= 0 || dist > 2.5 * t.diameter)
        return source_hessian_point(p - t.centroid, t.area);
    Mat3 acc = Mat3::Zero();
    const Vec3 ab = 0.5 * (t.v[0] + t.v[1]);
    const Vec3 bc = 0.5 * (t.v[1] + t.v[2]);
    const Vec3 ca = 0.5 * (t.v[2] + t.v[0]);
    acc += source_hessian(Triangle::from_vertices(t.v[0], ab, ca), p, depth - 1);
    acc += source_hessian(Triangle::from_vertices(t.v[1], bc, ab), p, depth - 1);
    acc += source_hessian(Triangle::from_vertices(t.v[2], ca, bc), p, depth - 1);
    acc += source_hessian(Triangle::from_vertices(ab, bc, ca), p, depth - 1);
    return acc;
}

}  // namespace vbflow::panel
