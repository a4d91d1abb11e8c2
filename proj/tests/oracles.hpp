#pragma once

// Brute-force quadrature oracles used to pin the analytic panel integrals.
// These stay independent of the implementation paths they check.

#include "vbflow/body.hpp"
#include "vbflow/core.hpp"
#include "vbflow/panel_integrals.hpp"

#include <functional>
#include <vector>

namespace oracle {

using vbflow::Vec3;

// centroid-rule integral over a uniformly subdivided triangle
inline double subdivide_integral(const Vec3& a, const Vec3& b, const Vec3& c, int depth,
                                 const std::function<double(const Vec3&, double)>& f) {
    if (depth == 0) {
        const double area = 0.5 * (b - a).cross(c - a).norm();
        return f((a + b + c) / 3.0, area);
    }
    const Vec3 ab = 0.5 * (a + b), bc = 0.5 * (b + c), ca = 0.5 * (c + a);
    return subdivide_integral(a, ab, ca, depth - 1, f) + subdivide_integral(b, bc, ab, depth - 1, f) +
           subdivide_integral(c, ca, bc, depth - 1, f) + subdivide_integral(ab, bc, ca, depth - 1, f);
}

inline double source_potential_brute(const vbflow::panel::Triangle& t, const Vec3& p, int depth = 7) {
    return subdivide_integral(t.v[0], t.v[1], t.v[2], depth, [&](const Vec3& x, double area) {
        return area / (4.0 * vbflow::pi() * (p - x).norm());
    });
}

inline Vec3 source_velocity_brute(const vbflow::panel::Triangle& t, const Vec3& p, int depth = 7) {
    Vec3 acc = Vec3::Zero();
    for (int c = 0; c < 3; ++c)
        acc[c] = subdivide_integral(t.v[0], t.v[1], t.v[2], depth, [&](const Vec3& x, double area) {
            const Vec3 z = p - x;
            const double r = z.norm();
            return -area * z[c] / (4.0 * vbflow::pi() * r * r * r);
        });
    return acc;
}

// Duffy-type quadrature for the in-plane singular potential: split at the
// singular point, then integrate each corner triangle with the substitution
// x = p + u (A - p) + u v (B - A), whose Jacobian u cancels the 1/r blowup.
inline double source_potential_duffy(const vbflow::panel::Triangle& t, const Vec3& p, int order = 32) {
    std::vector<double> gn, gw;
    vbflow::detail::gauss_legendre(order, gn, gw);
    double total = 0.0;
    for (int k = 0; k < 3; ++k) {
        const Vec3 A = t.v[k], B = t.v[(k + 1) % 3];
        const Vec3 e1 = A - p, e2 = B - A;
        const double twice_area = e1.cross(B - p).norm();
        for (int i = 0; i < order; ++i)
            for (int j = 0; j < order; ++j) {
                const double u = 0.5 * (gn[i] + 1.0);
                const double v = 0.5 * (gn[j] + 1.0);
                const Vec3 x = p + u * e1 + u * v * e2;
                total += 0.25 * gw[i] * gw[j] * u * twice_area / (p - x).norm();
            }
    }
    return total / (4.0 * vbflow::pi());
}

}  // namespace oracle
