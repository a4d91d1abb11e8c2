#pragma once

// Regularized Biot-Savart sums over marker sets.  The mollifier is the
// order-2 algebraic blob: the velocity kernel
//   K_eps(z) = z (|z|^2 + 2.5 eps^2) / (|z|^2 + eps^2)^{5/2}
// corresponds to spreading each strength over zeta_eps(z) =
// (15 / 8 pi) eps^4 / (|z|^2 + eps^2)^{7/2}.

#include "vbflow/core.hpp"
#include "vbflow/markers.hpp"

namespace vbflow {

namespace blob {

inline double kernel_q(double s2, double eps2) {
    const double d = s2 + eps2;
    return (s2 + 2.5 * eps2) / (d * d * std::sqrt(d));
}

inline double kernel_q_derivative_over_s(double s2, double eps2) {
    // d/ds [ (s^2 + 2.5 eps^2) (s^2 + eps^2)^{-5/2} ] / s
    const double d = s2 + eps2;
    const double d35 = d * d * d * std::sqrt(d);
    return (2.0 * d - 5.0 * (s2 + 2.5 * eps2)) / d35;
}

inline double mollifier(double s2, double eps) {
    const double d = s2 + eps * eps;
    const double d7 = d * d * d * std::sqrt(d);
    return 15.0 / (8.0 * pi()) * (eps * eps * eps * eps) / d7;
}

}  // namespace blob

/// Velocity induced by the markers (free-space part of the rotational field).
inline Vec3 blob_velocity(const MarkerSet& markers, const Vec3& y) {
    const double eps2 = markers.blob_radius * markers.blob_radius;
    Vec3 acc = Vec3::Zero();
    for (int k = 0; k < markers.count(); ++k) {
        const Vec3 z = y - markers.position[k];
        acc += markers.strength(k).cross(z) * blob::kernel_q(z.squaredNorm(), eps2);
    }
    return acc / (4.0 * pi());
}

/// Spatial gradient of the blob velocity.
inline Mat3 blob_velocity_gradient(const MarkerSet& markers, const Vec3& y) {
    const double eps2 = markers.blob_radius * markers.blob_radius;
    Mat3 acc = Mat3::Zero();
    for (int k = 0; k < markers.count(); ++k) {
        const Vec3 z = y - markers.position[k];
        const Vec3 a = markers.strength(k);
        const double q = blob::kernel_q(z.squaredNorm(), eps2);
        const double dq = blob::kernel_q_derivative_over_s(z.squaredNorm(), eps2);
        const Vec3 axz = a.cross(z);
        acc += q * skew(a);  // column j of d(a x z)/dy is a x e_j
        acc += dq * axz * z.transpose();
    }
    return acc / (4.0 * pi());
}

/// Mollified vorticity represented by the markers at a point.
inline Vec3 blob_vorticity(const MarkerSet& markers, const Vec3& y) {
    Vec3 acc = Vec3::Zero();
    for (int k = 0; k < markers.count(); ++k) {
        const Vec3 z = y - markers.position[k];
        acc += markers.strength(k) * blob::mollifier(z.squaredNorm(), markers.blob_radius);
    }
    return acc;
}

}  // namespace vbflow
