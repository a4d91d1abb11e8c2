#pragma once

// Small fixed-size linear algebra, quaternion attitude chart and frame
// transforms shared by every other header.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace vbflow {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Antisymmetric matrix of the cross product: skew(y) * x == y.cross(x).
inline Mat3 skew(const Vec3& y) {
    Mat3 s;
    s << 0.0, -y.z(), y.y(),
         y.z(), 0.0, -y.x(),
         -y.y(), y.x(), 0.0;
    return s;
}

/// Vector part of a unit quaternion whose scalar part is the nonnegative
/// root q0 = sqrt(1 - |q|^2).  Attitudes with q0 < 0 are outside the chart.
struct QuatVec {
    Vec3 v{Vec3::Zero()};

    QuatVec() = default;
    explicit QuatVec(const Vec3& q) : v(q) {}
    QuatVec(double q1, double q2, double q3) : v(q1, q2, q3) {}

    double norm_squared() const { return v.squaredNorm(); }

    /// Implied scalar part.  Throws if |v| exceeds 1 beyond tolerance.
    double scalar() const {
        const double s2 = 1.0 - v.squaredNorm();
        if (s2 < -1e-12)
            throw std::invalid_argument("QuatVec: |q| > 1, outside the attitude chart");
        return std::sqrt(std::max(s2, 0.0));
    }
};

/// Rotation matrix of the quaternion (q0, q) with q0 = sqrt(1 - |q|^2).
inline Mat3 rotation_matrix(const QuatVec& q) {
    const double q0 = q.scalar();
    const double q1 = q.v.x(), q2 = q.v.y(), q3 = q.v.z();
    Mat3 R;
    R << q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3, 2.0 * (q1 * q2 - q0 * q3), 2.0 * (q1 * q3 + q0 * q2),
         2.0 * (q2 * q1 + q0 * q3), q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3, 2.0 * (q2 * q3 - q0 * q1),
         2.0 * (q3 * q1 - q0 * q2), 2.0 * (q3 * q2 + q0 * q1), q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3;
    return R;
}

/// Body position/attitude plus body-frame linear and angular velocity.
struct RigidState {
    Vec3 h{Vec3::Zero()};   // position of the center of mass (world frame)
    QuatVec q{};            // attitude
    Vec3 l{Vec3::Zero()};   // linear velocity, body frame
    Vec3 r{Vec3::Zero()};   // angular velocity, body frame
};

inline Vec3 body_to_world_point(const RigidState& s, const Vec3& y) {
    return rotation_matrix(s.q) * y + s.h;
}

inline Vec3 world_to_body_point(const RigidState& s, const Vec3& x) {
    return rotation_matrix(s.q).transpose() * (x - s.h);
}

inline Vec3 body_to_world_vector(const RigidState& s, const Vec3& v) {
    return rotation_matrix(s.q) * v;
}

inline Vec3 world_to_body_vector(const RigidState& s, const Vec3& u) {
    return rotation_matrix(s.q).transpose() * u;
}

/// Inverse of a 3x3 matrix with singularity detection.
inline Mat3 inverse_checked(const Mat3& a, double tol = 1e-13) {
    const double det = a.determinant();
    if (std::abs(det) < tol * a.cwiseAbs().maxCoeff() * a.cwiseAbs().maxCoeff() * a.cwiseAbs().maxCoeff() + 1e-300)
        throw std::invalid_argument("inverse_checked: matrix is singular");
    return a.inverse();
}

inline constexpr double pi() { return 3.14159265358979323846; }

}  // namespace vbflow
