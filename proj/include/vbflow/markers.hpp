#pragma once

// Lagrangian vorticity carriers: positions advected by the relative flow,
// per-marker flow-map Jacobians, and the frozen initial vorticity that the
// Cauchy formula transports.

#include "vbflow/body.hpp"
#include "vbflow/core.hpp"
#include "vbflow/surface_mesh.hpp"
#include "vbflow/util.hpp"

#include <fstream>
#include <functional>
#include <limits>
#include <vector>

namespace vbflow {

/// Analytic initial-vorticity fields.  All built-ins are divergence free.
struct VorticitySeedField {
    enum class Kind { Zero, CurlBlob, SolidBall, VortexRing } kind = Kind::Zero;
    Vec3 center = Vec3::Zero();
    double radius = 0.5;       // support radius (blob/ball) or core radius (ring)
    Vec3 amplitude = Vec3::UnitZ();  // blob: vector A of curl(f A); ball: constant omega
    double ring_radius = 1.0;  // circle radius for the ring
    Vec3 ring_axis = Vec3::UnitZ();
    double ring_strength = 1.0;
    double scale = 1.0;        // overall multiplier (used by the time scaling)

    static VorticitySeedField zero() { return {}; }

    static VorticitySeedField curl_blob(const Vec3& center, double radius, const Vec3& a) {
        VorticitySeedField f;
        f.kind = Kind::CurlBlob;
        f.center = center;
        f.radius = radius;
        f.amplitude = a;
        return f;
    }

    static VorticitySeedField solid_ball(const Vec3& center, double radius, const Vec3& omega) {
        VorticitySeedField f;
        f.kind = Kind::SolidBall;
        f.center = center;
        f.radius = radius;
        f.amplitude = omega;
        return f;
    }

    static VorticitySeedField vortex_ring(const Vec3& center, const Vec3& axis, double ring_radius,
                                          double core_radius, double strength) {
        VorticitySeedField f;
        f.kind = Kind::VortexRing;
        f.center = center;
        f.ring_axis = axis.normalized();
        f.ring_radius = ring_radius;
        f.radius = core_radius;
        f.ring_strength = strength;
        return f;
    }

    Vec3 operator()(const Vec3& y) const {
        switch (kind) {
            case Kind::Zero:
                return Vec3::Zero();
            case Kind::SolidBall:
                return (y - center).norm() < radius ? Vec3(scale * amplitude) : Vec3::Zero();
            case Kind::CurlBlob: {
                const Vec3 z = y - center;
                const double rho = z.norm() / radius;
                if (rho >= 1.0 || rho == 0.0) return Vec3::Zero();
                // omega = grad f x A for the C^inf bump f(rho) = exp(1 - 1/(1 - rho^2))
                const double t = 1.0 - rho * rho;
                const double f = std::exp(1.0 - 1.0 / t);
                const double dfdrho = -2.0 * rho / (t * t) * f;
                const Vec3 grad_f = dfdrho * z / (z.norm() * radius);
                return scale * grad_f.cross(amplitude);
            }
            case Kind::VortexRing: {
                const Vec3 z = y - center;
                const double zax = z.dot(ring_axis);
                const Vec3 radial = z - zax * ring_axis;
                const double rho = radial.norm();
                if (rho < 1e-12) return Vec3::Zero();
                const double d2 = (rho - ring_radius) * (rho - ring_radius) + zax * zax;
                const double s = std::sqrt(d2) / radius;
                if (s >= 1.0) return Vec3::Zero();
                const double t = 1.0 - s * s;
                const double bump = std::exp(1.0 - 1.0 / t);
                const Vec3 e_theta = ring_axis.cross(radial / rho);
                return scale * ring_strength * bump * e_theta;
            }
        }
        return Vec3::Zero();
    }

    /// Spatial gradient of the field by central differences (diagnostics input).
    Mat3 gradient(const Vec3& y, double h = 1e-6) const {
        Mat3 g;
        for (int j = 0; j < 3; ++j) {
            Vec3 e = Vec3::Zero();
            e[j] = h;
            g.col(j) = ((*this)(y + e) - (*this)(y - e)) / (2.0 * h);
        }
        return g;
    }

    double divergence(const Vec3& y, double h = 1e-6) const { return gradient(y, h).trace(); }
};

struct SeedSupport {
    enum class Kind { Ball, Shell } kind = Kind::Ball;
    Vec3 center = Vec3::Zero();
    double outer_radius = 0.5;
    double inner_radius = 0.0;

    bool contains(const Vec3& y) const {
        const double d = (y - center).norm();
        return d < outer_radius && (kind == Kind::Ball || d >= inner_radius);
    }
};

struct MarkerSet {
    std::vector<Vec3> seed_position;   // x, frozen
    std::vector<Vec3> position;        // current X(t; 0, x)
    std::vector<Mat3> jacobian;        // G(t; 0, x)
    std::vector<Vec3> omega0;          // frozen omega_0(x)
    std::vector<Mat3> omega0_gradient; // frozen d(omega_0)/dy(x)
    std::vector<double> volume;        // lattice cell volumes
    double spacing = 0.0;
    double blob_radius = 0.0;          // regularization radius

    int count() const { return static_cast<int>(position.size()); }
    bool empty() const { return position.empty(); }

    /// Cauchy transport: current vorticity of marker k.
    Vec3 vorticity(int k) const { return jacobian[k] * omega0[k]; }

    /// Current vector strength (vorticity times carried volume).
    Vec3 strength(int k) const { return vorticity(k) * volume[k]; }

    Vec3 total_vorticity() const {
        Vec3 s = Vec3::Zero();
        for (int k = 0; k < count(); ++k) s += strength(k);
        return s;
    }

    double max_det_drift() const {
        double worst = 0.0;
        for (const auto& g : jacobian) worst = std::max(worst, std::abs(g.determinant() - 1.0));
        return worst;
    }

    /// Scale the carried vorticity (used by the time scaling).
    void scale_vorticity(double a) {
        for (auto& w : omega0) w *= a;
        for (auto& g : omega0_gradient) g *= a;
    }
};

struct SeedReport {
    Vec3 total_vorticity = Vec3::Zero();
    double max_divergence = 0.0;
    double min_body_distance = 0.0;
    int count = 0;
};

/// Conservative lower bound on the distance from y to the body surface:
/// m (rho - 1) / rho with rho the ellipsoid level and m the least semiaxis.
inline double body_clearance_bound(const GeometrySpec& geometry, const Vec3& y) {
    const double rho = y.cwiseQuotient(geometry.semiaxes).norm();
    if (rho <= 1.0) return 0.0;
    return geometry.semiaxes.minCoeff() * (rho - 1.0) / rho;
}

/// Regular-lattice seeding of the support region.  The support must keep the
/// stated clearance from the body surface, and the analytic field must be
/// divergence free.
inline MarkerSet seed_markers(const VorticitySeedField& field, const SeedSupport& support, double spacing,
                              const GeometrySpec* body = nullptr, double body_clearance = 0.25,
                              double blob_factor = 2.0, SeedReport* report = nullptr) {
    if (spacing <= 0.0) throw std::invalid_argument("seed_markers: spacing must be positive");
    MarkerSet set;
    set.spacing = spacing;
    set.blob_radius = blob_factor * spacing;

    SeedReport rep;
    rep.min_body_distance = std::numeric_limits<double>::infinity();
    if (field.kind != VorticitySeedField::Kind::Zero) {
        const double R = support.outer_radius;
        const int half = static_cast<int>(std::floor(R / spacing)) + 1;
        for (int ix = -half; ix <= half; ++ix)
            for (int iy = -half; iy <= half; ++iy)
                for (int iz = -half; iz <= half; ++iz) {
                    const Vec3 x = support.center +
                                   spacing * Vec3(static_cast<double>(ix), static_cast<double>(iy),
                                                  static_cast<double>(iz));
                    if (!support.contains(x)) continue;
                    if (body) {
                        const double dist = body_clearance_bound(*body, x);
                        rep.min_body_distance = std::min(rep.min_body_distance, dist);
                        if (dist < body_clearance)
                            throw std::invalid_argument(
                                "seed_markers: support intersects the body clearance zone");
                    }
                    set.seed_position.push_back(x);
                    set.position.push_back(x);
                    set.jacobian.push_back(Mat3::Identity());
                    set.omega0.push_back(field(x));
                    set.omega0_gradient.push_back(field.gradient(x));
                    set.volume.push_back(spacing * spacing * spacing);
                    rep.total_vorticity += field(x) * spacing * spacing * spacing;
                    rep.max_divergence = std::max(rep.max_divergence, std::abs(field.divergence(x)));
                }
    }
    rep.count = set.count();
    if (rep.max_divergence > 1e-5 * (1.0 + field.scale))
        throw std::invalid_argument("seed_markers: analytic field is not divergence free");
    if (report) *report = rep;
    return set;
}

/// One RK4 step of the marker transport
///   dX/ds = v(s, X) - l(s) - r(s) x X,
///   dG/ds = (dv/dy(s, X) - S(r(s))) G,
/// with caller-supplied field value/gradient and body velocities.
template <typename FieldValue, typename FieldGradient, typename BodyVel>
void advance_markers(MarkerSet& markers, double t, double dt, const FieldValue& velocity,
                     const FieldGradient& velocity_gradient, const BodyVel& body_velocity) {
    const int n = markers.count();
    parallel_for(n, [&](int k) {
        Vec3 x = markers.position[k];
        Mat3 g = markers.jacobian[k];

        Vec3 kx[4];
        Mat3 kg[4];
        const double stage_dt[4] = {0.0, 0.5 * dt, 0.5 * dt, dt};
        Vec3 xs = x;
        Mat3 gs = g;
        for (int s = 0; s < 4; ++s) {
            const double ts = t + stage_dt[s];
            if (s > 0) {
                xs = x + stage_dt[s] * kx[s - 1];
                gs = g + stage_dt[s] * kg[s - 1];
            }
            Vec3 l, r;
            body_velocity(ts, l, r);
            kx[s] = velocity(ts, xs) - l - r.cross(xs);
            kg[s] = (velocity_gradient(ts, xs) - skew(r)) * gs;
        }
        markers.position[k] = x + dt / 6.0 * (kx[0] + 2.0 * kx[1] + 2.0 * kx[2] + kx[3]);
        markers.jacobian[k] = g + dt / 6.0 * (kg[0] + 2.0 * kg[1] + 2.0 * kg[2] + kg[3]);
    });
}

/// Minimum distance from any marker to the panel centroids.
inline double min_body_distance(const MarkerSet& markers, const SurfaceMesh& mesh) {
    double dist = std::numeric_limits<double>::infinity();
    for (const auto& x : markers.position)
        for (int k = 0; k < mesh.panel_count(); ++k) dist = std::min(dist, (x - mesh.centroid[k]).norm());
    return dist;
}

/// Marker snapshot CSV: x(3), X(3), G(9 row-major), omega0(3), vol.
inline void write_markers_csv(const MarkerSet& m, std::ostream& out) {
    out << "x1,x2,x3,X1,X2,X3,G11,G12,G13,G21,G22,G23,G31,G32,G33,w01,w02,w03,vol\n";
    for (int k = 0; k < m.count(); ++k) {
        std::string line;
        for (int c = 0; c < 3; ++c) append_csv_value(line, m.seed_position[k][c]);
        for (int c = 0; c < 3; ++c) append_csv_value(line, m.position[k][c]);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) append_csv_value(line, m.jacobian[k](a, b));
        for (int c = 0; c < 3; ++c) append_csv_value(line, m.omega0[k][c]);
        append_csv_value(line, m.volume[k]);
        out << line << '\n';
    }
}

inline void write_markers_csv(const MarkerSet& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_markers_csv: cannot open " + path);
    write_markers_csv(m, out);
}

}  // namespace vbflow
