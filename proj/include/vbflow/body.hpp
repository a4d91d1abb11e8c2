#pragma once

// Body-side data: analytic geometry descriptors, boundary control patches and
// solid inertia.

#include "vbflow/core.hpp"
#include "vbflow/surface_mesh.hpp"

#include <functional>
#include <vector>

namespace vbflow {

/// Analytic solid geometry behind a mesh; a sphere is an ellipsoid with equal
/// semiaxes.  Used for volume quadrature and for radial support queries.
struct GeometrySpec {
    Vec3 semiaxes{Vec3::Ones()};

    static GeometrySpec sphere(double radius) { return GeometrySpec{Vec3::Constant(radius)}; }
    static GeometrySpec ellipsoid(const Vec3& axes) { return GeometrySpec{axes}; }

    /// Distance from the origin to the surface along unit direction d.
    double surface_radius(const Vec3& d) const {
        const Vec3 scaled = d.cwiseQuotient(semiaxes);
        return 1.0 / scaled.norm();
    }

    bool contains(const Vec3& y) const { return y.cwiseQuotient(semiaxes).squaredNorm() < 1.0; }

    double max_radius() const { return semiaxes.maxCoeff(); }
};

/// One signed smooth cap on the surface, described on the unit pre-image
/// sphere of the ellipsoid map.
struct PatchLobe {
    Vec3 center{Vec3::UnitX()};  // direction, normalized internally
    double angular_radius = 0.5; // radians on the pre-image sphere
    double amplitude = 1.0;
};

/// One control flux shape: a sum of lobes.
struct PatchSpec {
    std::vector<PatchLobe> lobes;
};

/// Per-panel samples of the control flux shapes.  Each shape integrates to
/// zero over the surface after the discrete mean removal.
struct ControlBasis {
    int count = 0;                       // m
    MatX values;                         // panel_count x m
    std::vector<PatchSpec> patches;

    VecX column(int j) const { return values.col(j); }

    /// Discrete surface integral of shape j (should vanish).
    double mean_flux(const SurfaceMesh& mesh, int j) const {
        double s = 0.0;
        for (int k = 0; k < mesh.panel_count(); ++k) s += values(k, j) * mesh.area[k];
        return s;
    }
};

namespace detail {

// C^2 compactly supported bump on [0,1]
inline double bump_c2(double s) {
    if (s >= 1.0) return 0.0;
    const double t = 1.0 - s * s;
    return t * t * t;
}

}  // namespace detail

/// Sample the patch shapes on the mesh and remove the discrete mean exactly.
/// Patch regions must be pairwise disjoint and nonempty on the mesh.
inline ControlBasis make_control_basis(const SurfaceMesh& mesh,
                                       const std::vector<PatchSpec>& patches,
                                       const GeometrySpec& geometry = GeometrySpec{}) {
    const int n = mesh.panel_count();
    const int m = static_cast<int>(patches.size());
    ControlBasis basis;
    basis.count = m;
    basis.patches = patches;
    basis.values = MatX::Zero(n, m);

    std::vector<int> owner(n, -1);
    for (int j = 0; j < m; ++j) {
        int support_panels = 0;
        for (int k = 0; k < n; ++k) {
            const Vec3 u = mesh.centroid[k].cwiseQuotient(geometry.semiaxes).normalized();
            double value = 0.0;
            for (const auto& lobe : patches[j].lobes) {
                const double angle = std::acos(std::clamp(u.dot(lobe.center.normalized()), -1.0, 1.0));
                if (angle < lobe.angular_radius)
                    value += lobe.amplitude * detail::bump_c2(angle / lobe.angular_radius);
            }
            if (value != 0.0) {
                if (owner[k] >= 0 && owner[k] != j)
                    throw std::invalid_argument("make_control_basis: overlapping patch regions");
                owner[k] = j;
                basis.values(k, j) = value;
                ++support_panels;
            }
        }
        if (support_panels == 0)
            throw std::invalid_argument("make_control_basis: patch region contains no panels");
    }

    // exact discrete mean removal: a uniform compensation flux over the surface
    for (int j = 0; j < m; ++j) {
        double mean = 0.0;
        for (int k = 0; k < n; ++k) mean += basis.values(k, j) * mesh.area[k];
        mean /= mesh.total_area;
        for (int k = 0; k < n; ++k) basis.values(k, j) -= mean;
    }
    return basis;
}

/// Density of the solid: uniform, or piecewise uniform by coordinate octant.
struct DensitySpec {
    enum class Kind { Uniform, Octant } kind = Kind::Uniform;
    double uniform_value = 1.0;
    std::array<double, 8> octant_values{};  // index bit0: x<0, bit1: y<0, bit2: z<0

    double operator()(const Vec3& y) const {
        if (kind == Kind::Uniform) return uniform_value;
        const int idx = (y.x() < 0.0 ? 1 : 0) | (y.y() < 0.0 ? 2 : 0) | (y.z() < 0.0 ? 4 : 0);
        return octant_values[idx];
    }
};

struct BodyInertia {
    double m0 = 0.0;           // solid mass
    Mat3 J0 = Mat3::Zero();    // solid inertia about the origin
    double displaced_volume = 0.0;
    DensitySpec density;
};

namespace detail {

inline void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    nodes.resize(n);
    weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(pi() * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
            }
            double dp = n * (x * p0 - p1) / (x * x - 1.0);
            double dx = p0 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        nodes[i] = x;
        double p0 = 1.0, p1 = 0.0;
        for (int j = 0; j < n; ++j) {
            double p2 = p1;
            p1 = p0;
            p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
        }
        double dp = n * (x * p0 - p1) / (x * x - 1.0);
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
}

}  // namespace detail

/// Mass and inertia by mapped Gauss quadrature over the enclosed ellipsoidal
/// volume.  The angular grid is split per octant so octant-wise densities
/// integrate exactly.
inline BodyInertia compute_inertia(const GeometrySpec& geometry, const DensitySpec& density,
                                   const SurfaceMesh& mesh, int order = 16) {
    std::vector<double> gn, gw;
    detail::gauss_legendre(order, gn, gw);

    BodyInertia body;
    body.density = density;
    const Vec3 ax = geometry.semiaxes;
    const double jac_axes = ax.prod();

    Mat3 J = Mat3::Zero();
    double mass = 0.0;
    for (int half = 0; half < 2; ++half)             // cos(theta) in [0,1], then [-1,0]
        for (int quad = 0; quad < 4; ++quad)         // phi quadrants
            for (int ir = 0; ir < order; ++ir)
                for (int ic = 0; ic < order; ++ic)
                    for (int ip = 0; ip < order; ++ip) {
                        const double r = 0.5 * (gn[ir] + 1.0);
                        const double wrad = 0.5 * gw[ir] * r * r;
                        const double ct = (half == 0 ? 1.0 : -1.0) * 0.5 * (gn[ic] + 1.0);
                        const double wct = 0.5 * gw[ic];
                        const double st = std::sqrt(std::max(0.0, 1.0 - ct * ct));
                        const double phi = (quad + 0.5 * (gn[ip] + 1.0)) * 0.5 * pi();
                        const double wphi = 0.25 * pi() * gw[ip];
                        const Vec3 unit(st * std::cos(phi), st * std::sin(phi), ct);
                        const Vec3 y = r * unit.cwiseProduct(ax);
                        const double w = wrad * wct * wphi * jac_axes;
                        const double rho = density(y);
                        mass += rho * w;
                        J += rho * w * (y.squaredNorm() * Mat3::Identity() - y * y.transpose());
                    }

    body.m0 = mass;
    body.J0 = 0.5 * (J + J.transpose());
    body.displaced_volume = mesh.enclosed_volume();
    return body;
}

/// |∫ rho dx - vol(S)|: mass from the density quadrature against the
/// divergence-theorem volume of the mesh.  The caller decides pass/fail.
inline double neutral_buoyancy_residual(const BodyInertia& inertia, const SurfaceMesh& mesh) {
    return std::abs(inertia.m0 - mesh.enclosed_volume());
}

}  // namespace vbflow
