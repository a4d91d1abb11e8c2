#pragma once

// Composite exterior velocity field: potential family with coefficients
// (l, r, w) plus the rotational part eta, reconstructed from the markers by
// a regularized Biot-Savart sum with a harmonic boundary correction that
// restores eta . n = 0 on the surface.  The table part collapses to one
// single-layer density so field evaluations cost a single panel pass.

#include "vbflow/bem.hpp"
#include "vbflow/biot_savart.hpp"
#include "vbflow/core.hpp"
#include "vbflow/markers.hpp"
#include "vbflow/potential_tables.hpp"

namespace vbflow {

struct FlowField {
    const PotentialTables* tables = nullptr;
    Vec3 l = Vec3::Zero();
    Vec3 r = Vec3::Zero();
    VecX w;
    VecX sigma_pot;                      // combined density of the table part
    const MarkerSet* markers = nullptr;  // may be empty/null
    HarmonicPotential correction;        // grad(chi) with d(chi)/dn = -eta_bs . n
    double correction_flux_removed = 0.0;

    bool has_markers() const { return markers && !markers->empty(); }

    Vec3 potential_part_velocity(const Vec3& y) const { return tables->bem.velocity_at(y, sigma_pot); }

    Mat3 potential_part_gradient(const Vec3& y) const { return tables->bem.hessian_at(y, sigma_pot); }

    /// Rotational part eta (Biot-Savart sum plus boundary correction).
    Vec3 eta(const Vec3& y) const {
        if (!has_markers()) return Vec3::Zero();
        return blob_velocity(*markers, y) + correction.gradient(y);
    }

    Mat3 eta_gradient(const Vec3& y) const {
        if (!has_markers()) return Mat3::Zero();
        return blob_velocity_gradient(*markers, y) + correction.hessian(y);
    }

    Vec3 velocity(const Vec3& y) const {
        Vec3 acc = potential_part_velocity(y);
        if (has_markers()) acc += blob_velocity(*markers, y) + correction.gradient(y);
        return acc;
    }

    Mat3 velocity_gradient(const Vec3& y) const {
        Mat3 acc = potential_part_gradient(y);
        if (has_markers()) acc += blob_velocity_gradient(*markers, y) + correction.hessian(y);
        return acc;
    }

    /// Velocity relative to the rigid frame motion, v - l - r x y.
    Vec3 relative_velocity(const Vec3& y) const { return velocity(y) - l - r.cross(y); }
};

/// Assemble the composite field at one instant; solves the boundary
/// correction against the current marker positions.
inline FlowField assemble_flow(const PotentialTables& tables, const Vec3& l, const Vec3& r, const VecX& w,
                               const MarkerSet* markers) {
    FlowField f;
    f.tables = &tables;
    f.l = l;
    f.r = r;
    f.w = w.size() == tables.control_count() ? w : VecX::Zero(tables.control_count());
    f.markers = markers;

    f.sigma_pot = VecX::Zero(tables.mesh.panel_count());
    for (int i = 0; i < 3; ++i) {
        if (l[i] != 0.0) f.sigma_pot += l[i] * tables.phi(i).sigma;
        if (r[i] != 0.0) f.sigma_pot += r[i] * tables.vphi(i).sigma;
    }
    for (int j = 0; j < tables.control_count(); ++j)
        if (f.w[j] != 0.0) f.sigma_pot += f.w[j] * tables.psi(j).sigma;

    if (markers && !markers->empty()) {
        const VecX g = tables.bem.observation_average(
            [&](const Vec3& x, const Vec3& n) { return -n.dot(blob_velocity(*markers, x)); });
        f.correction.bem = &tables.bem;
        f.correction.sigma = tables.bem.solve_balanced(g, &f.correction_flux_removed);
    }
    return f;
}

/// Max |eta . n| of the surface trace after the correction, scaled by the
/// largest surface |eta|.  The correction's normal trace comes from the
/// solver's boundary rows (fluid side).
inline double slip_residual_of_eta(const FlowField& f) {
    if (!f.has_markers()) return 0.0;
    const auto& mesh = f.tables->mesh;
    const MatX chi_grad = f.tables->bem.boundary_gradients(f.correction.sigma);
    double worst = 0.0, scale = 0.0;
    for (int k = 0; k < mesh.panel_count(); ++k) {
        const Vec3 e = blob_velocity(*f.markers, mesh.centroid[k]) + Vec3(chi_grad.col(k));
        worst = std::max(worst, std::abs(mesh.normal[k].dot(e)));
        scale = std::max(scale, e.norm());
    }
    return worst / std::max(scale, 1e-300);
}

}  // namespace vbflow
