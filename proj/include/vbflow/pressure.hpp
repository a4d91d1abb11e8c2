#pragma once

// Pressure recovery.  For the potential part of the flow the auxiliary
// potential collapses exactly: with beta = |v_p|^2/2 - (l + r x y) . v_p,
//
//   mu = -beta + mu_w + mu_eta,
//
// where mu_w is harmonic with Neumann data -sum wdot_j chi_j (the unsteady
// control flux) and mu_eta carries the rotational coupling: a Newtonian
// volume term with density div f_eta, integrated by parts onto the marker
// quadrature, plus a single layer absorbing its boundary flux.  The modified
// pressure subtracts the acceleration potentials.

#include "vbflow/coupled.hpp"
#include "vbflow/flow_field.hpp"
#include "vbflow/loads.hpp"

#include <vector>

namespace vbflow {

namespace detail {

inline Vec3 newton_kernel_gradient(const Vec3& z) {
    const double r = z.norm();
    return -z / (4.0 * pi() * r * r * r);
}

inline Mat3 newton_kernel_hessian(const Vec3& z) {
    const double r2 = z.squaredNorm();
    const double r = std::sqrt(r2);
    return -(Mat3::Identity() / (r2 * r) - 3.0 * z * z.transpose() / (r2 * r2 * r)) / (4.0 * pi());
}

}  // namespace detail

/// Everything needed to evaluate the modified pressure at one grid time.
struct PressureSlice {
    double t = 0.0;
    Vec3 l, r;
    VecX w, wdot;
    Vec6 velocity_rate;  // d/dt (l, r) from the recorded loads
    MarkerSet markers;
    FlowField flow;              // references `markers`
    HarmonicPotential mu_w;      // control-flux part (empty when wdot = 0)
    HarmonicPotential mu_eta;    // boundary part of the rotational coupling
    std::vector<Vec3> eta_flux;  // volume weights times f_eta at the markers

    bool has_rotational() const { return !markers.empty(); }
};

/// Build the pressure machinery for grid index i of a coupled solution.
inline PressureSlice build_pressure_slice(const LoadEvaluator& loads, const CoupledSolution& sol, int i,
                                          double surface_offset_factor = 0.3) {
    const PotentialTables& tables = loads.tables();
    const auto& mesh = tables.mesh;
    PressureSlice slice;
    slice.t = sol.time[i];
    slice.l = sol.l[i];
    slice.r = sol.r[i];
    slice.w = sol.w[i];
    slice.wdot = sol.wdot[i];
    slice.velocity_rate =
        tables.tables.solve_inertia(sol.load[i] - loads.rigid_bracket(sol.l[i], sol.r[i]));
    slice.markers = sol.markers[i];
    slice.flow = assemble_flow(tables, slice.l, slice.r, slice.w,
                               slice.markers.empty() ? nullptr : &slice.markers);

    if (tables.control_count() > 0 && slice.wdot.cwiseAbs().maxCoeff() > 0.0) {
        VecX data = VecX::Zero(mesh.panel_count());
        for (int k = 0; k < mesh.panel_count(); ++k)
            for (int j = 0; j < tables.control_count(); ++j)
                data[k] -= slice.wdot[j] * tables.basis.values(k, j);
        slice.mu_w.bem = &tables.bem;
        slice.mu_w.sigma = tables.bem.solve(data);
    }

    if (!slice.markers.empty()) {
        // volume weights of the rotational coupling at the markers
        slice.eta_flux.resize(slice.markers.count());
        parallel_for(slice.markers.count(), [&](int k) {
            slice.eta_flux[k] = slice.markers.volume[k] *
                                loads.eta_coupling(slice.flow, slice.markers.position[k]);
        });

        // boundary data: -f_eta . n at the surface (offset extrapolation from
        // the fluid side) minus the flux already carried by the volume term
        VecX data(mesh.panel_count());
        for (int k = 0; k < mesh.panel_count(); ++k) {
            const Vec3& n = mesh.normal[k];
            const double delta = surface_offset_factor * std::sqrt(mesh.area[k]);
            double fn[3];
            for (int s = 1; s <= 3; ++s) {
                const Vec3 y = mesh.centroid[k] - s * delta * n;
                fn[s - 1] = n.dot(loads.eta_coupling(slice.flow, y));
            }
            const double f_eta_n = 3.0 * fn[0] - 3.0 * fn[1] + fn[2];

            Vec3 grad_newton = Vec3::Zero();
            for (int a = 0; a < slice.markers.count(); ++a)
                grad_newton -= detail::newton_kernel_hessian(mesh.centroid[k] -
                                                             slice.markers.position[a]) *
                               slice.eta_flux[a];
            data[k] = -f_eta_n - n.dot(grad_newton);
        }
        slice.mu_eta.bem = &tables.bem;
        slice.mu_eta.sigma = tables.bem.solve_unchecked(data);
    }
    return slice;
}

/// Modified pressure at an exterior point: mu minus the acceleration
/// potentials, normalized to vanish at infinity.
inline double pressure_eval(const LoadEvaluator& loads, const PressureSlice& slice, const Vec3& y) {
    const PotentialTables& tables = loads.tables();
    tables.require_exterior(y);

    const Vec3 vp = slice.flow.potential_part_velocity(y);
    double mu = -(0.5 * vp.squaredNorm() - (slice.l + slice.r.cross(y)).dot(vp));
    if (!slice.mu_w.empty()) mu += slice.mu_w.value(y);
    if (slice.has_rotational()) {
        for (int a = 0; a < slice.markers.count(); ++a)
            mu -= detail::newton_kernel_gradient(y - slice.markers.position[a]).dot(slice.eta_flux[a]);
        if (!slice.mu_eta.empty()) mu += slice.mu_eta.value(y);
    }

    double acc = 0.0;
    for (int i = 0; i < 3; ++i) {
        acc += slice.velocity_rate[i] * tables.phi(i).value(y);
        acc += slice.velocity_rate[3 + i] * tables.vphi(i).value(y);
    }
    return mu - acc;
}

}  // namespace vbflow
