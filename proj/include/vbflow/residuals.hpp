#pragma once

// Verification suite: finite-difference residuals of the body-frame momentum
// balance, the divergence constraint, the slip condition and the vorticity
// transport equation, evaluated on a computed coupled solution.

#include "vbflow/coupled.hpp"
#include "vbflow/pressure.hpp"

#include <json.hpp>

#include <vector>

namespace vbflow {

struct ResidualEntry {
    double rms = 0.0;
    double max = 0.0;
    double scale = 0.0;  // magnitude of the dominant balancing terms

    void absorb(double value, double magnitude) {
        rms += value * value;
        max = std::max(max, std::abs(value));
        scale = std::max(scale, magnitude);
        ++count;
    }
    void finalize() { rms = count ? std::sqrt(rms / count) : 0.0; }

    int count = 0;
};

struct ResidualReport {
    ResidualEntry momentum;    // d v/dt + (vtilde . grad) v + r x v + grad q
    ResidualEntry divergence;  // div v
    ResidualEntry slip;        // (v - l - r x y) . n - sum w_j chi_j on the surface
    ResidualEntry transport;   // d omega/dt + (vtilde . grad) omega - (omega . grad) vtilde

    nlohmann::json to_json() const {
        auto entry = [](const ResidualEntry& e) {
            return nlohmann::json{{"rms", e.rms}, {"max", e.max}, {"scale", e.scale}};
        };
        return nlohmann::json{{"momentum", entry(momentum)},
                              {"divergence", entry(divergence)},
                              {"slip", entry(slip)},
                              {"transport", entry(transport)}};
    }
};

/// Evaluate the residual suite at the given interior grid indices and sample
/// points.  Sample points must be exterior and clear of the blob cores.
inline ResidualReport residual_check(const LoadEvaluator& loads, const CoupledSolution& sol,
                                     const std::vector<Vec3>& sample_points,
                                     const std::vector<int>& grid_indices, double space_step = 1e-4) {
    const PotentialTables& tables = loads.tables();
    ResidualReport report;

    for (int i : grid_indices) {
        if (i <= 0 || i + 1 >= sol.size())
            throw std::invalid_argument("residual_check: need interior grid indices");
        const double dt = sol.time[i + 1] - sol.time[i - 1];

        MarkerSet prev_markers = sol.markers[i - 1];
        MarkerSet next_markers = sol.markers[i + 1];
        const FlowField prev = assemble_flow(tables, sol.l[i - 1], sol.r[i - 1], sol.w[i - 1],
                                             prev_markers.empty() ? nullptr : &prev_markers);
        const FlowField next = assemble_flow(tables, sol.l[i + 1], sol.r[i + 1], sol.w[i + 1],
                                             next_markers.empty() ? nullptr : &next_markers);
        const PressureSlice slice = build_pressure_slice(loads, sol, i);
        const FlowField& flow = slice.flow;

        for (const Vec3& y : sample_points) {
            // momentum row
            const Vec3 dvdt = (next.velocity(y) - prev.velocity(y)) / dt;
            const Mat3 grad = flow.velocity_gradient(y);
            const Vec3 v = flow.velocity(y);
            const Vec3 vtilde = v - slice.l - slice.r.cross(y);
            const Vec3 convect = grad * vtilde + slice.r.cross(v);
            Vec3 grad_q;
            for (int c = 0; c < 3; ++c) {
                Vec3 e = Vec3::Zero();
                e[c] = space_step;
                grad_q[c] = (pressure_eval(loads, slice, y + e) - pressure_eval(loads, slice, y - e)) /
                            (2.0 * space_step);
            }
            const Vec3 res = dvdt + convect + grad_q;
            const double mag = std::max({dvdt.norm(), convect.norm(), grad_q.norm(), 1e-12});
            report.momentum.absorb(res.norm(), mag);

            // incompressibility by finite differences
            double div = 0.0;
            for (int c = 0; c < 3; ++c) {
                Vec3 e = Vec3::Zero();
                e[c] = space_step;
                div += (flow.velocity(y + e)[c] - flow.velocity(y - e)[c]) / (2.0 * space_step);
            }
            report.divergence.absorb(div, std::max(grad.norm(), 1e-12));

        }

        // vorticity transport along the carriers: the material derivative of
        // the transported vorticity balances the stretching term, so the
        // residual isolates the time-integration error
        if (flow.has_markers()) {
            for (int k = 0; k < slice.markers.count(); ++k) {
                const Vec3 dwdt = (next_markers.vorticity(k) - prev_markers.vorticity(k)) / dt;
                const Mat3 grad_vtilde =
                    flow.velocity_gradient(slice.markers.position[k]) - skew(slice.r);
                const Vec3 stretch = grad_vtilde * slice.markers.vorticity(k);
                report.transport.absorb((dwdt - stretch).norm(),
                                        std::max({dwdt.norm(), stretch.norm(), 1e-12}));
            }
        }

        // slip condition at the surface, probed by extrapolation from the fluid
        const auto& mesh = tables.mesh;
        for (int k = 0; k < mesh.panel_count(); ++k) {
            const Vec3& n = mesh.normal[k];
            const double delta = 0.35 * std::sqrt(mesh.area[k]);
            double vn[3];
            for (int s = 1; s <= 3; ++s)
                vn[s - 1] = n.dot(flow.velocity(mesh.centroid[k] - s * delta * n));
            const double vn0 = 3.0 * vn[0] - 3.0 * vn[1] + vn[2];
            double target = n.dot(slice.l + slice.r.cross(mesh.centroid[k]));
            for (int j = 0; j < tables.control_count(); ++j)
                target += slice.w[j] * tables.basis.values(k, j);
            report.slip.absorb(vn0 - target, std::max(std::abs(target), 1e-12));
        }
    }

    report.momentum.finalize();
    report.divergence.finalize();
    report.slip.finalize();
    report.transport.finalize();
    return report;
}

}  // namespace vbflow
