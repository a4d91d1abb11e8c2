#pragma once

// Generalized fluid loads: the six projections of grad(mu) onto the body
// potentials, computed without solving the Poisson problem.  Writing
// f = ((v - l - r x y) . grad) v + r x v and using div f = tr(grad v grad v)
// together with the harmonicity of the body potentials collapses the Green
// identity to
//
//   Load_i = (C wdot)_i - integral_Omega grad(Phi_i) . f dy.
//
// For the purely potential part of the flow f is the gradient of the
// Bernoulli function beta = |v_p|^2/2 - (l + r x y) . v_p, so that piece
// reduces exactly to the boundary moment -int beta dPhi_i/dn dsigma.  The
// remaining part, supported where the rotational field matters, is
// integrated over the markers plus a body-fitted shell grid outside the
// marker support.

#include "vbflow/biot_savart.hpp"
#include "vbflow/core.hpp"
#include "vbflow/flow_field.hpp"
#include "vbflow/markers.hpp"
#include "vbflow/potential_tables.hpp"

#include <vector>

namespace vbflow {

struct ShellNode {
    Vec3 position;
    double weight;
    int radial_index;
};

/// Body-fitted radial-shell quadrature of the exterior, graded toward the
/// surface with geometric growth out to r_inf.
struct ShellQuadrature {
    std::vector<ShellNode> nodes;
    int radial_layers = 0;
    double r_inf = 0.0;

    bool empty() const { return nodes.empty(); }
};

inline ShellQuadrature build_shell_quadrature(const GeometrySpec& geometry, int angular_refinement = 1,
                                              double first_fraction = 0.08, double growth = 1.25,
                                              double r_inf = 10.0) {
    const SurfaceMesh dirs = build_sphere_mesh(1.0, angular_refinement);
    double total = 0.0;
    for (double a : dirs.area) total += a;
    const double angular_scale = 4.0 * pi() / total;

    ShellQuadrature shell;
    shell.r_inf = r_inf;
    const double inv_sqrt3 = 1.0 / std::sqrt(3.0);
    for (int d = 0; d < dirs.panel_count(); ++d) {
        const Vec3 dir = dirs.centroid[d].normalized();
        const double w_ang = dirs.area[d] * angular_scale;
        const double r0 = geometry.surface_radius(dir);
        double r = r0;
        double dr = first_fraction * r0;
        int layer = 0;
        while (r < r_inf) {
            const double hi = std::min(r + dr, r_inf);
            const double mid = 0.5 * (r + hi), half = 0.5 * (hi - r);
            for (int q = -1; q <= 1; q += 2) {  // 2-point Gauss in radius
                const double rq = mid + q * inv_sqrt3 * half;
                shell.nodes.push_back({rq * dir, w_ang * half * rq * rq, layer});
            }
            r = hi;
            dr *= growth;
            ++layer;
            shell.radial_layers = std::max(shell.radial_layers, layer);
        }
    }
    return shell;
}

struct LoadDiagnostics {
    double shell_term_norm = 0.0;
    double shell_tail_estimate = 0.0;
    bool truncation_warning = false;
};

/// Evaluator bundling the per-geometry precomputations.
class LoadEvaluator {
public:
    LoadEvaluator() = default;

    LoadEvaluator(const PotentialTables& tables, ShellQuadrature shell)
        : tables_(&tables), shell_(std::move(shell)) {
        const int n = tables.mesh.panel_count();
        body_sigma_.resize(n, 6);
        for (int i = 0; i < 6; ++i) body_sigma_.col(i) = tables.potentials[i].sigma;
    }

    const PotentialTables& tables() const { return *tables_; }
    const ShellQuadrature& shell() const { return shell_; }

    /// Rigid bracket term (m0 r x l, r x J0 r) of the velocity update.
    Vec6 rigid_bracket(const Vec3& l, const Vec3& r) const {
        const auto& t = tables_->tables;
        Vec6 b;
        b.head<3>() = t.m0 * r.cross(l);
        b.tail<3>() = r.cross(t.J0 * r);
        return b;
    }

    /// The six load projections for the flow state (l, r, w, markers).
    /// `frozen_shell_term` (when given) substitutes the expensive off-support
    /// correction, letting a step reuse it across stages.
    Vec6 operator()(const FlowField& flow, const VecX& wdot, LoadDiagnostics* diag = nullptr,
                    const Vec6* frozen_shell_term = nullptr) const {
        const auto& t = tables_->tables;
        Vec6 load = Vec6::Zero();
        if (t.control_count > 0) load += t.C * wdot;
        load -= bernoulli_boundary_moment(flow);
        if (flow.has_markers()) {
            load -= marker_volume_term(flow);
            Vec6 shell_term;
            if (frozen_shell_term) {
                shell_term = *frozen_shell_term;
            } else {
                LoadDiagnostics local;
                shell_term = shell_volume_term(flow, local);
                if (diag) *diag = local;
            }
            load -= shell_term;
        }
        return load;
    }

    /// Boundary moment of the potential-flow Bernoulli function, evaluated
    /// with the cached pointwise traces.
    Vec6 bernoulli_boundary_moment(const FlowField& flow) const {
        const auto& mesh = tables_->mesh;
        const auto& bem = tables_->bem;
        Vec6 acc = Vec6::Zero();
        for (int k = 0; k < mesh.panel_count(); ++k) {
            const double wq = mesh.area[k] / BemContext::kObsPoints;
            for (int q = 0; q < BemContext::kObsPoints; ++q) {
                const int idx = BemContext::kObsPoints * k + q;
                Vec3 vp = Vec3::Zero();
                for (int i = 0; i < 3; ++i) {
                    if (flow.l[i] != 0.0) vp += flow.l[i] * tables_->phi(i).point_gradient.col(idx);
                    if (flow.r[i] != 0.0) vp += flow.r[i] * tables_->vphi(i).point_gradient.col(idx);
                }
                for (int j = 0; j < tables_->control_count(); ++j)
                    if (flow.w[j] != 0.0) vp += flow.w[j] * tables_->psi(j).point_gradient.col(idx);
                const Vec3& x = bem.observation_point(k, q);
                const Vec3& n = bem.observation_normal(k, q);
                const double beta = 0.5 * vp.squaredNorm() - (flow.l + flow.r.cross(x)).dot(vp);
                acc.head<3>() += beta * wq * n;
                acc.tail<3>() += beta * wq * x.cross(n);
            }
        }
        return acc;
    }

    /// Integrand of the rotational volume term at a point.
    Vec3 eta_coupling(const FlowField& flow, const Vec3& y) const {
        const Vec3 eta = flow.eta(y);
        const Mat3 grad_eta = flow.eta_gradient(y);
        const Vec3 vp = flow.potential_part_velocity(y);
        const Mat3 grad_vp = flow.potential_part_gradient(y);
        const Vec3 vtilde = vp + eta - flow.l - flow.r.cross(y);
        return grad_vp * eta + grad_eta * vtilde + flow.r.cross(eta);
    }

    Vec6 project_body_gradients(const Vec3& y, const Vec3& integrand, double weight) const {
        Vec3 grads[6];
        velocity_multi(y, grads);
        Vec6 out;
        for (int i = 0; i < 6; ++i) out[i] = weight * grads[i].dot(integrand);
        return out;
    }

    Vec6 marker_volume_term(const FlowField& flow) const {
        const auto& m = *flow.markers;
        std::vector<Vec6> partial(m.count());
        parallel_for(m.count(), [&](int k) {
            partial[k] =
                project_body_gradients(m.position[k], eta_coupling(flow, m.position[k]), m.volume[k]);
        });
        Vec6 acc = Vec6::Zero();
        for (const auto& p : partial) acc += p;
        return acc;
    }

    /// Off-support shell correction with a geometric-tail estimate.
    Vec6 shell_volume_term(const FlowField& flow, LoadDiagnostics& diag) const {
        if (shell_.empty() || !flow.has_markers()) return Vec6::Zero();
        const auto& m = *flow.markers;
        Vec3 center = Vec3::Zero();
        for (const auto& x : m.position) center += x;
        center /= std::max(1, m.count());
        double radius = 0.0;
        for (const auto& x : m.position) radius = std::max(radius, (x - center).norm());
        radius += 2.0 * m.blob_radius;

        std::vector<Vec6> layer(shell_.radial_layers, Vec6::Zero());
        std::vector<Vec6> partial(shell_.nodes.size(), Vec6::Zero());
        std::vector<int> layer_of(shell_.nodes.size());
        parallel_for(static_cast<int>(shell_.nodes.size()), [&](int i) {
            const auto& node = shell_.nodes[i];
            layer_of[i] = node.radial_index;
            if ((node.position - center).norm() < radius) return;  // covered by the markers
            partial[i] =
                project_body_gradients(node.position, eta_coupling(flow, node.position), node.weight);
        });
        Vec6 acc = Vec6::Zero();
        for (std::size_t i = 0; i < partial.size(); ++i) {
            acc += partial[i];
            layer[layer_of[i]] += partial[i];
        }
        diag.shell_term_norm = acc.norm();
        const int nl = shell_.radial_layers;
        if (nl >= 2) {
            const double last = layer[nl - 1].norm();
            const double prev = layer[nl - 2].norm();
            const double q = std::min(0.9, prev > 0.0 ? last / prev : 0.0);
            diag.shell_tail_estimate = last * q / (1.0 - q);
        }
        return acc;
    }

    /// Gradients of the six body potentials at a point, one panel pass.
    void velocity_multi(const Vec3& p, Vec3 out[6]) const {
        for (int i = 0; i < 6; ++i) out[i] = Vec3::Zero();
        const auto& bem = tables_->bem;
        const int n = tables_->mesh.panel_count();
        for (int j = 0; j < n; ++j) {
            const auto& t = bem.triangle(j);
            const double dist = (p - t.centroid).norm();
            const Vec3 v = dist < bem.near_factor * t.diameter ? panel::source_velocity(t, p)
                                                               : panel::source_velocity_far(t, p);
            for (int i = 0; i < 6; ++i) out[i] += body_sigma_(j, i) * v;
        }
    }

private:
    const PotentialTables* tables_ = nullptr;
    ShellQuadrature shell_;
    MatX body_sigma_;  // Np x 6
};

}  // namespace vbflow
