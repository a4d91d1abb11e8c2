#pragma once

// The coupled body/vorticity solver.  Three entry points:
//
//  * timestep_solve: sequential marching of the full state (l, r, markers)
//    with combined RK4 steps; loads from the Green-identity evaluator.
//  * coupling_map (the fixed-point operator): builds the velocity field from
//    an INPUT path, advects fresh markers from the seed under that field,
//    accumulates the loads it induces, and integrates a new (l, r) path.
//  * picard_solve: iterates the coupling map from the potential-flow guess
//    until the triple-norm path distance contracts below tolerance.

#include "vbflow/control_signal.hpp"
#include "vbflow/flow_field.hpp"
#include "vbflow/loads.hpp"
#include "vbflow/markers.hpp"
#include "vbflow/norms.hpp"
#include "vbflow/rigid_dynamics.hpp"

#include <utility>
#include <vector>

namespace vbflow {

struct CoupledConfig {
    double dt = 1e-3;
    double collision_factor = 0.2;  // abort distance, in units of marker spacing
    bool shell_correction = true;   // off-support load term, refreshed once per step
    NormParams norms{};
    double picard_tol = 1e-8;
    int picard_max_iter = 25;
    int holder_pairs = 4000;
};

struct PicardDiagnostics {
    int iterations = 0;
    std::vector<double> deltas;  // triple-norm distance between consecutive paths
    std::vector<double> ratios;
    bool converged = false;
};

struct CoupledSolution {
    std::vector<double> time;
    std::vector<Vec3> l, r;
    std::vector<VecX> w, wdot;
    std::vector<Vec6> load;
    std::vector<MarkerSet> markers;  // one snapshot per grid time
    PicardDiagnostics picard;
    LoadDiagnostics load_diag;

    int size() const { return static_cast<int>(time.size()); }

    Vec6 velocity(int i) const {
        Vec6 b;
        b << l[i], r[i];
        return b;
    }

    const MarkerSet& final_markers() const { return markers.back(); }

    /// Linear interpolation of (l, r) on the grid.
    void sample_velocity(double t, Vec3& lt, Vec3& rt) const {
        const auto [i, s] = locate(t);
        lt = (1.0 - s) * l[i] + s * l[i + 1];
        rt = (1.0 - s) * r[i] + s * r[i + 1];
    }

    /// Linear interpolation of the marker snapshot into `scratch`.
    void sample_markers(double t, MarkerSet& scratch) const {
        const auto [i, s] = locate(t);
        const MarkerSet& a = markers[i];
        const MarkerSet& b = markers[i + 1];
        scratch = a;
        for (int k = 0; k < a.count(); ++k) {
            scratch.position[k] = (1.0 - s) * a.position[k] + s * b.position[k];
            scratch.jacobian[k] = (1.0 - s) * a.jacobian[k] + s * b.jacobian[k];
        }
    }

    std::pair<int, double> locate(double t) const {
        if (time.size() < 2 || t <= time.front()) return {0, 0.0};
        if (t >= time.back()) return {static_cast<int>(time.size()) - 2, 1.0};
        int i = static_cast<int>((t - time.front()) / (time[1] - time[0]));
        i = std::clamp(i, 0, static_cast<int>(time.size()) - 2);
        while (time[i + 1] < t) ++i;
        while (time[i] > t) --i;
        return {i, (t - time[i]) / (time[i + 1] - time[i])};
    }
};

namespace detail {

struct MarkerDerivative {
    std::vector<Vec3> dx;
    std::vector<Mat3> dg;

    void resize(int n) {
        dx.resize(n);
        dg.resize(n);
    }
};

// derivative of every marker under the instantaneous field
inline void marker_rhs(const MarkerSet& m, const FlowField& flow, MarkerDerivative& out) {
    out.resize(m.count());
    const Mat3 spin = skew(flow.r);
    parallel_for(m.count(), [&](int k) {
        out.dx[k] = flow.relative_velocity(m.position[k]);
        out.dg[k] = (flow.velocity_gradient(m.position[k]) - spin) * m.jacobian[k];
    });
}

inline void marker_advance(const MarkerSet& base, const MarkerDerivative& d, double a, MarkerSet& out) {
    out = base;
    for (int k = 0; k < base.count(); ++k) {
        out.position[k] += a * d.dx[k];
        out.jacobian[k] += a * d.dg[k];
    }
}

inline void collision_check(const MarkerSet& m, const GeometrySpec& geometry, double factor) {
    if (m.empty()) return;
    const double tol = factor * m.spacing;
    for (const auto& x : m.position)
        if (body_clearance_bound(geometry, x) < tol)
            throw NumericalError(
                "coupled solve: marker reached the body surface (resolution failure)");
}

}  // namespace detail

/// March the coupled state (l, r, markers) from t = 0 to T with RK4.
inline CoupledSolution timestep_solve(const LoadEvaluator& loads, const Vec3& l0, const Vec3& r0,
                                      const MarkerSet& seed, const ControlSignal& control, double T,
                                      const CoupledConfig& cfg) {
    const PotentialTables& tables = loads.tables();
    CoupledSolution out;
    out.load_diag = LoadDiagnostics{};

    Vec3 l = l0, r = r0;
    MarkerSet markers = seed;
    const int steps = static_cast<int>(std::ceil(T / cfg.dt - 1e-12));

    MarkerSet stage_markers;
    detail::MarkerDerivative k1, k2, k3, k4;

    auto record = [&](double t, const Vec6& load) {
        out.time.push_back(t);
        out.l.push_back(l);
        out.r.push_back(r);
        out.w.push_back(control(t));
        out.wdot.push_back(control.derivative(t));
        out.load.push_back(load);
        out.markers.push_back(markers);
    };

    double t = 0.0;
    for (int i = 0; i <= steps; ++i) {
        // stage 1 at the grid point; its load is recorded
        const FlowField flow1 = assemble_flow(tables, l, r, control(t), &markers);
        Vec6 shell_term = Vec6::Zero();
        if (markers.count() > 0 && cfg.shell_correction) {
            LoadDiagnostics diag;
            shell_term = loads.shell_volume_term(flow1, diag);
            if (diag.shell_tail_estimate > out.load_diag.shell_tail_estimate) out.load_diag = diag;
        }
        const Vec6 load1 = loads(flow1, control.derivative(t), nullptr, &shell_term);
        record(t, load1);
        if (i == steps) break;

        const double dt = std::min(cfg.dt, T - t);
        const auto rhs_b = [&](const Vec6& load, const Vec3& ls, const Vec3& rs) {
            return tables.tables.solve_inertia(load - loads.rigid_bracket(ls, rs));
        };

        detail::marker_rhs(markers, flow1, k1);
        const Vec6 db1 = rhs_b(load1, l, r);

        detail::marker_advance(markers, k1, 0.5 * dt, stage_markers);
        Vec3 l2 = l + 0.5 * dt * db1.head<3>(), r2 = r + 0.5 * dt * db1.tail<3>();
        const FlowField flow2 = assemble_flow(tables, l2, r2, control(t + 0.5 * dt), &stage_markers);
        detail::marker_rhs(stage_markers, flow2, k2);
        const Vec6 db2 =
            rhs_b(loads(flow2, control.derivative(t + 0.5 * dt), nullptr, &shell_term), l2, r2);

        detail::marker_advance(markers, k2, 0.5 * dt, stage_markers);
        Vec3 l3 = l + 0.5 * dt * db2.head<3>(), r3 = r + 0.5 * dt * db2.tail<3>();
        const FlowField flow3 = assemble_flow(tables, l3, r3, control(t + 0.5 * dt), &stage_markers);
        detail::marker_rhs(stage_markers, flow3, k3);
        const Vec6 db3 =
            rhs_b(loads(flow3, control.derivative(t + 0.5 * dt), nullptr, &shell_term), l3, r3);

        detail::marker_advance(markers, k3, dt, stage_markers);
        Vec3 l4 = l + dt * db3.head<3>(), r4 = r + dt * db3.tail<3>();
        const FlowField flow4 = assemble_flow(tables, l4, r4, control(t + dt), &stage_markers);
        detail::marker_rhs(stage_markers, flow4, k4);
        const Vec6 db4 = rhs_b(loads(flow4, control.derivative(t + dt), nullptr, &shell_term), l4, r4);

        const Vec6 db = (db1 + 2.0 * db2 + 2.0 * db3 + db4) / 6.0;
        l += dt * db.head<3>();
        r += dt * db.tail<3>();
        for (int k = 0; k < markers.count(); ++k) {
            markers.position[k] += dt / 6.0 * (k1.dx[k] + 2.0 * k2.dx[k] + 2.0 * k3.dx[k] + k4.dx[k]);
            markers.jacobian[k] += dt / 6.0 * (k1.dg[k] + 2.0 * k2.dg[k] + 2.0 * k3.dg[k] + k4.dg[k]);
        }
        detail::collision_check(markers, tables.geometry, cfg.collision_factor);
        t = (i + 1 == steps) ? T : t + dt;
    }
    return out;
}

/// One application of the coupling map: the velocity field is frozen from
/// the INPUT path; fresh markers advect from the seed under it, and the new
/// (l, r) integrate the loads that field induces.
inline CoupledSolution coupling_map(const LoadEvaluator& loads, const CoupledSolution& input,
                                    const Vec3& l0, const Vec3& r0, const MarkerSet& seed,
                                    const ControlSignal& control, const CoupledConfig& cfg) {
    const PotentialTables& tables = loads.tables();
    CoupledSolution out;

    Vec3 lhat = l0, rhat = r0;
    MarkerSet markers = seed;     // fresh markers, advected from t = 0
    MarkerSet in_markers = seed;  // scratch holding the interpolated input snapshot
    MarkerSet stage = seed;       // scratch for stage positions of the fresh markers
    detail::MarkerDerivative k1, k2, k3, k4;

    // Frozen-input field at time t.  The returned flow references
    // `in_markers`; it stays valid until the next input_flow call.
    auto input_flow = [&](double t) {
        Vec3 li, ri;
        input.sample_velocity(t, li, ri);
        input.sample_markers(t, in_markers);
        return assemble_flow(tables, li, ri, control(t), in_markers.empty() ? nullptr : &in_markers);
    };

    const int n = input.size();
    for (int i = 0; i < n; ++i) {
        const double t = input.time[i];
        const FlowField flow1 = input_flow(t);
        Vec6 shell_term = Vec6::Zero();
        if (!seed.empty() && cfg.shell_correction) {
            LoadDiagnostics diag;
            shell_term = loads.shell_volume_term(flow1, diag);
            if (diag.shell_tail_estimate > out.load_diag.shell_tail_estimate) out.load_diag = diag;
        }
        Vec3 li, ri;
        input.sample_velocity(t, li, ri);
        const Vec6 load1 = loads(flow1, control.derivative(t), nullptr, &shell_term);

        out.time.push_back(t);
        out.l.push_back(lhat);
        out.r.push_back(rhat);
        out.w.push_back(control(t));
        out.wdot.push_back(control.derivative(t));
        out.load.push_back(load1);
        out.markers.push_back(markers);
        if (i + 1 == n) break;

        const double dt = input.time[i + 1] - t;
        const Vec6 db1 = tables.tables.solve_inertia(load1 - loads.rigid_bracket(li, ri));
        detail::marker_rhs(markers, flow1, k1);

        const FlowField flow_half = input_flow(t + 0.5 * dt);  // flow1 is dead from here on
        Vec3 lh, rh;
        input.sample_velocity(t + 0.5 * dt, lh, rh);
        const Vec6 db2 = tables.tables.solve_inertia(
            loads(flow_half, control.derivative(t + 0.5 * dt), nullptr, &shell_term) -
            loads.rigid_bracket(lh, rh));
        detail::marker_advance(markers, k1, 0.5 * dt, stage);
        detail::marker_rhs(stage, flow_half, k2);

        const Vec6 db3 = db2;  // the integrand of (l, r) depends on the input only
        detail::marker_advance(markers, k2, 0.5 * dt, stage);
        detail::marker_rhs(stage, flow_half, k3);

        const FlowField flow_end = input_flow(t + dt);
        Vec3 le, re;
        input.sample_velocity(t + dt, le, re);
        const Vec6 db4 =
            tables.tables.solve_inertia(loads(flow_end, control.derivative(t + dt), nullptr, &shell_term) -
                                        loads.rigid_bracket(le, re));
        detail::marker_advance(markers, k3, dt, stage);
        detail::marker_rhs(stage, flow_end, k4);

        lhat += dt / 6.0 * (db1 + 2.0 * db2 + 2.0 * db3 + db4).head<3>();
        rhat += dt / 6.0 * (db1 + 2.0 * db2 + 2.0 * db3 + db4).tail<3>();
        for (int k = 0; k < markers.count(); ++k) {
            markers.position[k] += dt / 6.0 * (k1.dx[k] + 2.0 * k2.dx[k] + 2.0 * k3.dx[k] + k4.dx[k]);
            markers.jacobian[k] += dt / 6.0 * (k1.dg[k] + 2.0 * k2.dg[k] + 2.0 * k3.dg[k] + k4.dg[k]);
        }
        detail::collision_check(markers, tables.geometry, cfg.collision_factor);
    }
    return out;
}

/// Triple-norm distance between two paths on the same grid: sup |dl| + sup
/// |dr| + sup_t of the vorticity-difference norms, with the marker pairs of
/// the two paths matched one to one.
inline double path_distance(const CoupledSolution& a, const CoupledSolution& b, const NormParams& params,
                            int holder_pairs) {
    double dl = 0.0, dr = 0.0, dom = 0.0;
    const int n = std::min(a.size(), b.size());
    std::vector<Vec3> pos, dvals;
    std::vector<Mat3> no_grads;
    for (int i = 0; i < n; ++i) {
        dl = std::max(dl, (a.l[i] - b.l[i]).norm());
        dr = std::max(dr, (a.r[i] - b.r[i]).norm());
        const MarkerSet& ma = a.markers[i];
        const MarkerSet& mb = b.markers[i];
        if (ma.count() == 0 || ma.count() != mb.count()) continue;
        pos.resize(ma.count());
        dvals.resize(ma.count());
        for (int k = 0; k < ma.count(); ++k) {
            pos[k] = 0.5 * (ma.position[k] + mb.position[k]);
            dvals[k] = ma.vorticity(k) - mb.vorticity(k);
        }
        const NormDiagnostics d =
            estimate_norms(pos, dvals, no_grads, ma.volume, params, params.delta + 2.0, holder_pairs);
        dom = std::max(dom, d.vorticity_norm());
    }
    return dl + dr + dom;
}

/// Potential-flow (l, r) path with the seed frozen: the zero-coupling guess.
inline CoupledSolution potential_guess(const LoadEvaluator& loads, const Vec3& l0, const Vec3& r0,
                                       const MarkerSet& seed, const ControlSignal& control, double T,
                                       const CoupledConfig& cfg) {
    RigidState s;
    s.l = l0;
    s.r = r0;
    const PotentialTrajectory traj = integrate_potential(s, control, T, cfg.dt, loads.tables().tables);
    CoupledSolution out;
    out.time = traj.time;
    for (std::size_t i = 0; i < traj.time.size(); ++i) {
        out.l.push_back(traj.state[i].l);
        out.r.push_back(traj.state[i].r);
        out.w.push_back(traj.control[i]);
        out.wdot.push_back(control.derivative(traj.time[i]));
        out.load.push_back(Vec6::Zero());
        out.markers.push_back(seed);
    }
    return out;
}

/// Fixed-point iteration of the coupling map.  Fails loudly when the ratio
/// sequence exceeds one three times in a row (horizon too long).
inline CoupledSolution picard_solve(const LoadEvaluator& loads, const Vec3& l0, const Vec3& r0,
                                    const MarkerSet& seed, const ControlSignal& control, double T_prime,
                                    const CoupledConfig& cfg) {
    CoupledSolution path = potential_guess(loads, l0, r0, seed, control, T_prime, cfg);
    PicardDiagnostics diag;
    int rising = 0;
    for (int it = 0; it < cfg.picard_max_iter; ++it) {
        CoupledSolution next = coupling_map(loads, path, l0, r0, seed, control, cfg);
        const double delta = path_distance(path, next, cfg.norms, cfg.holder_pairs);
        diag.deltas.push_back(delta);
        diag.iterations = it + 1;
        if (diag.deltas.size() >= 2) {
            const double prev = diag.deltas[diag.deltas.size() - 2];
            diag.ratios.push_back(prev > 0.0 ? delta / prev : 0.0);
            rising = (diag.ratios.back() > 1.0) ? rising + 1 : 0;
            if (rising >= 3) {
                next.picard = diag;
                throw NumericalError(
                    "picard_solve: contraction ratios exceeded 1 three times; shrink the horizon");
            }
        }
        path = std::move(next);
        if (delta < cfg.picard_tol) {
            diag.converged = true;
            break;
        }
    }
    path.picard = diag;
    if (!diag.converged)
        throw NumericalError("picard_solve: no convergence within the iteration budget");
    return path;
}

/// Horizon heuristic: T' of order 1 / (|l0| + |r0| + P + 1) with P the seed
/// vorticity norm level.
inline double heuristic_horizon(const Vec3& l0, const Vec3& r0, const MarkerSet& seed,
                                const NormParams& params, double safety = 0.5) {
    double P = 0.0;
    if (!seed.empty()) {
        const NormDiagnostics d = vorticity_norms(seed, params);
        P = d.c0alpha + d.m1_weighted;
    }
    return safety / (l0.norm() + r0.norm() + P + 1.0);
}

}  // namespace vbflow
