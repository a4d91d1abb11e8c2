#pragma once

// The finite-dimensional potential-flow model: body velocity dynamics
// driven by the added-mass matrices, quaternion/position kinematics, and a
// fixed-step RK4 integrator with per-step quaternion renormalization.

#include "vbflow/control_signal.hpp"
#include "vbflow/core.hpp"
#include "vbflow/potential_tables.hpp"
#include "vbflow/util.hpp"

#include <fstream>
#include <vector>

namespace vbflow {

/// Quadratic right-hand-side term of the velocity dynamics.
inline Vec6 convective_force(const Vec3& l, const Vec3& r, const VecX& w, const AddedMassTables& t) {
    Vec6 b;
    b << l, r;
    Vec6 z = t.generalized_inertia * b;
    if (t.control_count > 0) z -= t.C * w;
    Vec6 f;
    f.head<3>() = -skew(r) * z.head<3>();
    f.tail<3>() = -skew(l) * z.head<3>() - skew(r) * z.tail<3>();
    for (int p = 0; p < t.control_count; ++p) {
        if (w[p] == 0.0) continue;
        Vec6 term;
        term.head<3>() = t.LM[p] * l + t.RM[p] * r + t.WM[p] * w;
        term.tail<3>() = t.LJ[p] * l + t.RJ[p] * r + t.WJ[p] * w;
        f -= w[p] * term;
    }
    return f;
}

/// d/dt (l, r) of the potential-flow model.
inline Vec6 potential_rhs(const Vec3& l, const Vec3& r, const VecX& w, const VecX& wdot,
                          const AddedMassTables& t) {
    Vec6 rhs = convective_force(l, r, w, t);
    if (t.control_count > 0) rhs += t.C * wdot;
    return t.solve_inertia(rhs);
}

/// d/dt (h, q) for body-frame velocities (l, r).  Throws at the chart
/// boundary |q| = 1.
inline void kinematics_rhs(const RigidState& s, Vec3& hdot, Vec3& qdot) {
    const double nq2 = s.q.norm_squared();
    if (nq2 >= 1.0 - 1e-12)
        throw NumericalError("kinematics_rhs: attitude reached the chart boundary |q| = 1");
    const double q0 = std::sqrt(1.0 - nq2);
    const Vec3& q = s.q.v;
    const Vec3& l = s.l;
    hdot = (1.0 - nq2) * l + 2.0 * q0 * q.cross(l) + l.dot(q) * q - q.cross(l.cross(q));
    qdot = 0.5 * (q0 * s.r + q.cross(s.r));
}

/// Time-sampled controlled trajectory of the 12-dim state.
struct PotentialTrajectory {
    std::vector<double> time;
    std::vector<RigidState> state;
    std::vector<VecX> control;  // w(t) samples
    double dt = 0.0;
    int rk_order = 4;

    const RigidState& back_state() const { return state.back(); }

    Vec6 velocity_at_index(int i) const {
        Vec6 b;
        b << state[i].l, state[i].r;
        return b;
    }
};

namespace detail {

// 13-component integration state: h, full quaternion (q0, q), l, r
struct FullState {
    Vec3 h;
    double q0;
    Vec3 q;
    Vec3 l;
    Vec3 r;

    static FullState from(const RigidState& s) { return {s.h, s.q.scalar(), s.q.v, s.l, s.r}; }

    RigidState to_rigid() const {
        if (q0 < 0.0)
            throw NumericalError("integration left the q0 >= 0 attitude chart");
        RigidState s;
        s.h = h;
        s.q = QuatVec(q);
        s.l = l;
        s.r = r;
        return s;
    }

    FullState scaled_add(const FullState& d, double a) const {
        return {h + a * d.h, q0 + a * d.q0, q + a * d.q, l + a * d.l, r + a * d.r};
    }

    void renormalize() {
        const double n = std::sqrt(q0 * q0 + q.squaredNorm());
        q0 /= n;
        q /= n;
    }
};

template <typename VelRhs>
FullState full_rhs(const FullState& s, const VelRhs& vel_rhs) {
    FullState d;
    const double nq2 = s.q.squaredNorm();
    if (nq2 >= 1.0 + 1e-10)
        throw NumericalError("integration left the attitude chart (|q| > 1)");
    d.h = (1.0 - nq2) * s.l + 2.0 * s.q0 * s.q.cross(s.l) + s.l.dot(s.q) * s.q - s.q.cross(s.l.cross(s.q));
    d.q = 0.5 * (s.q0 * s.r + s.q.cross(s.r));
    d.q0 = -0.5 * s.q.dot(s.r);
    const Vec6 b = vel_rhs(s.l, s.r);
    d.l = b.head<3>();
    d.r = b.tail<3>();
    return d;
}

// One classical RK4 step; vel_rhs(t, l, r) supplies d/dt (l, r).
template <typename VelRhs>
FullState rk4_step(const FullState& s, double t, double dt, const VelRhs& vel_rhs) {
    auto f = [&](const FullState& x, double tau) {
        return full_rhs(x, [&](const Vec3& l, const Vec3& r) { return vel_rhs(tau, l, r); });
    };
    const FullState k1 = f(s, t);
    const FullState k2 = f(s.scaled_add(k1, 0.5 * dt), t + 0.5 * dt);
    const FullState k3 = f(s.scaled_add(k2, 0.5 * dt), t + 0.5 * dt);
    const FullState k4 = f(s.scaled_add(k3, dt), t + dt);
    FullState out = s;
    out.h += dt / 6.0 * (k1.h + 2 * k2.h + 2 * k3.h + k4.h);
    out.q0 += dt / 6.0 * (k1.q0 + 2 * k2.q0 + 2 * k3.q0 + k4.q0);
    out.q += dt / 6.0 * (k1.q + 2 * k2.q + 2 * k3.q + k4.q);
    out.l += dt / 6.0 * (k1.l + 2 * k2.l + 2 * k3.l + k4.l);
    out.r += dt / 6.0 * (k1.r + 2 * k2.r + 2 * k3.r + k4.r);
    out.renormalize();
    return out;
}

}  // namespace detail

/// Integrate the coupled kinematics + velocity dynamics with fixed-step RK4.
inline PotentialTrajectory integrate_potential(const RigidState& initial, const ControlSignal& control,
                                               double T, double dt, const AddedMassTables& tables) {
    if (T <= 0.0 || dt <= 0.0) throw std::invalid_argument("integrate_potential: need T > 0 and dt > 0");
    auto vel_rhs = [&](double t, const Vec3& l, const Vec3& r) {
        return potential_rhs(l, r, control(t), control.derivative(t), tables);
    };

    PotentialTrajectory traj;
    traj.dt = dt;
    detail::FullState s = detail::FullState::from(initial);
    double t = 0.0;
    traj.time.push_back(t);
    traj.state.push_back(initial);
    traj.control.push_back(control(0.0));
    const int steps = static_cast<int>(std::ceil(T / dt - 1e-12));
    for (int i = 0; i < steps; ++i) {
        const double step = std::min(dt, T - t);
        s = detail::rk4_step(s, t, step, vel_rhs);
        t = (i + 1 == steps) ? T : t + step;
        traj.time.push_back(t);
        traj.state.push_back(s.to_rigid());
        traj.control.push_back(control(t));
    }
    return traj;
}

/// CSV export: t, h(3), q(3), l(3), r(3), w(m).
inline void write_trajectory_csv(const PotentialTrajectory& traj, std::ostream& out) {
    const int m = traj.control.empty() ? 0 : static_cast<int>(traj.control.front().size());
    out << "t,h1,h2,h3,q1,q2,q3,l1,l2,l3,r1,r2,r3";
    for (int j = 1; j <= m; ++j) out << ",w" << j;
    out << '\n';
    for (std::size_t i = 0; i < traj.time.size(); ++i) {
        std::string line;
        append_csv_value(line, traj.time[i]);
        const RigidState& s = traj.state[i];
        for (int c = 0; c < 3; ++c) append_csv_value(line, s.h[c]);
        for (int c = 0; c < 3; ++c) append_csv_value(line, s.q.v[c]);
        for (int c = 0; c < 3; ++c) append_csv_value(line, s.l[c]);
        for (int c = 0; c < 3; ++c) append_csv_value(line, s.r[c]);
        for (int j = 0; j < m; ++j) append_csv_value(line, traj.control[i][j]);
        out << line << '\n';
    }
}

inline void write_trajectory_csv(const PotentialTrajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_trajectory_csv: cannot open " + path);
    write_trajectory_csv(traj, out);
}

}  // namespace vbflow
