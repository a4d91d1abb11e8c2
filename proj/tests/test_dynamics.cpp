#include "vbflow/rigid_dynamics.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

using namespace vbflow;

namespace {

// sphere-like tables without a boundary solve: M = mu I, J = N = 0
AddedMassTables synthetic_sphere_tables(double m0 = 4.18879, double mu = 2.0944) {
    AddedMassTables t;
    t.M = mu * Mat3::Identity();
    t.m0 = m0;
    t.J0 = 0.4 * m0 * Mat3::Identity();
    t.J0(1, 1) = 0.5 * m0;  // slightly anisotropic so r-dynamics are nontrivial
    t.CM = MatX::Zero(3, 0);
    t.CJ = MatX::Zero(3, 0);
    t.C = MatX::Zero(6, 0);
    t.generalized_inertia.setZero();
    t.generalized_inertia.topLeftCorner<3, 3>() = (t.m0) * Mat3::Identity() + t.M;
    t.generalized_inertia.bottomRightCorner<3, 3>() = t.J0;
    t.inertia_ldlt.compute(t.generalized_inertia);
    return t;
}

AddedMassTables with_synthetic_controls(int m) {
    AddedMassTables t = synthetic_sphere_tables();
    t.control_count = m;
    t.CM = MatX::Zero(3, m);
    t.CJ = MatX::Zero(3, m);
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < m; ++j) {
            t.CM(i, j) = u(rng);
            t.CJ(i, j) = u(rng);
        }
    t.C = MatX::Zero(6, m);
    t.C.topRows(3) = -t.CM;
    t.C.bottomRows(3) = -t.CJ;
    t.LM.assign(m, Mat3::Zero());
    t.RM.assign(m, Mat3::Zero());
    t.LJ.assign(m, Mat3::Zero());
    t.RJ.assign(m, Mat3::Zero());
    t.WM.assign(m, MatX::Zero(3, m));
    t.WJ.assign(m, MatX::Zero(3, m));
    for (int p = 0; p < m; ++p) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                t.LM[p](i, j) = 0.2 * u(rng);
                t.RM[p](i, j) = 0.2 * u(rng);
                t.LJ[p](i, j) = 0.2 * u(rng);
                t.RJ[p](i, j) = 0.2 * u(rng);
            }
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < m; ++j) {
                t.WM[p](i, j) = 0.1 * u(rng);
                t.WJ[p](i, j) = 0.1 * u(rng);
            }
    }
    return t;
}

ControlSignal bump_control(int m, double T, double amp) {
    ControlSignal w(m, 4, T);
    for (int c = 0; c < m; ++c)
        for (int k = 1; k < w.knots; ++k) {
            w.values(c, k) = amp * std::sin(0.7 * (c + 1) + 1.3 * k);
            w.slopes(c, k) = amp * std::cos(0.3 * (c + 1) - 0.4 * k);
        }
    return w;
}

}  // namespace

TEST_CASE("control signal basics") {
    ControlSignal w = bump_control(3, 2.0, 0.5);
    CHECK(w(0.0).norm() == 0.0);

    // C1 continuity across a knot
    const double tk = w.knot_spacing();
    CHECK((w(tk - 1e-10) - w(tk + 1e-10)).norm() < 1e-8);
    CHECK((w.derivative(tk - 1e-10) - w.derivative(tk + 1e-10)).norm() < 1e-7);

    // derivative consistency with finite differences
    const double t = 0.77;
    const VecX fd = (w(t + 1e-6) - w(t - 1e-6)) / 2e-6;
    CHECK((w.derivative(t) - fd).norm() < 1e-7);

    // pack/unpack round trip
    ControlSignal v(3, 4, 2.0);
    v.unpack(w.pack());
    CHECK((v(1.234) - w(1.234)).norm() == 0.0);

    // exact time scaling w^s(t) = a w(a t)
    const ControlSignal ws = w.time_scaled(0.25);
    for (double s : {0.3, 1.9, 5.1}) {
        CHECK(ws(s)[1] == 0.25 * w(0.25 * s)[1]);
        CHECK(ws.derivative(s)[2] == Catch::Approx(0.0625 * w.derivative(0.25 * s)[2]).margin(1e-18));
    }
}

TEST_CASE("kinematics right-hand side") {
    RigidState s;
    s.l = Vec3(0.4, -0.2, 0.7);
    s.r = Vec3(0.1, 0.3, -0.5);
    Vec3 hdot, qdot;

    kinematics_rhs(s, hdot, qdot);
    CHECK((hdot - s.l).norm() == 0.0);
    CHECK((qdot - 0.5 * s.r).norm() == 0.0);

    s.l = s.r = Vec3::Zero();
    kinematics_rhs(s, hdot, qdot);
    CHECK(hdot.norm() == 0.0);
    CHECK(qdot.norm() == 0.0);

    // the four-term form reproduces R(q) l
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (int trial = 0; trial < 100; ++trial) {
        RigidState x;
        x.q = QuatVec(u(rng), u(rng), u(rng));
        x.l = Vec3(u(rng), u(rng), u(rng));
        x.r = Vec3(u(rng), u(rng), u(rng));
        kinematics_rhs(x, hdot, qdot);
        CHECK((hdot - rotation_matrix(x.q) * x.l).norm() < 1e-10);
    }

    RigidState edge;
    edge.q = QuatVec(1.0 - 1e-14, 0.0, 0.0);
    CHECK_THROWS_AS(kinematics_rhs(edge, hdot, qdot), NumericalError);
}

TEST_CASE("potential rhs reductions") {
    const AddedMassTables t = synthetic_sphere_tables();
    const VecX w0 = VecX::Zero(0);

    CHECK(potential_rhs(Vec3::Zero(), Vec3::Zero(), w0, w0, t).norm() == 0.0);

    const Vec3 l(0.3, -0.8, 0.2), r(0.5, 0.1, -0.4);
    const Vec6 rhs = potential_rhs(l, r, w0, w0, t);
    CHECK((rhs.head<3>() - (-r.cross(l))).norm() < 1e-14);
    CHECK((rhs.tail<3>() - (-t.J0.inverse() * r.cross(t.J0 * r))).norm() < 1e-14);
}

TEST_CASE("integration: equilibrium, straight line, order") {
    const AddedMassTables t = synthetic_sphere_tables();
    const ControlSignal w0 = ControlSignal::zero(0, 1.0);

    SECTION("rest stays at rest") {
        RigidState rest;
        const PotentialTrajectory traj = integrate_potential(rest, w0, 1.0, 1e-2, t);
        CHECK(traj.back_state().h.norm() == 0.0);
        CHECK(traj.back_state().l.norm() == 0.0);
        CHECK(traj.back_state().q.v.norm() == 0.0);
    }

    SECTION("no spin: straight coast") {
        RigidState s;
        s.l = Vec3(1, 0, 0);
        const PotentialTrajectory traj = integrate_potential(s, w0, 2.0, 1e-2, t);
        CHECK((traj.back_state().l - Vec3(1, 0, 0)).norm() < 1e-13);
        CHECK((traj.back_state().h - Vec3(2, 0, 0)).norm() < 1e-12);
    }

    SECTION("RK4 order: halving dt gains ~16x") {
        RigidState s;
        s.l = Vec3(0.8, -0.3, 0.2);
        s.r = Vec3(0.4, 0.9, -0.2);
        auto endpoint = [&](double dt) {
            const PotentialTrajectory traj = integrate_potential(s, w0, 1.0, dt, t);
            Vec6 b;
            b << traj.back_state().l, traj.back_state().r;
            return b;
        };
        const Vec6 ref = endpoint(1e-3 / 8.0);
        const double e1 = (endpoint(2e-2) - ref).norm();
        const double e2 = (endpoint(1e-2) - ref).norm();
        CHECK(e1 / e2 > 10.0);
        CHECK(e1 / e2 < 22.0);
    }
}

TEST_CASE("kinetic quadratic form is conserved without control") {
    const AddedMassTables t = synthetic_sphere_tables();
    RigidState s;
    s.l = Vec3(0.7, 0.2, -0.4);
    s.r = Vec3(-0.05, 0.15, 0.1);  // slow enough to stay inside the attitude chart over T = 10
    const PotentialTrajectory traj =
        integrate_potential(s, ControlSignal::zero(0, 10.0), 10.0, 1e-3, t);
    Vec6 b0, bT;
    b0 << s.l, s.r;
    bT << traj.back_state().l, traj.back_state().r;
    const double e0 = b0.dot(t.generalized_inertia * b0);
    const double eT = bT.dot(t.generalized_inertia * bT);
    CHECK(std::abs(eT - e0) / e0 < 1e-8);

    // attitude chart stays healthy
    for (const auto& st : traj.state) CHECK(st.q.v.norm() <= 1.0);
}

TEST_CASE("negation symmetry holds jointly with time reversal (w = 0)") {
    const AddedMassTables t = synthetic_sphere_tables();
    RigidState s;
    s.l = Vec3(0.5, -0.1, 0.3);
    s.r = Vec3(0.2, 0.4, -0.6);
    const ControlSignal w0 = ControlSignal::zero(0, 1.0);
    const PotentialTrajectory fwd = integrate_potential(s, w0, 1.0, 1e-3, t);

    RigidState flipped;
    flipped.l = -fwd.back_state().l;
    flipped.r = -fwd.back_state().r;
    const PotentialTrajectory back = integrate_potential(flipped, w0, 1.0, 1e-3, t);
    CHECK((back.back_state().l + s.l).norm() < 1e-10);
    CHECK((back.back_state().r + s.r).norm() < 1e-10);

    // plain negation is NOT a symmetry: the quadratic term is even
    RigidState neg;
    neg.l = -s.l;
    neg.r = -s.r;
    const PotentialTrajectory negtraj = integrate_potential(neg, w0, 1.0, 1e-3, t);
    CHECK((negtraj.back_state().l + fwd.back_state().l).norm() > 1e-3);
}

TEST_CASE("control response: linear part negates, quadratic defect scales") {
    const AddedMassTables t = with_synthetic_controls(4);
    RigidState rest;
    auto run = [&](double amp) {
        const ControlSignal w = bump_control(4, 1.0, amp);
        const PotentialTrajectory tp = integrate_potential(rest, w, 1.0, 1e-3, t);
        const ControlSignal wn = bump_control(4, 1.0, -amp);
        const PotentialTrajectory tn = integrate_potential(rest, wn, 1.0, 1e-3, t);
        Vec6 bp, bn;
        bp << tp.back_state().l, tp.back_state().r;
        bn << tn.back_state().l, tn.back_state().r;
        return (bp + bn).norm();  // quadratic defect
    };
    const double d1 = run(0.05), d2 = run(0.10);
    CHECK(d2 / d1 > 3.0);
    CHECK(d2 / d1 < 5.0);
}

TEST_CASE("rotation matrix follows Q' = Q S(r) along the kinematics") {
    const AddedMassTables t = synthetic_sphere_tables();
    RigidState s;
    s.q = QuatVec(0.1, -0.05, 0.2);
    s.l = Vec3(0.3, 0.1, -0.2);
    s.r = Vec3(0.2, -0.3, 0.4);
    const double dt = 1e-4;
    const PotentialTrajectory traj = integrate_potential(s, ControlSignal::zero(0, 1.0), 4 * dt, dt, t);
    // centered difference of R(q(t)) against R(q) skew(r) at the middle sample
    const Mat3 r_prev = rotation_matrix(traj.state[1].q);
    const Mat3 r_next = rotation_matrix(traj.state[3].q);
    const Mat3 fd = (r_next - r_prev) / (2.0 * dt);
    const Mat3 expected = rotation_matrix(traj.state[2].q) * skew(traj.state[2].r);
    CHECK((fd - expected).norm() < 1e-6 * expected.norm());
}

TEST_CASE("trajectory CSV format") {
    const AddedMassTables t = with_synthetic_controls(2);
    RigidState s;
    s.l = Vec3(0.1, 0, 0);
    const PotentialTrajectory traj = integrate_potential(s, bump_control(2, 0.5, 0.2), 0.5, 0.1, t);
    std::stringstream out;
    write_trajectory_csv(traj, out);
    std::string header;
    std::getline(out, header);
    CHECK(header == "t,h1,h2,h3,q1,q2,q3,l1,l2,l3,r1,r2,r3,w1,w2");
    int rows = 0;
    for (std::string line; std::getline(out, line);) ++rows;
    CHECK(rows == static_cast<int>(traj.time.size()));
}
