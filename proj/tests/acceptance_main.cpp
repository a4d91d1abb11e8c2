// Acceptance suite: every criterion of the verification plan runs at its
// stated tolerance and prints one PASS/FAIL line.  Exit status is the number
// of failed criteria.

#include "vbflow/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

using namespace vbflow;

namespace {

int failures = 0;

void criterion(int number, const std::string& name, const std::function<std::string()>& body) {
    std::string detail;
    bool pass = true;
    try {
        detail = body();
    } catch (const std::exception& e) {
        pass = false;
        detail = std::string("exception: ") + e.what();
    }
    if (detail.rfind("FAIL", 0) == 0) pass = false;
    std::printf("%s  criterion %2d  %-34s %s\n", pass ? "PASS" : "FAIL", number, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fail(const std::string& why) { return "FAIL: " + why; }

std::vector<PatchSpec> six_axis_patches(double radius = 0.45) {
    std::vector<PatchSpec> patches;
    for (int axis = 0; axis < 3; ++axis)
        for (int sign = -1; sign <= 1; sign += 2) {
            PatchSpec p;
            Vec3 dir = Vec3::Zero();
            dir[axis] = sign;
            p.lobes.push_back({dir, radius, 1.0});
            patches.push_back(p);
        }
    return patches;
}

std::unique_ptr<PotentialTables> make_tables(const GeometrySpec& geo, int refinement, bool with_patches) {
    const SurfaceMesh mesh = geo.semiaxes.maxCoeff() == geo.semiaxes.minCoeff()
                                 ? build_sphere_mesh(geo.semiaxes.x(), refinement)
                                 : build_ellipsoid_mesh(geo.semiaxes, refinement);
    return solve_potential_tables(mesh, geo,
                                  with_patches ? make_control_basis(mesh, six_axis_patches(), geo)
                                               : ControlBasis{},
                                  compute_inertia(geo, DensitySpec{}, mesh));
}

ControlSignal bump_control(int m, double T, double amp) {
    ControlSignal w(m, 4, T);
    for (int c = 0; c < m; ++c)
        for (int k = 1; k < 4; ++k) {
            w.values(c, k) = amp * std::sin(0.9 * (c + 1) + 0.8 * k);
            w.slopes(c, k) = amp * std::cos(0.5 * (c + 1) + 0.3 * k);
        }
    return w;
}

MarkerSet blob_seed(const GeometrySpec& geo, const Vec3& center, double radius, double strength,
                    double spacing) {
    const auto field = VorticitySeedField::curl_blob(center, radius, Vec3(0, 0, strength));
    SeedSupport support;
    support.center = center;
    support.outer_radius = radius;
    return seed_markers(field, support, spacing, &geo, 0.25);
}

std::string format2(const char* fmt, double a, double b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, fmt, a, b);
    return buf;
}

}  // namespace

int main() {
    const GeometrySpec sphere = GeometrySpec::sphere(1.0);

    // shared refinement-3 sphere tables (timed for criterion 1)
    const auto t0 = std::chrono::steady_clock::now();
    auto sphere3 = make_tables(sphere, 3, true);
    const double sphere3_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    criterion(1, "sphere added mass (refinement 3)", [&] {
        const double mu = 2.0 * pi() / 3.0;
        const double m_err = (sphere3->tables.M - mu * Mat3::Identity()).norm() / (mu * std::sqrt(3.0));
        const double j_norm = sphere3->tables.Jrot.norm();
        const double n_norm = sphere3->tables.N.norm();
        if (m_err >= 0.02) return fail("M error " + std::to_string(m_err));
        if (j_norm >= 0.02 || n_norm >= 0.02)
            return fail("rotation blocks |J| " + std::to_string(j_norm) + ", |N| " + std::to_string(n_norm));
        if (sphere3_seconds >= 60.0) return fail("build took " + std::to_string(sphere3_seconds) + " s");
        return format2("M err %.2e, build %.1f s", m_err, sphere3_seconds);
    });

    criterion(2, "generalized inertia SPD", [&] {
        auto ellipsoid3 = make_tables(GeometrySpec::ellipsoid(Vec3(2, 1, 1)), 3, false);
        for (const auto* t : {&sphere3->tables, &ellipsoid3->tables}) {
            if ((t->generalized_inertia - t->generalized_inertia.transpose()).norm() != 0.0)
                return fail("inertia not exactly symmetric after assembly");
            Eigen::SelfAdjointEigenSolver<Mat6> eig(t->generalized_inertia);
            if (eig.eigenvalues().minCoeff() <= 0.0) return fail("inertia not positive definite");
            if (t->asymmetry_M >= 1e-3 || t->asymmetry_J >= 1e-3)
                return fail("raw asymmetry " + std::to_string(std::max(t->asymmetry_M, t->asymmetry_J)));
        }
        return format2("min eig ok, raw asym sphere %.1e / ellipsoid %.1e",
                       sphere3->tables.asymmetry_M, ellipsoid3->tables.asymmetry_M);
    });

    criterion(3, "volume preservation (det G)", [&] {
        const auto field = VorticitySeedField::solid_ball(Vec3(1.5, 0, 0), 0.3, Vec3(0.4, -0.2, 0.9));
        SeedSupport support;
        support.center = Vec3(1.5, 0, 0);
        support.outer_radius = 0.3;
        MarkerSet m = seed_markers(field, support, 0.08);
        auto zero_field = [](double, const Vec3&) { return Vec3::Zero(); };
        auto zero_grad = [](double, const Vec3&) { return Mat3::Zero(); };
        auto body = [&](double, Vec3& l, Vec3& r) {
            l = Vec3::Zero();
            r = Vec3::UnitZ();
        };
        const double dt = 1e-3;
        for (int i = 0; i < 1000; ++i) advance_markers(m, i * dt, dt, zero_field, zero_grad, body);
        const double drift = m.max_det_drift();
        if (drift >= 1e-6) return fail("det drift " + std::to_string(drift));
        return format2("max |det G - 1| = %.2e over T = %g", drift, 1.0);
    });

    criterion(4, "zero-vorticity equivalence", [&] {
        const LoadEvaluator loads(*sphere3, ShellQuadrature{});
        const ControlSignal control = bump_control(6, 0.5, 0.2);
        CoupledConfig cfg;
        cfg.dt = 1e-3;
        cfg.picard_tol = 1e-6;
        RigidState rest;
        const PotentialTrajectory ode = integrate_potential(rest, control, 0.5, cfg.dt, sphere3->tables);
        const MarkerSet none;
        const CoupledSolution marched =
            timestep_solve(loads, Vec3::Zero(), Vec3::Zero(), none, control, 0.5, cfg);
        const CoupledSolution fixed =
            picard_solve(loads, Vec3::Zero(), Vec3::Zero(), none, control, 0.5, cfg);
        double w_ode_march = 0.0, w_ode_picard = 0.0, w_pair = 0.0;
        for (int i = 0; i < marched.size(); ++i) {
            w_ode_march = std::max(w_ode_march, (marched.l[i] - ode.state[i].l).norm());
            w_ode_march = std::max(w_ode_march, (marched.r[i] - ode.state[i].r).norm());
            w_ode_picard = std::max(w_ode_picard, (fixed.l[i] - ode.state[i].l).norm());
            w_ode_picard = std::max(w_ode_picard, (fixed.r[i] - ode.state[i].r).norm());
            w_pair = std::max(w_pair, (fixed.l[i] - marched.l[i]).norm());
            w_pair = std::max(w_pair, (fixed.r[i] - marched.r[i]).norm());
        }
        const double worst = std::max({w_ode_march, w_ode_picard, w_pair});
        if (worst >= 1e-5) return fail("pairwise deviation " + std::to_string(worst));
        return format2("max pairwise |(l,r)| deviation %.2e (routes within %.0e)", worst, 1e-5);
    });

    auto sphere1 = make_tables(sphere, 1, true);
    const LoadEvaluator loads1(*sphere1, build_shell_quadrature(sphere, 1, 0.1, 1.3, 8.0));

    criterion(5, "linear vorticity response", [&] {
        CoupledConfig cfg;
        cfg.dt = 4e-3;
        const Vec3 l0(0.5, 0, 0);
        const ControlSignal control = bump_control(6, 0.4, 0.15);
        const MarkerSet none;
        const CoupledSolution base =
            timestep_solve(loads1, l0, Vec3::Zero(), none, control, 0.3, cfg);
        auto deviation = [&](double strength) {
            const MarkerSet seed = blob_seed(sphere, Vec3(1.7, 0.3, 0.0), 0.35, strength, 0.09);
            const CoupledSolution sol = timestep_solve(loads1, l0, Vec3::Zero(), seed, control, 0.3, cfg);
            double worst = 0.0;
            for (int i = 0; i < sol.size(); ++i) {
                worst = std::max(worst, (sol.l[i] - base.l[i]).norm());
                worst = std::max(worst, (sol.r[i] - base.r[i]).norm());
            }
            return worst;
        };
        const double d1 = deviation(0.4), d2 = deviation(0.2), d4 = deviation(0.1);
        const double r12 = d1 / d2, r24 = d2 / d4;
        if (r12 < 1.6 || r12 > 2.4 || r24 < 1.6 || r24 > 2.4)
            return fail(format2("ratios %.2f, %.2f outside [1.6, 2.4]", r12, r24));
        return format2("halving ratios %.2f and %.2f", r12, r24);
    });

    criterion(6, "contraction of the coupling map", [&] {
        CoupledConfig cfg;
        cfg.dt = 4e-3;
        const ControlSignal control = bump_control(6, 0.4, 0.15);
        const MarkerSet seed = blob_seed(sphere, Vec3(1.8, 0.3, 0.0), 0.35, 1.0, 0.09);
        const double horizon =
            std::min(0.32, heuristic_horizon(Vec3::Zero(), Vec3::Zero(), seed, cfg.norms));
        auto ratio_at = [&](double Tp) {
            CoupledSolution path =
                potential_guess(loads1, Vec3::Zero(), Vec3::Zero(), seed, control, Tp, cfg);
            CoupledSolution p1 =
                coupling_map(loads1, path, Vec3::Zero(), Vec3::Zero(), seed, control, cfg);
            CoupledSolution p2 = coupling_map(loads1, p1, Vec3::Zero(), Vec3::Zero(), seed, control, cfg);
            const double diag1 = path_distance(path, p1, cfg.norms, cfg.holder_pairs);
            const double diag2 = path_distance(p1, p2, cfg.norms, cfg.holder_pairs);
            return diag2 / diag1;
        };
        const double r_full = ratio_at(horizon);
        const double r_half = ratio_at(0.5 * horizon);
        if (r_full >= 1.0) return fail("ratio " + std::to_string(r_full) + " at the heuristic horizon");
        const double gain = r_full / r_half;
        if (gain < 1.5 || gain > 2.5)
            return fail(format2("halving the horizon changed the ratio by %.2f (r_full %.3f)", gain, r_full));
        return format2("first ratio %.3f, halving gain %.2f", r_full, gain);
    });

    criterion(7, "potential steering", [&] {
        SteeringConfig scfg;
        scfg.dt = 2e-3;
        scfg.tol = 1e-8;

        SteeringProblem rest2rest;
        rest2rest.horizon = 1.0;
        const SteeringResult trivial = potential_steering(rest2rest, sphere1->tables, 6, scfg);
        if (!trivial.success || trivial.control.pack().norm() >= 1e-10)
            return fail("rest-to-rest control norm " + std::to_string(trivial.control.pack().norm()));

        SteeringProblem displace;
        displace.horizon = 1.0;
        displace.target.h = Vec3(0.05, 0.0, 0.0);
        const SteeringResult res = potential_steering(displace, sphere1->tables, 6, scfg);
        if (!res.success || res.residual_norm >= 1e-8)
            return fail("endpoint residual " + std::to_string(res.residual_norm));
        return format2("displacement residual %.1e, trivial |w| %.1e", res.residual_norm,
                       trivial.control.pack().norm());
    });

    criterion(8, "retargeting with vorticity", [&] {
        SteeringConfig scfg;
        scfg.dt = 4e-3;
        scfg.coupled.dt = 4e-3;
        scfg.eta1 = 0.1;
        scfg.retarget_tol = 1e-4;
        scfg.max_outer = 20;

        SteeringProblem problem;
        problem.horizon = 0.6;
        problem.target.h = Vec3(0.04, -0.02, 0.0);

        std::vector<Vec12> probes;
        for (int axis = 0; axis < 3; ++axis)
            for (int sign = -1; sign <= 1; sign += 2) {
                Vec12 x = Vec12::Zero();
                x[axis] = 0.8 * sign;
                probes.push_back(x);
            }

        auto epsilon_of = [&](double strength) {
            const MarkerSet seed = blob_seed(sphere, Vec3(1.8, 0.3, 0.0), 0.35, strength, 0.12);
            double eps = 0.0;
            for (const auto& p : probes) {
                const Vec12 fp = retarget_endpoint_map(p, problem, loads1, seed, scfg);
                eps = std::max(eps, (fp - p).norm());
            }
            return eps;
        };

        const double eps_full = epsilon_of(0.8);
        const double eps_half = epsilon_of(0.4);
        if (eps_full >= 0.5) return fail("sampled deviation " + std::to_string(eps_full));
        const double ratio = eps_full / eps_half;
        if (ratio < 1.5 || ratio > 2.5)
            return fail(format2("deviation ratio %.2f not ~linear (eps %.3f)", ratio, eps_full));

        const MarkerSet seed = blob_seed(sphere, Vec3(1.8, 0.3, 0.0), 0.35, 0.8, 0.12);
        const SteeringResult res = retarget_with_vorticity(problem, loads1, seed, scfg);
        if (!res.success || res.outer_iterations > 20 || res.residual_norm >= 1e-4)
            return fail(format2("endpoint error %.2e after %.0f iterations", res.residual_norm,
                                double(res.outer_iterations)));
        return format2("eps %.3f (halving ratio %.2f), ", eps_full, ratio) +
               format2("endpoint %.1e in %.0f outer steps", res.residual_norm,
                       double(res.outer_iterations));
    });

    criterion(9, "time-scaling exactness", [&] {
        const double lambda = 0.25, T = 1.0, dt = 5e-3;
        const ControlSignal w = bump_control(6, T, 0.3);
        RigidState s0;
        s0.q = QuatVec(0.02, 0.01, -0.02);
        s0.l = Vec3(0.4, -0.2, 0.1);
        s0.r = Vec3(0.1, 0.2, -0.15);
        const PotentialTrajectory direct = integrate_potential(s0, w, T, dt, sphere1->tables);
        const PotentialTrajectory scaled = integrate_potential(
            scale_state(s0, lambda), w.time_scaled(lambda), T / lambda, dt / lambda, sphere1->tables);
        const PotentialTrajectory mapped = unscale_trajectory(scaled, lambda);
        double worst = 0.0;
        for (std::size_t i = 0; i < direct.time.size(); ++i) {
            worst = std::max(worst, (mapped.state[i].l - direct.state[i].l).norm());
            worst = std::max(worst, (mapped.state[i].r - direct.state[i].r).norm());
        }
        if (worst >= 1e-9) return fail("max unscaled deviation " + std::to_string(worst));
        return format2("max |(l,r)| deviation %.2e over %.0f samples", worst, double(direct.time.size()));
    });

    criterion(10, "residual suite", [&] {
        auto sphere2p = make_tables(sphere, 2, true);
        const LoadEvaluator loads2(*sphere2p, build_shell_quadrature(sphere, 1, 0.1, 1.3, 8.0));
        // potential-only: tight thresholds
        CoupledConfig cfg;
        cfg.dt = 2e-3;
        const ControlSignal control = bump_control(6, 0.3, 0.12);
        const MarkerSet none;
        const CoupledSolution pot_run =
            timestep_solve(loads2, Vec3(0.25, 0, 0), Vec3::Zero(), none, control, 0.3, cfg);
        std::vector<Vec3> points{{1.7, 0.9, 0.3}, {2.2, -0.5, 0.4}, {1.2, 1.2, -0.5}, {2.6, 0.8, 0.9}};
        const std::vector<int> mid{pot_run.size() / 2};
        const ResidualReport pot_rep = residual_check(loads2, pot_run, points, mid);
        if (pot_rep.momentum.rms >= 0.01 * pot_rep.momentum.scale)
            return fail("potential-only momentum rel " +
                        std::to_string(pot_rep.momentum.rms / pot_rep.momentum.scale));
        if (pot_rep.divergence.rms >= 1e-4 * pot_rep.divergence.scale)
            return fail("divergence residual too large");
        if (pot_rep.slip.rms >= 0.02 * pot_rep.slip.scale)
            return fail("slip rel " + std::to_string(pot_rep.slip.rms / pot_rep.slip.scale));

        // with vorticity: rotational-coupling truncation dominates the
        // momentum row; the transport row must converge under dt halving
        auto blob_rep = [&](double dt_run) {
            CoupledConfig c2;
            c2.dt = dt_run;
            const MarkerSet seed = blob_seed(sphere, Vec3(1.8, 0.3, 0.0), 0.35, 0.5, 0.12);
            const CoupledSolution run =
                timestep_solve(loads2, Vec3(0.25, 0, 0), Vec3::Zero(), seed, control, 0.3, c2);
            // t = 0.16 lies on both grids, so the dt comparison is aligned
            int mid = 0;
            for (int i = 0; i < run.size(); ++i)
                if (std::abs(run.time[i] - 0.16) < std::abs(run.time[mid] - 0.16)) mid = i;
            return residual_check(loads2, run, points, {mid});
        };
        const ResidualReport rb1 = blob_rep(4e-3);
        if (rb1.momentum.rms >= 0.25 * rb1.momentum.scale)
            return fail("blob momentum rel " + std::to_string(rb1.momentum.rms / rb1.momentum.scale));
        if (rb1.transport.rms >= 0.02 * rb1.transport.scale)
            return fail("transport rel " + std::to_string(rb1.transport.rms / rb1.transport.scale));
        const ResidualReport rb2 = blob_rep(2e-3);
        const double order_gain = rb1.transport.rms / std::max(rb2.transport.rms, 1e-300);
        if (order_gain < 2.0)
            return fail(format2("transport dt-halving gain %.2f < 2 (rms %.2e)", order_gain,
                                rb1.transport.rms));
        return format2("potential momentum rel %.1e; transport dt gain %.1f",
                       pot_rep.momentum.rms / pot_rep.momentum.scale, order_gain);
    });

    criterion(11, "kinetic-form conservation", [&] {
        auto sphere2 = make_tables(sphere, 2, false);
        RigidState s;
        s.l = Vec3(0.7, 0.2, -0.4);
        s.r = Vec3(-0.05, 0.15, 0.1);
        const PotentialTrajectory traj =
            integrate_potential(s, ControlSignal::zero(0, 10.0), 10.0, 1e-3, sphere2->tables);
        Vec6 b0, bT;
        b0 << s.l, s.r;
        bT << traj.back_state().l, traj.back_state().r;
        const double e0 = b0.dot(sphere2->tables.generalized_inertia * b0);
        const double eT = bT.dot(sphere2->tables.generalized_inertia * bT);
        const double drift = std::abs(eT - e0) / e0;
        if (drift >= 1e-8) return fail("relative drift " + std::to_string(drift));
        return format2("relative drift %.2e over T = %.0f", drift, 10.0);
    });

    criterion(12, "deterministic outputs", [&] {
        namespace fs = std::filesystem;
        const fs::path dir = fs::temp_directory_path() / "vbflow_acceptance_determinism";
        fs::remove_all(dir);
        const ExperimentConfig cfg = load_config(std::string(VBFLOW_SOURCE_DIR) + "/configs/simulate_blob.json");
        run_experiment(cfg, (dir / "a").string());
        run_experiment(cfg, (dir / "b").string());
        auto slurp = [](const fs::path& p) {
            std::ifstream in(p, std::ios::binary);
            return std::string(std::istreambuf_iterator<char>(in), {});
        };
        for (const char* name : {"trajectory.csv", "loads.csv", "markers_final.csv"}) {
            const std::string a = slurp(dir / "a" / name), b = slurp(dir / "b" / name);
            if (a.empty() || a != b) return fail(std::string("mismatch in ") + name);
        }
        return std::string("bundled simulate config reproduces byte-identical CSV bodies");
    });

    if (failures == 0) std::printf("acceptance: all criteria passed\n");
    else std::printf("acceptance: %d criterion(s) failed\n", failures);
    return failures;
}
