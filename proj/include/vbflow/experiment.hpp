#pragma once

// Batch experiment driver: JSON configuration, cached added-mass solves,
// pipeline execution and deterministic file outputs.

#include "vbflow/coupled.hpp"
#include "vbflow/pressure.hpp"
#include "vbflow/residuals.hpp"
#include "vbflow/steering.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

namespace vbflow {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct VerificationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    enum class Kind { Potentials, Simulate, Steer, Verify, ScaleStudy } kind = Kind::Potentials;
    std::string method = "timestep";  // simulate: "timestep" | "picard" | "potential"

    GeometrySpec geometry = GeometrySpec::sphere(1.0);
    int refinement = 2;
    DensitySpec density;
    std::vector<PatchSpec> patches;

    ControlSignal control = ControlSignal::zero(0, 1.0);
    RigidState initial_state;
    RigidState target_state;

    VorticitySeedField seed_field = VorticitySeedField::zero();
    SeedSupport support;
    double seed_spacing = 0.1;
    double blob_factor = 2.0;
    double body_clearance = 0.25;

    CoupledConfig coupled;
    double T = 0.5;
    int shell_angular = 1;
    double shell_first = 0.08, shell_growth = 1.25, shell_r_inf = 10.0;

    SteeringConfig steering;

    std::vector<double> scale_lambdas{1.0, 0.5, 0.25};

    std::vector<Vec3> verify_points;
    std::vector<double> verify_fractions{0.5};
    double thr_momentum = 5e-2, thr_divergence = 1e-4, thr_slip = 2e-2, thr_transport = 5e-2;

    unsigned rng_seed = 0;
};

// ---- JSON parsing ------------------------------------------------------------

namespace detail {

inline Vec3 vec3_from(const nlohmann::json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(what) + ": expected [x, y, z]");
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline RigidState state_from(const nlohmann::json& j) {
    RigidState s;
    if (j.contains("h")) s.h = vec3_from(j["h"], "state.h");
    if (j.contains("q")) s.q = QuatVec(vec3_from(j["q"], "state.q"));
    if (j.contains("l")) s.l = vec3_from(j["l"], "state.l");
    if (j.contains("r")) s.r = vec3_from(j["r"], "state.r");
    if (s.q.norm_squared() > 1.0) throw ConfigError("state.q: |q| must not exceed 1");
    return s;
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    try {
        const std::string kind = j.at("experiment").get<std::string>();
        if (kind == "potentials")
            cfg.kind = ExperimentConfig::Kind::Potentials;
        else if (kind == "simulate")
            cfg.kind = ExperimentConfig::Kind::Simulate;
        else if (kind == "steer")
            cfg.kind = ExperimentConfig::Kind::Steer;
        else if (kind == "verify")
            cfg.kind = ExperimentConfig::Kind::Verify;
        else if (kind == "scale-study")
            cfg.kind = ExperimentConfig::Kind::ScaleStudy;
        else
            throw ConfigError("experiment: unknown kind '" + kind + "'");

        const auto& geo = j.at("geometry");
        const std::string gkind = geo.at("kind").get<std::string>();
        if (gkind == "sphere")
            cfg.geometry = GeometrySpec::sphere(geo.value("radius", 1.0));
        else if (gkind == "ellipsoid")
            cfg.geometry = GeometrySpec::ellipsoid(detail::vec3_from(geo.at("semiaxes"), "geometry.semiaxes"));
        else
            throw ConfigError("geometry.kind: expected 'sphere' or 'ellipsoid'");
        cfg.refinement = geo.value("refinement", 2);
        if (cfg.refinement < 0 || cfg.refinement > 7)
            throw ConfigError("geometry.refinement: must lie in [0, 7]");

        if (j.contains("density")) {
            const auto& d = j["density"];
            const std::string dkind = d.value("kind", "uniform");
            if (dkind == "uniform") {
                cfg.density.kind = DensitySpec::Kind::Uniform;
                cfg.density.uniform_value = d.value("value", 1.0);
            } else if (dkind == "octant") {
                cfg.density.kind = DensitySpec::Kind::Octant;
                const auto& vals = d.at("values");
                if (vals.size() != 8) throw ConfigError("density.values: expected 8 octant values");
                for (int i = 0; i < 8; ++i) cfg.density.octant_values[i] = vals[i].get<double>();
            } else {
                throw ConfigError("density.kind: expected 'uniform' or 'octant'");
            }
        }

        if (j.contains("patches"))
            for (const auto& pj : j["patches"]) {
                PatchSpec p;
                for (const auto& lj : pj.at("lobes")) {
                    PatchLobe lobe;
                    lobe.center = detail::vec3_from(lj.at("center"), "patch lobe center");
                    lobe.angular_radius = lj.value("angular_radius", 0.5);
                    lobe.amplitude = lj.value("amplitude", 1.0);
                    if (lobe.angular_radius <= 0.0 || lobe.angular_radius >= pi())
                        throw ConfigError("patch lobe: angular_radius must lie in (0, pi)");
                    p.lobes.push_back(lobe);
                }
                cfg.patches.push_back(p);
            }

        const int m = static_cast<int>(cfg.patches.size());
        if (j.contains("control")) {
            const auto& c = j["control"];
            const int knots = c.value("knots", 4);
            const double horizon = c.value("horizon", 1.0);
            cfg.control = ControlSignal(m, knots, horizon);
            auto fill = [&](const char* key, MatX& dst) {
                if (!c.contains(key)) return;
                const auto& rows = c[key];
                if (static_cast<int>(rows.size()) != m)
                    throw ConfigError(std::string("control.") + key + ": expected one row per patch");
                for (int a = 0; a < m; ++a) {
                    if (static_cast<int>(rows[a].size()) != knots)
                        throw ConfigError(std::string("control.") + key + ": expected one value per knot");
                    for (int b = 0; b < knots; ++b) dst(a, b) = rows[a][b].get<double>();
                }
            };
            fill("values", cfg.control.values);
            fill("slopes", cfg.control.slopes);
            for (int a = 0; a < m; ++a)
                if (cfg.control.values(a, 0) != 0.0) throw ConfigError("control.values: w(0) must vanish");
        } else {
            cfg.control = ControlSignal::zero(m, j.contains("solver") ? 1.0 : 1.0);
        }

        if (j.contains("initial_state")) cfg.initial_state = detail::state_from(j["initial_state"]);
        if (j.contains("target_state")) cfg.target_state = detail::state_from(j["target_state"]);

        if (j.contains("seed")) {
            const auto& s = j["seed"];
            const std::string skind = s.value("kind", "none");
            const Vec3 center = s.contains("center") ? detail::vec3_from(s["center"], "seed.center")
                                                     : Vec3(1.8, 0.0, 0.0);
            const double radius = s.value("radius", 0.35);
            if (skind == "none") {
                cfg.seed_field = VorticitySeedField::zero();
            } else if (skind == "curl_blob") {
                cfg.seed_field = VorticitySeedField::curl_blob(
                    center, radius, detail::vec3_from(s.at("amplitude"), "seed.amplitude"));
            } else if (skind == "solid_ball") {
                cfg.seed_field = VorticitySeedField::solid_ball(
                    center, radius, detail::vec3_from(s.at("amplitude"), "seed.amplitude"));
            } else if (skind == "vortex_ring") {
                cfg.seed_field = VorticitySeedField::vortex_ring(
                    center, detail::vec3_from(s.value("ring_axis", nlohmann::json{0, 0, 1}), "seed.ring_axis"),
                    s.value("ring_radius", 1.0), radius, s.value("ring_strength", 1.0));
            } else {
                throw ConfigError("seed.kind: unknown seed field");
            }
            cfg.support.center = center;
            cfg.support.outer_radius = s.value("support_radius", radius);
            if (s.value("support_kind", "ball") == std::string("shell")) {
                cfg.support.kind = SeedSupport::Kind::Shell;
                cfg.support.inner_radius = s.value("support_inner_radius", 0.0);
            }
            cfg.seed_spacing = s.value("spacing", 0.1);
            cfg.blob_factor = s.value("blob_factor", 2.0);
            cfg.body_clearance = s.value("clearance", 0.25);
            if (cfg.seed_spacing <= 0.0) throw ConfigError("seed.spacing: must be positive");
        }

        if (j.contains("solver")) {
            const auto& s = j["solver"];
            cfg.coupled.dt = s.value("dt", 1e-3);
            cfg.T = s.value("T", 0.5);
            cfg.coupled.picard_tol = s.value("picard_tol", 1e-8);
            cfg.coupled.picard_max_iter = s.value("picard_max_iterations", 25);
            cfg.coupled.norms.p = s.value("p", 3.5);
            cfg.coupled.norms.delta = s.value("delta", 0.05);
            cfg.coupled.norms.alpha = s.value("alpha", 0.12);
            cfg.coupled.norms.validate();
            if (s.contains("shell")) {
                const auto& sh = s["shell"];
                cfg.shell_angular = sh.value("angular_refinement", 1);
                cfg.shell_first = sh.value("first_fraction", 0.08);
                cfg.shell_growth = sh.value("growth", 1.25);
                cfg.shell_r_inf = sh.value("r_inf", 10.0);
            }
            if (cfg.coupled.dt <= 0.0 || cfg.T <= 0.0)
                throw ConfigError("solver: dt and T must be positive");
        }

        if (j.contains("steering")) {
            const auto& s = j["steering"];
            cfg.steering.dt = s.value("dt", cfg.coupled.dt);
            cfg.steering.tol = s.value("tol", 1e-8);
            cfg.steering.eta1 = s.value("eta1", 0.1);
            cfg.steering.eps_max = s.value("eps_max", 0.5);
            cfg.steering.retarget_tol = s.value("retarget_tol", 1e-4);
            cfg.steering.max_outer = s.value("max_outer", 20);
            cfg.steering.lambda_min = s.value("lambda_min", 1e-3);
            cfg.steering.max_iterations = s.value("max_iterations", 60);
            if (cfg.steering.tol <= 0.0 || cfg.steering.retarget_tol <= 0.0)
                throw ConfigError("steering: tolerances must be positive");
        }
        cfg.steering.coupled = cfg.coupled;

        cfg.method = j.value("method", "timestep");
        if (cfg.method != "timestep" && cfg.method != "picard" && cfg.method != "potential")
            throw ConfigError("method: expected 'timestep', 'picard' or 'potential'");

        if (j.contains("scale_study")) {
            cfg.scale_lambdas.clear();
            for (const auto& v : j["scale_study"].at("lambdas")) cfg.scale_lambdas.push_back(v.get<double>());
        }

        if (j.contains("verify")) {
            const auto& v = j["verify"];
            if (v.contains("sample_points"))
                for (const auto& p : v["sample_points"])
                    cfg.verify_points.push_back(detail::vec3_from(p, "verify.sample_points"));
            if (v.contains("time_fractions")) {
                cfg.verify_fractions.clear();
                for (const auto& f : v["time_fractions"]) cfg.verify_fractions.push_back(f.get<double>());
            }
            if (v.contains("thresholds")) {
                const auto& t = v["thresholds"];
                cfg.thr_momentum = t.value("momentum", cfg.thr_momentum);
                cfg.thr_divergence = t.value("divergence", cfg.thr_divergence);
                cfg.thr_slip = t.value("slip", cfg.thr_slip);
                cfg.thr_transport = t.value("transport", cfg.thr_transport);
            }
        }

        cfg.rng_seed = j.value("rng_seed", 0u);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return parse_config(j);
}

// ---- experiment execution ----------------------------------------------------

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file " + path.string());
    out << body;
}

inline std::vector<RigidState> kinematics_path(const CoupledSolution& sol, const RigidState& initial) {
    std::vector<RigidState> path;
    path.reserve(sol.size());
    detail::FullState s = detail::FullState::from(initial);
    auto push = [&](int i) {
        RigidState st = s.to_rigid();
        st.l = sol.l[i];
        st.r = sol.r[i];
        path.push_back(st);
    };
    push(0);
    for (int i = 0; i + 1 < sol.size(); ++i) {
        const double dt = sol.time[i + 1] - sol.time[i];
        const double t = sol.time[i];
        auto rhs = [&](const detail::FullState& x, double tau) {
            Vec3 lt, rt;
            sol.sample_velocity(tau, lt, rt);
            detail::FullState d = x;
            const double nq2 = x.q.squaredNorm();
            d.h = (1.0 - nq2) * lt + 2.0 * x.q0 * x.q.cross(lt) + lt.dot(x.q) * x.q -
                  x.q.cross(lt.cross(x.q));
            d.q = 0.5 * (x.q0 * rt + x.q.cross(rt));
            d.q0 = -0.5 * x.q.dot(rt);
            d.l.setZero();
            d.r.setZero();
            return d;
        };
        const auto k1 = rhs(s, t);
        const auto k2 = rhs(s.scaled_add(k1, 0.5 * dt), t + 0.5 * dt);
        const auto k3 = rhs(s.scaled_add(k2, 0.5 * dt), t + 0.5 * dt);
        const auto k4 = rhs(s.scaled_add(k3, dt), t + dt);
        s.h += dt / 6.0 * (k1.h + 2 * k2.h + 2 * k3.h + k4.h);
        s.q0 += dt / 6.0 * (k1.q0 + 2 * k2.q0 + 2 * k3.q0 + k4.q0);
        s.q += dt / 6.0 * (k1.q + 2 * k2.q + 2 * k3.q + k4.q);
        s.renormalize();
        push(i + 1);
    }
    return path;
}

inline std::string coupled_trajectory_csv(const CoupledSolution& sol, const std::vector<RigidState>& kin) {
    const int m = sol.w.empty() ? 0 : static_cast<int>(sol.w.front().size());
    std::string body = "t,h1,h2,h3,q1,q2,q3,l1,l2,l3,r1,r2,r3";
    for (int j = 1; j <= m; ++j) body += ",w" + std::to_string(j);
    body += "\n";
    for (int i = 0; i < sol.size(); ++i) {
        std::string line;
        append_csv_value(line, sol.time[i]);
        for (int c = 0; c < 3; ++c) append_csv_value(line, kin[i].h[c]);
        for (int c = 0; c < 3; ++c) append_csv_value(line, kin[i].q.v[c]);
        for (int c = 0; c < 3; ++c) append_csv_value(line, sol.l[i][c]);
        for (int c = 0; c < 3; ++c) append_csv_value(line, sol.r[i][c]);
        for (int j = 0; j < m; ++j) append_csv_value(line, sol.w[i][j]);
        body += line + "\n";
    }
    return body;
}

inline std::string loads_csv(const CoupledSolution& sol) {
    std::string body = "t,F1,F2,F3,T1,T2,T3\n";
    for (int i = 0; i < sol.size(); ++i) {
        std::string line;
        append_csv_value(line, sol.time[i]);
        for (int c = 0; c < 6; ++c) append_csv_value(line, sol.load[i][c]);
        body += line + "\n";
    }
    return body;
}

inline std::string control_csv(const ControlSignal& w, double T, double dt) {
    std::string body = "t";
    for (int j = 1; j <= w.channels; ++j) body += ",w" + std::to_string(j);
    for (int j = 1; j <= w.channels; ++j) body += ",wdot" + std::to_string(j);
    body += "\n";
    const int steps = static_cast<int>(std::round(T / dt));
    for (int i = 0; i <= steps; ++i) {
        const double t = std::min(T, i * dt);
        std::string line;
        append_csv_value(line, t);
        const VecX v = w(t), d = w.derivative(t);
        for (int j = 0; j < w.channels; ++j) append_csv_value(line, v[j]);
        for (int j = 0; j < w.channels; ++j) append_csv_value(line, d[j]);
        body += line + "\n";
    }
    return body;
}

}  // namespace detail

struct ExperimentArtifacts {
    std::unique_ptr<PotentialTables> tables;
    LoadEvaluator loads;
    MarkerSet seed;
    SeedReport seed_report;
    bool cache_hit = false;
};

/// Build (or load from cache) everything a run needs.
inline ExperimentArtifacts prepare(const ExperimentConfig& cfg, const std::string& cache_dir) {
    ExperimentArtifacts art;
    const SurfaceMesh mesh = cfg.geometry.semiaxes.maxCoeff() == cfg.geometry.semiaxes.minCoeff()
                                 ? build_sphere_mesh(cfg.geometry.semiaxes.x(), cfg.refinement)
                                 : build_ellipsoid_mesh(cfg.geometry.semiaxes, cfg.refinement);
    const ControlBasis basis = cfg.patches.empty()
                                   ? ControlBasis{}
                                   : make_control_basis(mesh, cfg.patches, cfg.geometry);
    const BodyInertia inertia = compute_inertia(cfg.geometry, cfg.density, mesh);
    art.tables = solve_potential_tables(mesh, cfg.geometry, basis, inertia);

    if (!cache_dir.empty()) {
        std::filesystem::create_directories(cache_dir);
        const auto path =
            std::filesystem::path(cache_dir) / (art.tables->tables.mesh_hash + ".json");
        if (std::filesystem::exists(path)) {
            std::ifstream in(path);
            nlohmann::json j;
            in >> j;
            const AddedMassTables cached = added_mass_from_json(j);
            if (cached.mesh_hash == art.tables->tables.mesh_hash) {
                art.cache_hit = true;
                // freshly solved and cached matrices must agree
                if ((cached.generalized_inertia - art.tables->tables.generalized_inertia).norm() >
                    1e-14 * art.tables->tables.generalized_inertia.norm())
                    throw NumericalError("cache: stored added-mass tables disagree with the solve");
            }
        } else {
            std::ofstream out(path);
            out << added_mass_to_json(art.tables->tables).dump(1) << "\n";
        }
    }

    art.loads = LoadEvaluator(*art.tables, build_shell_quadrature(cfg.geometry, cfg.shell_angular,
                                                                  cfg.shell_first, cfg.shell_growth,
                                                                  cfg.shell_r_inf));
    if (cfg.seed_field.kind != VorticitySeedField::Kind::Zero)
        art.seed = seed_markers(cfg.seed_field, cfg.support, cfg.seed_spacing, &cfg.geometry,
                                cfg.body_clearance, cfg.blob_factor, &art.seed_report);
    return art;
}

/// Execute the configured experiment, writing artifacts into out_dir.
/// Throws ConfigError (exit 2), NumericalError (exit 3) or VerificationError
/// (exit 4).
inline void run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                           const std::string& cache_dir = "") {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path out(out_dir);

    ExperimentArtifacts art = prepare(cfg, cache_dir);
    const PotentialTables& tables = *art.tables;

    nlohmann::json meta;
    meta["mesh_hash"] = tables.tables.mesh_hash;
    meta["panel_count"] = tables.mesh.panel_count();
    meta["control_count"] = tables.control_count();
    meta["cache_hit"] = art.cache_hit;
    meta["seed_markers"] = art.seed.count();
    if (art.seed.count() > 0) {
        meta["seed_total_vorticity"] = {art.seed_report.total_vorticity.x(),
                                        art.seed_report.total_vorticity.y(),
                                        art.seed_report.total_vorticity.z()};
        meta["seed_max_divergence"] = art.seed_report.max_divergence;
    }

    switch (cfg.kind) {
        case ExperimentConfig::Kind::Potentials: {
            detail::write_text(out / "added_mass.json", added_mass_to_json(tables.tables).dump(1) + "\n");
            write_off(tables.mesh, (out / "mesh.off").string());
            meta["buoyancy_residual"] = neutral_buoyancy_residual(tables.inertia, tables.mesh);
            detail::write_text(out / "run.json", meta.dump(1) + "\n");
            break;
        }
        case ExperimentConfig::Kind::Simulate: {
            CoupledSolution sol;
            if (cfg.method == "picard")
                sol = picard_solve(art.loads, cfg.initial_state.l, cfg.initial_state.r, art.seed,
                                   cfg.control, cfg.T, cfg.coupled);
            else
                sol = timestep_solve(art.loads, cfg.initial_state.l, cfg.initial_state.r, art.seed,
                                     cfg.control, cfg.T, cfg.coupled);
            const auto kin = detail::kinematics_path(sol, cfg.initial_state);
            detail::write_text(out / "trajectory.csv", detail::coupled_trajectory_csv(sol, kin));
            detail::write_text(out / "loads.csv", detail::loads_csv(sol));
            if (!art.seed.empty()) write_markers_csv(sol.final_markers(), (out / "markers_final.csv").string());
            meta["picard_iterations"] = sol.picard.iterations;
            meta["picard_deltas"] = sol.picard.deltas;
            meta["picard_ratios"] = sol.picard.ratios;
            meta["max_det_drift"] = sol.final_markers().max_det_drift();
            meta["shell_tail_estimate"] = sol.load_diag.shell_tail_estimate;
            detail::write_text(out / "run.json", meta.dump(1) + "\n");
            break;
        }
        case ExperimentConfig::Kind::Steer: {
            SteeringProblem problem;
            problem.initial = cfg.initial_state;
            problem.target = cfg.target_state;
            problem.horizon = cfg.control.horizon > 0.0 ? cfg.control.horizon : 1.0;
            problem.knots = cfg.control.knots;
            SteeringConfig scfg = cfg.steering;
            scfg.coupled = cfg.coupled;

            CoupledSolution run;
            const SteeringResult res = steer_full(problem, art.loads, art.seed, scfg, &run);
            nlohmann::json sj;
            sj["success"] = res.success;
            sj["residual_norm"] = res.residual_norm;
            sj["outer_iterations"] = res.outer_iterations;
            sj["sampled_epsilon"] = res.sampled_epsilon;
            sj["time_scale"] = res.time_scale;
            sj["final_time"] = res.final_time;
            std::vector<double> coeffs;
            const VecX theta = res.control.pack();
            for (int i = 0; i < theta.size(); ++i) coeffs.push_back(theta[i]);
            sj["coefficients"] = coeffs;
            detail::write_text(out / "steering.json", sj.dump(1) + "\n");
            detail::write_text(out / "control.csv",
                               detail::control_csv(res.control, res.final_time, cfg.coupled.dt));
            const auto kin = detail::kinematics_path(run, cfg.initial_state);
            detail::write_text(out / "trajectory.csv", detail::coupled_trajectory_csv(run, kin));
            detail::write_text(out / "run.json", meta.dump(1) + "\n");
            if (!res.success) throw NumericalError("steer: synthesis failed to reach the target");
            break;
        }
        case ExperimentConfig::Kind::Verify: {
            CoupledSolution sol = timestep_solve(art.loads, cfg.initial_state.l, cfg.initial_state.r,
                                                 art.seed, cfg.control, cfg.T, cfg.coupled);
            std::vector<Vec3> points = cfg.verify_points;
            if (points.empty()) {
                const double R = 1.6 * cfg.geometry.max_radius();
                for (int i = 0; i < 10; ++i) {
                    const double a = 2.0 * pi() * i / 10.0;
                    points.emplace_back(R * std::cos(a), R * std::sin(a), 0.35 * std::cos(3 * a));
                }
            }
            std::vector<int> indices;
            for (double f : cfg.verify_fractions)
                indices.push_back(std::clamp(static_cast<int>(f * (sol.size() - 1)), 1, sol.size() - 2));
            const ResidualReport report = residual_check(art.loads, sol, points, indices);
            nlohmann::json rj = report.to_json();
            rj["thresholds"] = {{"momentum", cfg.thr_momentum},
                                {"divergence", cfg.thr_divergence},
                                {"slip", cfg.thr_slip},
                                {"transport", cfg.thr_transport}};
            const bool pass = report.momentum.rms <= cfg.thr_momentum * report.momentum.scale &&
                              report.divergence.rms <= cfg.thr_divergence * std::max(report.divergence.scale, 1e-12) &&
                              report.slip.rms <= cfg.thr_slip * std::max(report.slip.scale, 1e-12) &&
                              (art.seed.empty() ||
                               report.transport.rms <= cfg.thr_transport * report.transport.scale);
            rj["pass"] = pass;
            detail::write_text(out / "residuals.json", rj.dump(1) + "\n");
            detail::write_text(out / "run.json", meta.dump(1) + "\n");
            if (!pass) throw VerificationError("verify: residual thresholds exceeded");
            break;
        }
        case ExperimentConfig::Kind::ScaleStudy: {
            std::string body = "lambda,max_state_deviation,seed_norm_ratio\n";
            nlohmann::json sj = nlohmann::json::array();
            const PotentialTrajectory direct = integrate_potential(cfg.initial_state, cfg.control,
                                                                   cfg.T, cfg.coupled.dt, tables.tables);
            for (double lambda : cfg.scale_lambdas) {
                if (lambda <= 0.0) throw ConfigError("scale_study: lambda must be positive");
                const PotentialTrajectory scaled = integrate_potential(
                    scale_state(cfg.initial_state, lambda), cfg.control.time_scaled(lambda),
                    cfg.T / lambda, cfg.coupled.dt / lambda, tables.tables);
                const PotentialTrajectory mapped = unscale_trajectory(scaled, lambda);
                double worst = 0.0;
                const std::size_t n = std::min(mapped.time.size(), direct.time.size());
                for (std::size_t i = 0; i < n; ++i) {
                    worst = std::max(worst, (mapped.state[i].l - direct.state[i].l).norm());
                    worst = std::max(worst, (mapped.state[i].r - direct.state[i].r).norm());
                    worst = std::max(worst, (mapped.state[i].h - direct.state[i].h).norm());
                }
                double norm_ratio = 0.0;
                if (!art.seed.empty()) {
                    const NormDiagnostics full = vorticity_norms(art.seed, cfg.coupled.norms);
                    const NormDiagnostics scaled_n =
                        vorticity_norms(scale_seed(art.seed, lambda), cfg.coupled.norms);
                    norm_ratio = scaled_n.lp_weighted / std::max(full.lp_weighted, 1e-300);
                }
                std::string line;
                append_csv_value(line, lambda);
                append_csv_value(line, worst);
                append_csv_value(line, norm_ratio);
                body += line + "\n";
                sj.push_back({{"lambda", lambda}, {"max_state_deviation", worst},
                              {"seed_norm_ratio", norm_ratio}});
            }
            detail::write_text(out / "scale_study.csv", body);
            meta["results"] = sj;
            detail::write_text(out / "run.json", meta.dump(1) + "\n");
            break;
        }
    }
}

}  // namespace vbflow
