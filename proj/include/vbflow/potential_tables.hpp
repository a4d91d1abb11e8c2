#pragma once

// The 6+m exterior potentials (unit translations, unit rotations, control
// fluxes) and every matrix of the finite-dimensional model assembled from
// their boundary traces.

#include "vbflow/bem.hpp"
#include "vbflow/body.hpp"
#include "vbflow/core.hpp"
#include "vbflow/surface_mesh.hpp"
#include "vbflow/util.hpp"

#include <json.hpp>

#include <memory>
#include <vector>

namespace vbflow {

struct AddedMassTables {
    Mat3 M = Mat3::Zero();    // translation-translation
    Mat3 Jrot = Mat3::Zero(); // rotation-rotation
    Mat3 N = Mat3::Zero();    // translation-rotation coupling
    MatX CM, CJ;              // 3 x m control couplings
    MatX C;                   // 6 x m, C = -(CM; CJ)
    std::vector<Mat3> LM, RM, LJ, RJ;  // per control p
    std::vector<MatX> WM, WJ;          // 3 x m per control p

    double m0 = 0.0;
    Mat3 J0 = Mat3::Zero();
    Mat6 generalized_inertia = Mat6::Zero();  // block rigid + added mass, SPD

    double asymmetry_M = 0.0;  // raw |M - M^T| / |M| before symmetrization
    double asymmetry_J = 0.0;

    std::string mesh_hash;
    int control_count = 0;

    Eigen::LDLT<Mat6> inertia_ldlt;

    Vec6 solve_inertia(const Vec6& rhs) const { return inertia_ldlt.solve(rhs); }
};

/// Solved potential family for one body.  Owns the mesh, the boundary solver
/// and the cached traces; immutable after construction.
struct PotentialTables {
    SurfaceMesh mesh;
    GeometrySpec geometry;
    ControlBasis basis;
    BodyInertia inertia;
    BemContext bem;
    std::vector<HarmonicPotential> potentials;  // phi_1..3, varphi_1..3, psi_1..m
    AddedMassTables tables;

    PotentialTables() = default;
    PotentialTables(const PotentialTables&) = delete;
    PotentialTables& operator=(const PotentialTables&) = delete;

    int control_count() const { return basis.count; }
    int family_count() const { return 6 + basis.count; }

    const HarmonicPotential& phi(int i) const { return potentials[i]; }
    const HarmonicPotential& vphi(int i) const { return potentials[3 + i]; }
    const HarmonicPotential& psi(int j) const { return potentials[6 + j]; }

    /// Potential-flow velocity at an exterior point for coefficients (l, r, w).
    Vec3 velocity(const Vec3& l, const Vec3& r, const VecX& w, const Vec3& y) const {
        require_exterior(y);
        Vec3 acc = Vec3::Zero();
        for (int i = 0; i < 3; ++i) {
            if (l[i] != 0.0) acc += l[i] * phi(i).gradient(y);
            if (r[i] != 0.0) acc += r[i] * vphi(i).gradient(y);
        }
        for (int j = 0; j < basis.count; ++j)
            if (w[j] != 0.0) acc += w[j] * psi(j).gradient(y);
        return acc;
    }

    void require_exterior(const Vec3& y) const {
        if (geometry.contains(y))
            throw std::invalid_argument("PotentialTables: evaluation point is inside the body");
    }
};

inline std::string mesh_content_hash(const SurfaceMesh& mesh, const ControlBasis& basis,
                                     const BodyInertia& inertia) {
    Fnv1a h;
    for (const auto& v : mesh.vertices) h.feed(v);
    for (const auto& t : mesh.triangles) {
        h.feed(t[0]);
        h.feed(t[1]);
        h.feed(t[2]);
    }
    h.feed(basis.count);
    for (int j = 0; j < basis.count; ++j)
        for (int k = 0; k < basis.values.rows(); ++k) h.feed(basis.values(k, j));
    h.feed(inertia.m0);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) h.feed(inertia.J0(i, j));
    return h.hex();
}

namespace detail {

// integral of n_i or (y x n)_i times the potential value, degree-2 rule with
// pointwise normals and moment arms
inline Mat3 boundary_moment_matrix(const BemContext& bem, const std::vector<HarmonicPotential>& pots,
                                   int col0, bool rotational_rows) {
    const auto& mesh = bem.mesh();
    Mat3 out = Mat3::Zero();
    for (int k = 0; k < mesh.panel_count(); ++k) {
        const double wq = mesh.area[k] / BemContext::kObsPoints;
        for (int q = 0; q < BemContext::kObsPoints; ++q) {
            const int idx = BemContext::kObsPoints * k + q;
            const Vec3& n = bem.observation_normal(k, q);
            const Vec3 row = rotational_rows ? Vec3(bem.observation_point(k, q).cross(n)) : n;
            for (int j = 0; j < 3; ++j) out.col(j) += row * (pots[col0 + j].point_value[idx] * wq);
        }
    }
    return out;
}

}  // namespace detail

/// Assemble every matrix of the model from the cached boundary traces.
inline AddedMassTables assemble_added_mass(const PotentialTables& p) {
    const auto& mesh = p.mesh;
    const int m = p.basis.count;
    AddedMassTables t;
    t.control_count = m;
    t.m0 = p.inertia.m0;
    t.J0 = p.inertia.J0;
    t.mesh_hash = mesh_content_hash(mesh, p.basis, p.inertia);

    Mat3 M_raw = detail::boundary_moment_matrix(p.bem, p.potentials, 0, false);
    Mat3 J_raw = detail::boundary_moment_matrix(p.bem, p.potentials, 3, true);
    t.N = detail::boundary_moment_matrix(p.bem, p.potentials, 3, false);

    t.asymmetry_M = (M_raw - M_raw.transpose()).norm() / std::max(M_raw.norm(), 1e-300);
    t.asymmetry_J = (J_raw - J_raw.transpose()).norm() / std::max(J_raw.norm(), 1e-300);
    t.M = 0.5 * (M_raw + M_raw.transpose());
    t.Jrot = 0.5 * (J_raw + J_raw.transpose());

    t.CM = MatX::Zero(3, m);
    t.CJ = MatX::Zero(3, m);
    for (int k = 0; k < mesh.panel_count(); ++k) {
        const double wq = mesh.area[k] / BemContext::kObsPoints;
        for (int q = 0; q < BemContext::kObsPoints; ++q) {
            const int idx = BemContext::kObsPoints * k + q;
            const Vec3& n = p.bem.observation_normal(k, q);
            const Vec3 xn = p.bem.observation_point(k, q).cross(n);
            for (int j = 0; j < m; ++j) {
                const double w = p.psi(j).point_value[idx] * wq;
                t.CM.col(j) += n * w;
                t.CJ.col(j) += xn * w;
            }
        }
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
    for (int k = 0; k < mesh.panel_count(); ++k) {
        for (int q = 0; q < BemContext::kObsPoints; ++q) {
            const int idx = BemContext::kObsPoints * k + q;
            const Vec3& y = p.bem.observation_point(k, q);
            const double wq = mesh.area[k] / BemContext::kObsPoints;
            for (int pc = 0; pc < m; ++pc) {
                const double chi_w = p.basis.values(k, pc) * wq;
                if (chi_w == 0.0) continue;
                for (int j = 0; j < 3; ++j) {
                    const Vec3 gphi = p.phi(j).point_gradient.col(idx);
                    const Vec3 gvphi = p.vphi(j).point_gradient.col(idx);
                    t.LM[pc].col(j) += gphi * chi_w;
                    t.LJ[pc].col(j) += y.cross(gphi) * chi_w;
                    t.RM[pc].col(j) += gvphi * chi_w;
                    t.RJ[pc].col(j) += y.cross(gvphi) * chi_w;
                }
                for (int j = 0; j < m; ++j) {
                    const Vec3 gpsi = p.psi(j).point_gradient.col(idx);
                    t.WM[pc].col(j) += gpsi * chi_w;
                    t.WJ[pc].col(j) += y.cross(gpsi) * chi_w;
                }
            }
        }
    }

    t.generalized_inertia.topLeftCorner<3, 3>() = t.m0 * Mat3::Identity() + t.M;
    t.generalized_inertia.topRightCorner<3, 3>() = t.N;
    t.generalized_inertia.bottomLeftCorner<3, 3>() = t.N.transpose();
    t.generalized_inertia.bottomRightCorner<3, 3>() = t.J0 + t.Jrot;

    Eigen::SelfAdjointEigenSolver<Mat6> eig(t.generalized_inertia);
    if (eig.eigenvalues().minCoeff() <= 0.0)
        throw NumericalError("assemble_added_mass: generalized inertia is not positive definite "
                             "(orientation or solver bug)");
    t.inertia_ldlt.compute(t.generalized_inertia);
    return t;
}

/// Solve all 6+m Neumann problems and assemble the matrices.
inline std::unique_ptr<PotentialTables> solve_potential_tables(SurfaceMesh mesh, GeometrySpec geometry,
                                                               ControlBasis basis, BodyInertia inertia) {
    auto p = std::make_unique<PotentialTables>();
    p->mesh = std::move(mesh);
    p->geometry = geometry;
    p->basis = std::move(basis);
    p->inertia = inertia;
    p->bem.assemble(p->mesh);

    const int m = p->basis.count;
    std::vector<VecX> data;
    data.reserve(6 + m);
    for (int i = 0; i < 3; ++i)
        data.push_back(p->bem.observation_average([&](const Vec3&, const Vec3& n) { return n[i]; }));
    for (int i = 0; i < 3; ++i)
        data.push_back(
            p->bem.observation_average([&](const Vec3& x, const Vec3& n) { return x.cross(n)[i]; }));
    for (int j = 0; j < m; ++j) data.push_back(p->basis.column(j));
    p->potentials = solve_family(p->bem, data);

    p->tables = assemble_added_mass(*p);
    return p;
}

// ---- JSON round trip for the assembled matrices -----------------------------

namespace detail {

inline nlohmann::json to_json(const MatX& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

inline MatX mat_from_json(const nlohmann::json& j) {
    const int rows = static_cast<int>(j.size());
    const int cols = rows ? static_cast<int>(j[0].size()) : 0;
    MatX m(rows, cols);
    for (int a = 0; a < rows; ++a)
        for (int b = 0; b < cols; ++b) m(a, b) = j[a][b].get<double>();
    return m;
}

}  // namespace detail

inline nlohmann::json added_mass_to_json(const AddedMassTables& t) {
    nlohmann::json j;
    j["mesh_hash"] = t.mesh_hash;
    j["control_count"] = t.control_count;
    j["m0"] = t.m0;
    j["J0"] = detail::to_json(t.J0);
    j["M"] = detail::to_json(t.M);
    j["Jrot"] = detail::to_json(t.Jrot);
    j["N"] = detail::to_json(t.N);
    j["CM"] = detail::to_json(t.CM);
    j["CJ"] = detail::to_json(t.CJ);
    j["asymmetry_M"] = t.asymmetry_M;
    j["asymmetry_J"] = t.asymmetry_J;
    auto mats = [&](const std::vector<Mat3>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& m : v) arr.push_back(detail::to_json(m));
        return arr;
    };
    auto matxs = [&](const std::vector<MatX>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& m : v) arr.push_back(detail::to_json(m));
        return arr;
    };
    j["LM"] = mats(t.LM);
    j["RM"] = mats(t.RM);
    j["LJ"] = mats(t.LJ);
    j["RJ"] = mats(t.RJ);
    j["WM"] = matxs(t.WM);
    j["WJ"] = matxs(t.WJ);
    return j;
}

inline AddedMassTables added_mass_from_json(const nlohmann::json& j) {
    AddedMassTables t;
    t.mesh_hash = j.at("mesh_hash").get<std::string>();
    t.control_count = j.at("control_count").get<int>();
    t.m0 = j.at("m0").get<double>();
    t.J0 = detail::mat_from_json(j.at("J0"));
    t.M = detail::mat_from_json(j.at("M"));
    t.Jrot = detail::mat_from_json(j.at("Jrot"));
    t.N = detail::mat_from_json(j.at("N"));
    t.CM = detail::mat_from_json(j.at("CM"));
    t.CJ = detail::mat_from_json(j.at("CJ"));
    t.asymmetry_M = j.at("asymmetry_M").get<double>();
    t.asymmetry_J = j.at("asymmetry_J").get<double>();
    const int m = t.control_count;
    t.C = MatX::Zero(6, m);
    t.C.topRows(3) = -t.CM;
    t.C.bottomRows(3) = -t.CJ;
    for (const auto& e : j.at("LM")) t.LM.push_back(detail::mat_from_json(e));
    for (const auto& e : j.at("RM")) t.RM.push_back(detail::mat_from_json(e));
    for (const auto& e : j.at("LJ")) t.LJ.push_back(detail::mat_from_json(e));
    for (const auto& e : j.at("RJ")) t.RJ.push_back(detail::mat_from_json(e));
    for (const auto& e : j.at("WM")) t.WM.push_back(detail::mat_from_json(e));
    for (const auto& e : j.at("WJ")) t.WJ.push_back(detail::mat_from_json(e));
    t.generalized_inertia.topLeftCorner<3, 3>() = t.m0 * Mat3::Identity() + t.M;
    t.generalized_inertia.topRightCorner<3, 3>() = t.N;
    t.generalized_inertia.bottomLeftCorner<3, 3>() = t.N.transpose();
    t.generalized_inertia.bottomRightCorner<3, 3>() = t.J0 + t.Jrot;
    t.inertia_ldlt.compute(t.generalized_inertia);
    return t;
}

}  // namespace vbflow
