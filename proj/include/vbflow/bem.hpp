#pragma once

// Exterior Neumann solver on the body surface: single-layer ansatz, dense LU.
// The equations are the collocation conditions averaged over each observation
// panel with an interior degree-2 rule (barycentric (2/3, 1/6, 1/6)); the
// source integrals are analytic for self/near panels and one-point for far
// ones, so the operator is the piecewise-constant Galerkin operator up to
// observation quadrature.  The fluid-side jump keeps the diagonal near 1/2.

#include "vbflow/core.hpp"
#include "vbflow/panel_integrals.hpp"
#include "vbflow/surface_mesh.hpp"
#include "vbflow/util.hpp"

#include <optional>
#include <vector>

namespace vbflow {

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class BemContext {
public:
    double near_factor = 3.0;  // analytic integration within this many panel diameters
    static constexpr int kObsPoints = 3;

    BemContext() = default;

    explicit BemContext(const SurfaceMesh& mesh) { assemble(mesh); }

    void assemble(const SurfaceMesh& mesh) {
        mesh_ = &mesh;
        const int n = mesh.panel_count();
        panels_.clear();
        panels_.reserve(n);
        for (int k = 0; k < n; ++k)
            panels_.push_back(panel::Triangle::from_vertices(mesh.vertex(k, 0), mesh.vertex(k, 1), mesh.vertex(k, 2)));

        obs_point_.resize(kObsPoints * n);
        obs_normal_.resize(kObsPoints * n);
        for (int k = 0; k < n; ++k)
            for (int q = 0; q < kObsPoints; ++q) {
                const Vec3 p =
                    (4.0 * panels_[k].v[q] + panels_[k].v[(q + 1) % 3] + panels_[k].v[(q + 2) % 3]) / 6.0;
                obs_point_[kObsPoints * k + q] = p;
                obs_normal_[kObsPoints * k + q] = mesh.normal_at(p, k);
            }

        neumann_.resize(n, n);
        potential_op_.resize(n, n);
        velocity_op_[0].resize(n, n);
        velocity_op_[1].resize(n, n);
        velocity_op_[2].resize(n, n);

        parallel_for(n, [&](int k) {
            for (int j = 0; j < n; ++j) {
                Vec3 vbar = Vec3::Zero();
                double row = 0.0, pot = 0.0;
                for (int q = 0; q < kObsPoints; ++q) {
                    const Vec3& p = obs_point_[kObsPoints * k + q];
                    const Vec3 v = velocity_influence(j, p, k == j);
                    row += obs_normal_[kObsPoints * k + q].dot(v);
                    vbar += v;
                    pot += potential_influence(j, p, k == j);
                }
                neumann_(k, j) = row / kObsPoints;
                potential_op_(k, j) = pot / kObsPoints;
                vbar /= kObsPoints;
                velocity_op_[0](k, j) = vbar.x();
                velocity_op_[1](k, j) = vbar.y();
                velocity_op_[2](k, j) = vbar.z();
            }
        });
        lu_.compute(neumann_);
        rcond_ = lu_.rcond();
        if (!(rcond_ > 1e-12))
            throw NumericalError("BemContext: boundary system is numerically singular (rcond = " +
                                 std::to_string(rcond_) + ")");
    }

    const SurfaceMesh& mesh() const { return *mesh_; }
    double rcond() const { return rcond_; }
    const panel::Triangle& triangle(int j) const { return panels_[j]; }

    const Vec3& observation_point(int panel, int q) const { return obs_point_[kObsPoints * panel + q]; }
    const Vec3& observation_normal(int panel, int q) const { return obs_normal_[kObsPoints * panel + q]; }

    /// Build a data vector with the solver's observation rule.
    template <typename Fn>  // fn(point, normal) -> double
    VecX observation_average(const Fn& fn) const {
        const int n = mesh_->panel_count();
        VecX g(n);
        for (int k = 0; k < n; ++k) {
            double acc = 0.0;
            for (int q = 0; q < kObsPoints; ++q)
                acc += fn(obs_point_[kObsPoints * k + q], obs_normal_[kObsPoints * k + q]);
            g[k] = acc / kObsPoints;
        }
        return g;
    }

    /// Solve the exterior Neumann problem with per-panel data g (directional
    /// derivative along the stored into-body normal).  The data must satisfy
    /// the zero-mean solvability condition.
    VecX solve(const VecX& g) const {
        const int n = mesh_->panel_count();
        if (g.size() != n) throw std::invalid_argument("BemContext::solve: data size mismatch");
        double flux = 0.0;
        for (int k = 0; k < n; ++k) flux += g[k] * mesh_->area[k];
        const double scale = g.cwiseAbs().maxCoeff() * mesh_->total_area + 1e-300;
        if (std::abs(flux) > 1e-8 * scale)
            throw std::invalid_argument("BemContext::solve: Neumann data has nonzero mean flux");
        return lu_.solve(g);
    }

    /// Exterior Neumann solve without the zero-mean gate: the single layer
    /// carries the compensating monopole (used by the pressure recovery,
    /// whose data has genuinely nonzero mean).
    VecX solve_unchecked(const VecX& g) const { return lu_.solve(g); }

    /// Solve after removing a uniform flux imbalance; the subtracted density
    /// is reported through `removed_flux`.
    VecX solve_balanced(VecX g, double* removed_flux = nullptr) const {
        const int n = mesh_->panel_count();
        double flux = 0.0;
        for (int k = 0; k < n; ++k) flux += g[k] * mesh_->area[k];
        const double uniform = flux / mesh_->total_area;
        if (removed_flux) *removed_flux = uniform;
        for (int k = 0; k < n; ++k) g[k] -= uniform;
        return lu_.solve(g);
    }

    // ---- field evaluation for a given density -------------------------------

    double potential_at(const Vec3& p, const VecX& sigma) const {
        double acc = 0.0;
        for (int j = 0; j < mesh_->panel_count(); ++j) {
            if (sigma[j] == 0.0) continue;
            const auto& t = panels_[j];
            const double dist = (p - t.centroid).norm();
            acc += sigma[j] * (dist < near_factor * t.diameter ? panel::source_potential(t, p)
                                                               : panel::source_potential_far(t, p));
        }
        return acc;
    }

    Vec3 velocity_at(const Vec3& p, const VecX& sigma) const {
        Vec3 acc = Vec3::Zero();
        for (int j = 0; j < mesh_->panel_count(); ++j) {
            if (sigma[j] == 0.0) continue;
            const auto& t = panels_[j];
            const double dist = (p - t.centroid).norm();
            acc += sigma[j] * (dist < near_factor * t.diameter ? panel::source_velocity(t, p)
                                                               : panel::source_velocity_far(t, p));
        }
        return acc;
    }

    Mat3 hessian_at(const Vec3& p, const VecX& sigma) const {
        Mat3 acc = Mat3::Zero();
        for (int j = 0; j < mesh_->panel_count(); ++j) {
            if (sigma[j] == 0.0) continue;
            acc += sigma[j] * panel::source_hessian(panels_[j], p);
        }
        return acc;
    }

    /// Panel-averaged boundary potential values.
    VecX boundary_values(const VecX& sigma) const { return potential_op_ * sigma; }

    /// Panel-averaged fluid-side boundary gradient (3 x N).
    MatX boundary_gradients(const VecX& sigma) const {
        MatX grads(3, mesh_->panel_count());
        grads.row(0) = (velocity_op_[0] * sigma).transpose();
        grads.row(1) = (velocity_op_[1] * sigma).transpose();
        grads.row(2) = (velocity_op_[2] * sigma).transpose();
        return grads;
    }

    /// Influence of unit density on panel j at point p; `self` takes the
    /// fluid-side limit.
    Vec3 velocity_influence(int j, const Vec3& p, bool self) const {
        const auto& t = panels_[j];
        if (self)
            return panel::source_velocity(t, p, 2.0 * pi());  // +m side is the fluid
        const double dist = (p - t.centroid).norm();
        if (dist < near_factor * t.diameter) return panel::source_velocity(t, p);
        return panel::source_velocity_far(t, p);
    }

    double potential_influence(int j, const Vec3& p, bool self) const {
        const auto& t = panels_[j];
        if (self) return panel::source_potential(t, p);  // weakly singular, in-plane form
        const double dist = (p - t.centroid).norm();
        if (dist < near_factor * t.diameter) return panel::source_potential(t, p);
        return panel::source_potential_far(t, p);
    }

private:
    const SurfaceMesh* mesh_ = nullptr;
    std::vector<panel::Triangle> panels_;
    std::vector<Vec3> obs_point_;   // kObsPoints per panel
    std::vector<Vec3> obs_normal_;  // analytic when the mesh has a generator
    MatX neumann_;
    MatX potential_op_;
    MatX velocity_op_[3];
    Eigen::PartialPivLU<MatX> lu_;
    double rcond_ = 0.0;
};

/// A solved exterior Neumann potential: single-layer density, panel-averaged
/// boundary traces, and pointwise traces at the observation points.
struct HarmonicPotential {
    const BemContext* bem = nullptr;
    VecX sigma;
    VecX boundary_value;      // panel averages
    MatX boundary_gradient;   // 3 x N, fluid side, panel averages
    VecX point_value;         // 3 N observation-point values
    MatX point_gradient;      // 3 x (3 N), fluid side

    bool empty() const { return sigma.size() == 0; }

    double value(const Vec3& p) const { return bem->potential_at(p, sigma); }
    Vec3 gradient(const Vec3& p) const { return bem->velocity_at(p, sigma); }
    Mat3 hessian(const Vec3& p) const { return bem->hessian_at(p, sigma); }
};

/// Solve one exterior Neumann problem; boundary traces cached separately
/// (see solve_family for the batched path).
inline HarmonicPotential solve_exterior_neumann(const BemContext& bem, const VecX& g) {
    HarmonicPotential pot;
    pot.bem = &bem;
    pot.sigma = bem.solve(g);
    pot.boundary_value = bem.boundary_values(pot.sigma);
    pot.boundary_gradient = bem.boundary_gradients(pot.sigma);
    return pot;
}

/// Solve a family of Neumann problems and fill the pointwise boundary traces
/// with one pass over (observation points x panels).
inline std::vector<HarmonicPotential> solve_family(const BemContext& bem, const std::vector<VecX>& data) {
    const int n = bem.mesh().panel_count();
    const int na = static_cast<int>(data.size());
    std::vector<HarmonicPotential> pots(na);
    for (int a = 0; a < na; ++a) {
        pots[a].bem = &bem;
        pots[a].sigma = bem.solve(data[a]);
        pots[a].point_value = VecX::Zero(BemContext::kObsPoints * n);
        pots[a].point_gradient = MatX::Zero(3, BemContext::kObsPoints * n);
    }

    parallel_for(n, [&](int k) {
        for (int q = 0; q < BemContext::kObsPoints; ++q) {
            const int idx = BemContext::kObsPoints * k + q;
            const Vec3& p = bem.observation_point(k, q);
            for (int j = 0; j < n; ++j) {
                const Vec3 v = bem.velocity_influence(j, p, j == k);
                const double phi = bem.potential_influence(j, p, j == k);
                for (int a = 0; a < na; ++a) {
                    const double s = pots[a].sigma[j];
                    pots[a].point_value[idx] += s * phi;
                    pots[a].point_gradient.col(idx) += s * v;
                }
            }
        }
    });

    for (int a = 0; a < na; ++a) {
        pots[a].boundary_value = VecX::Zero(n);
        pots[a].boundary_gradient = MatX::Zero(3, n);
        for (int k = 0; k < n; ++k) {
            for (int q = 0; q < BemContext::kObsPoints; ++q) {
                const int idx = BemContext::kObsPoints * k + q;
                pots[a].boundary_value[k] += pots[a].point_value[idx];
                pots[a].boundary_gradient.col(k) += pots[a].point_gradient.col(idx);
            }
            pots[a].boundary_value[k] /= BemContext::kObsPoints;
            pots[a].boundary_gradient.col(k) /= BemContext::kObsPoints;
        }
    }
    return pots;
}

/// Reconstruct d(phi)/dn with the same observation rule as the solve but
/// all-analytic source integrals, and compare with the data.  Measures the
/// far-field quadrature consistency of the solved density (relative RMS).
inline double boundary_flux_residual(const BemContext& bem, const HarmonicPotential& pot, const VecX& g) {
    const auto& mesh = bem.mesh();
    const int n = mesh.panel_count();
    VecX recon(n);
    parallel_for(n, [&](int k) {
        double acc = 0.0;
        for (int q = 0; q < BemContext::kObsPoints; ++q) {
            const Vec3& p = bem.observation_point(k, q);
            Vec3 v = Vec3::Zero();
            for (int j = 0; j < n; ++j)
                v += pot.sigma[j] * (j == k ? panel::source_velocity(bem.triangle(j), p, 2.0 * pi())
                                            : panel::source_velocity(bem.triangle(j), p));
            acc += bem.observation_normal(k, q).dot(v);
        }
        recon[k] = acc / BemContext::kObsPoints;
    });
    double num = 0.0, den = 0.0;
    for (int k = 0; k < n; ++k) {
        num += (recon[k] - g[k]) * (recon[k] - g[k]);
        den += g[k] * g[k];
    }
    return std::sqrt(num / std::max(den, 1e-300));
}

/// Fully independent reconstruction: quadratic extrapolation of the normal
/// velocity from the fluid side.  Carries the panel-level near-field noise,
/// so its honest magnitude is O(h); kept as a convergence diagnostic.
inline double offsurface_flux_residual(const BemContext& bem, const HarmonicPotential& pot, const VecX& g) {
    const auto& mesh = bem.mesh();
    const int n = mesh.panel_count();
    double num = 0.0, den = 0.0;
    for (int k = 0; k < n; ++k) {
        const double delta = 0.3 * std::sqrt(mesh.area[k]);
        const Vec3 dir = -mesh.normal[k];  // into the fluid
        const double f1 = mesh.normal[k].dot(pot.gradient(mesh.centroid[k] + delta * dir));
        const double f2 = mesh.normal[k].dot(pot.gradient(mesh.centroid[k] + 2.0 * delta * dir));
        const double f3 = mesh.normal[k].dot(pot.gradient(mesh.centroid[k] + 3.0 * delta * dir));
        const double recon = 3.0 * f1 - 3.0 * f2 + f3;  // quadratic extrapolation to the surface
        num += (recon - g[k]) * (recon - g[k]);
        den += g[k] * g[k];
    }
    return std::sqrt(num / std::max(den, 1e-300));
}

}  // namespace vbflow
