#pragma once

// Discrete estimates of the decay-weighted norms and Hoelder seminorms used
// as convergence monitors: weighted marker sums for the L^p / M^p families,
// max pairwise quotients for the Hoelder part, and the combined triple norm
// on (l, r, omega).

#include "vbflow/core.hpp"
#include "vbflow/markers.hpp"

#include <algorithm>
#include <vector>

namespace vbflow {

struct NormParams {
    double p = 3.5;      // integrability exponent, in (3, 4]
    double delta = 0.05; // decay offset, in [0, 1 - 3/p)
    double alpha = 0.12; // Hoelder exponent, in (0, 1 - 3/p]

    void validate() const {
        if (!(p > 3.0 && p <= 4.0))
            throw std::invalid_argument("NormParams: p must lie in (3, 4]");
        if (!(delta >= 0.0 && delta < 1.0 - 3.0 / p))
            throw std::invalid_argument("NormParams: delta must lie in [0, 1 - 3/p)");
        if (!(alpha > 0.0 && alpha <= 1.0 - 3.0 / p))
            throw std::invalid_argument("NormParams: alpha must lie in (0, 1 - 3/p]");
    }
};

inline double bracket_weight(const Vec3& y) { return std::sqrt(1.0 + y.squaredNorm()); }

struct NormDiagnostics {
    double lp_weighted = 0.0;      // || omega ||_{L^p_{p lambda}}
    double m1_weighted = 0.0;      // adds the gradient tier of M^p_{1, lambda}
    double sup_norm = 0.0;
    double holder_seminorm = 0.0;  // | omega |_{0, alpha} over sampled pairs
    double c0alpha = 0.0;          // sup + seminorm

    double vorticity_norm() const { return c0alpha + lp_weighted; }

    /// Triple norm |l| + |r| + ||omega||_{C^{0,alpha}} + ||omega||_{L^p_{p(delta+2)}}.
    double triple(const Vec3& l, const Vec3& r) const { return l.norm() + r.norm() + vorticity_norm(); }
};

namespace detail {

// deterministic pair subsampling: nested prefixes so estimates grow
// monotonically with the sample size
inline std::vector<std::pair<int, int>> holder_pairs(int n, int max_pairs) {
    std::vector<std::pair<int, int>> pairs;
    if (n < 2) return pairs;
    std::uint64_t s = 0x9e3779b97f4a7c15ull;
    auto next = [&s]() {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        return s;
    };
    const int want = std::min<long long>(max_pairs, static_cast<long long>(n) * (n - 1) / 2);
    while (static_cast<int>(pairs.size()) < want) {
        const int a = static_cast<int>(next() % n);
        const int b = static_cast<int>(next() % n);
        if (a != b) pairs.emplace_back(a, b);
    }
    return pairs;
}

}  // namespace detail

/// Norm estimates for a vector field sampled on markers.  `values[k]` is the
/// field at marker k; gradients may be empty when the M^p_1 tier is not
/// needed.
inline NormDiagnostics estimate_norms(const std::vector<Vec3>& positions, const std::vector<Vec3>& values,
                                      const std::vector<Mat3>& gradients, const std::vector<double>& volumes,
                                      const NormParams& params, double lambda, int max_pairs = 20000) {
    params.validate();
    NormDiagnostics d;
    const int n = static_cast<int>(positions.size());
    double acc = 0.0, acc_grad = 0.0;
    for (int k = 0; k < n; ++k) {
        const double wgt = std::pow(bracket_weight(positions[k]), params.p * lambda);
        acc += std::pow(values[k].norm(), params.p) * wgt * volumes[k];
        if (!gradients.empty()) {
            const double wgt1 = std::pow(bracket_weight(positions[k]), params.p * (lambda + 1.0));
            acc_grad += std::pow(gradients[k].norm(), params.p) * wgt1 * volumes[k];
        }
        d.sup_norm = std::max(d.sup_norm, values[k].norm());
    }
    d.lp_weighted = std::pow(acc, 1.0 / params.p);
    d.m1_weighted = d.lp_weighted + (gradients.empty() ? 0.0 : std::pow(acc_grad, 1.0 / params.p));

    for (const auto& [a, b] : detail::holder_pairs(n, max_pairs)) {
        const double dist = (positions[a] - positions[b]).norm();
        if (dist < 1e-12) continue;
        const double quot = (values[a] - values[b]).norm() / std::pow(dist, params.alpha);
        d.holder_seminorm = std::max(d.holder_seminorm, quot);
    }
    d.c0alpha = d.sup_norm + d.holder_seminorm;
    return d;
}

/// det G = 1 makes the inverse the adjugate transpose; no pivoting needed.
inline Mat3 inverse_by_adjugate(const Mat3& g) {
    Mat3 adj;
    adj.col(0) = g.col(1).cross(g.col(2));
    adj.col(1) = g.col(2).cross(g.col(0));
    adj.col(2) = g.col(0).cross(g.col(1));
    const double det = g.col(0).dot(g.col(1).cross(g.col(2)));
    return adj.transpose() / det;
}

/// Norms of the current marker vorticity, weight lambda = delta + 2.
inline NormDiagnostics vorticity_norms(const MarkerSet& markers, const NormParams& params,
                                       int max_pairs = 20000) {
    std::vector<Vec3> values(markers.count());
    std::vector<Mat3> gradients(markers.count());
    for (int k = 0; k < markers.count(); ++k) {
        values[k] = markers.vorticity(k);
        // d(omega)/dy estimated from the transported seed gradient:
        // omega(X) = G omega0(x) gives d(omega)/dy ~= G d(omega0)/dx G^{-1}
        // (the unavailable second derivative of the flow map is dropped)
        const Mat3& g = markers.jacobian[k];
        gradients[k] = g * markers.omega0_gradient[k] * inverse_by_adjugate(g);
    }
    return estimate_norms(markers.position, values, gradients, markers.volume, params, params.delta + 2.0,
                          max_pairs);
}

}  // namespace vbflow
