#pragma once

// C^1 control signals: per-channel cubic Hermite splines on a uniform knot
// grid over [0, T], clamped to w(0) = 0.

#include "vbflow/core.hpp"

#include <vector>

namespace vbflow {

struct ControlSignal {
    int channels = 0;
    int knots = 2;          // >= 2
    double horizon = 1.0;   // knot grid spans [0, horizon]
    MatX values;            // channels x knots, column 0 pinned to zero
    MatX slopes;            // channels x knots

    ControlSignal() = default;

    ControlSignal(int m, int k, double T)
        : channels(m), knots(k), horizon(T), values(MatX::Zero(m, k)), slopes(MatX::Zero(m, k)) {
        if (m < 0 || k < 2 || T <= 0.0)
            throw std::invalid_argument("ControlSignal: need channels >= 0, knots >= 2, horizon > 0");
    }

    static ControlSignal zero(int m, double T) { return ControlSignal(m, 2, T); }

    double knot_spacing() const { return horizon / (knots - 1); }

    /// Degrees of freedom per channel once w(0) = 0 is clamped.
    int dof_per_channel() const { return 2 * knots - 1; }

    /// Pack the free coefficients (knot values 1..K-1, then all slopes).
    VecX pack() const {
        VecX theta(channels * dof_per_channel());
        int at = 0;
        for (int c = 0; c < channels; ++c) {
            for (int k = 1; k < knots; ++k) theta[at++] = values(c, k);
            for (int k = 0; k < knots; ++k) theta[at++] = slopes(c, k);
        }
        return theta;
    }

    void unpack(const VecX& theta) {
        if (theta.size() != channels * dof_per_channel())
            throw std::invalid_argument("ControlSignal::unpack: coefficient size mismatch");
        int at = 0;
        for (int c = 0; c < channels; ++c) {
            values(c, 0) = 0.0;
            for (int k = 1; k < knots; ++k) values(c, k) = theta[at++];
            for (int k = 0; k < knots; ++k) slopes(c, k) = theta[at++];
        }
    }

    VecX operator()(double t) const { return eval(t, false); }
    VecX derivative(double t) const { return eval(t, true); }

    VecX eval(double t, bool deriv) const {
        VecX out = VecX::Zero(channels);
        if (channels == 0) return out;
        const double dt = knot_spacing();
        double tc = std::clamp(t, 0.0, horizon);
        int cell = std::min(static_cast<int>(tc / dt), knots - 2);
        const double s = (tc - cell * dt) / dt;
        const double s2 = s * s, s3 = s2 * s;
        if (!deriv) {
            const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
            const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
            for (int c = 0; c < channels; ++c)
                out[c] = h00 * values(c, cell) + h10 * dt * slopes(c, cell) + h01 * values(c, cell + 1) +
                         h11 * dt * slopes(c, cell + 1);
        } else {
            const double g00 = (6 * s2 - 6 * s) / dt, g10 = 3 * s2 - 4 * s + 1;
            const double g01 = (-6 * s2 + 6 * s) / dt, g11 = 3 * s2 - 2 * s;
            for (int c = 0; c < channels; ++c)
                out[c] = g00 * values(c, cell) + g10 * slopes(c, cell) + g01 * values(c, cell + 1) +
                         g11 * slopes(c, cell + 1);
        }
        return out;
    }

    /// Exact reparametrization w^s(t) = a * w(a t): same basis with the knot
    /// grid stretched by 1/a, values scaled by a and slopes by a^2.
    ControlSignal time_scaled(double a) const {
        if (a <= 0.0) throw std::invalid_argument("ControlSignal::time_scaled: factor must be positive");
        ControlSignal out = *this;
        out.horizon = horizon / a;
        out.values = a * values;
        out.slopes = a * a * slopes;
        return out;
    }

    double max_abs() const {
        return channels == 0 ? 0.0 : std::max(values.cwiseAbs().maxCoeff(), 0.0);
    }
};

}  // namespace vbflow
