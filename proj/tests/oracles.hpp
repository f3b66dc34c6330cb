#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "test_util.hpp"
#include "vortexflow/wavefield.hpp"

namespace oracles {

using namespace vortexflow;

// Polar reduction of the truncated moving-frame flow, done directly on the
// complex Taylor coefficients:
//   dR/dt   = (c2 R^2 + c3 R^3 + ...)/G,  dphi/dt = (d0 + d1 R + ...)/G,
// then <f3> = (1/2pi) integral of (c3/d0 - c2 d1/d0^2) by an N-point
// trapezoid rule, which is exact for the trigonometric polynomials involved.
inline double f3_quadrature(const LocalExpansion& e, int N = 256) {
    // f3 is invariant under a common scaling of the coefficients; normalise
    // so that far-out nodes (tiny envelope) do not underflow.
    const double m = std::max({std::abs(e.z10()), std::abs(e.z01()), std::abs(e.z20()), std::abs(e.z11())});
    const cplx z10 = e.z10() / m, z01 = e.z01() / m, z20 = e.z20() / m, z02 = e.z02() / m, z11 = e.z11() / m;
    const double d0 = (std::conj(z10) * z01).imag();
    double sum = 0;
    for (int k = 0; k < N; ++k) {
        const double phi = 2 * std::numbers::pi * k / N;
        const double cu = std::cos(phi), sv = std::sin(phi);
        const cplx L = z10 * cu + z01 * sv;                                  // L / R
        const cplx Q = 0.5 * z20 * cu * cu + z11 * cu * sv + 0.5 * z02 * sv * sv;  // Q / R^2
        const cplx Qu = z20 * cu + z11 * sv, Qv = z11 * cu + z02 * sv;       // grad Q / R
        // Degree-2 part of the numerator Im(conj(L+Q) grad(L+Q)), over R^2.
        const double Nu = (std::conj(L) * Qu + std::conj(Q) * z10).imag();
        const double Nv = (std::conj(L) * Qv + std::conj(Q) * z01).imag();
        const double g2 = std::norm(L);
        const double g3 = 2 * (std::conj(L) * Q).real();
        const double Vr = e.V.x * cu + e.V.y * sv;
        const double Vt = e.V.y * cu - e.V.x * sv;
        const double p3 = cu * Nu + sv * Nv;
        const double q3 = cu * Nv - sv * Nu;
        const double c2 = p3 - Vr * g2;
        const double c3 = -Vr * g3;
        const double d1 = q3 - Vt * g2;
        sum += c3 / d0 - c2 * d1 / (d0 * d0);
    }
    return sum / N;
}

inline LocalExpansion random_expansion(testutil::Gen& g) {
    LocalExpansion e;
    e.a10 = g.uniform(-2, 2);
    e.a01 = g.uniform(-2, 2);
    e.b10 = g.uniform(-2, 2);
    e.b01 = g.uniform(-2, 2);
    e.a20 = g.uniform(-2, 2);
    e.b20 = g.uniform(-2, 2);
    e.a02 = -e.a20;
    e.b02 = -e.b20;
    e.a11 = g.uniform(-2, 2);
    e.b11 = g.uniform(-2, 2);
    e.V = {g.uniform(-3, 3), g.uniform(-3, 3)};
    return e;
}

// Independent node finder: grid minima of |psi| exp((x^2 + c y^2)/2), then
// Newton with a finite-difference Jacobian on eval_psi.
inline cplx reduced(const WaveSpec& s, double x, double y, double t) {
    return eval_psi(s, x, y, t) * std::exp(0.5 * (x * x + s.c * y * y));
}

inline bool oracle_newton(const WaveSpec& s, double t, Vec2& p) {
    for (int it = 0; it < 60; ++it) {
        const cplx f = reduced(s, p.x, p.y, t);
        if (std::abs(f) < 1e-14) return true;
        const double h = 1e-7;
        const cplx fx = (reduced(s, p.x + h, p.y, t) - reduced(s, p.x - h, p.y, t)) / (2 * h);
        const cplx fy = (reduced(s, p.x, p.y + h, t) - reduced(s, p.x, p.y - h, t)) / (2 * h);
        const double det = fx.real() * fy.imag() - fy.real() * fx.imag();
        if (det == 0) return false;
        p.x -= (f.real() * fy.imag() - fy.real() * f.imag()) / det;
        p.y -= (fx.real() * f.imag() - f.real() * fx.imag()) / det;
        if (!std::isfinite(p.x) || std::abs(p.x) > 20 || std::abs(p.y) > 20) return false;
    }
    return std::abs(reduced(s, p.x, p.y, t)) < 1e-12;
}

inline std::vector<Vec2> oracle_nodes(const WaveSpec& s, double t, double half, double step) {
    const int n = static_cast<int>(2 * half / step) + 1;
    std::vector<double> m(n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m[i * n + j] = std::abs(reduced(s, -half + i * step, -half + j * step, t));
    std::vector<Vec2> out;
    for (int i = 1; i + 1 < n; ++i)
        for (int j = 1; j + 1 < n; ++j) {
            bool lmin = true;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj)
                    if ((di || dj) && m[(i + di) * n + j + dj] < m[i * n + j]) lmin = false;
            if (!lmin) continue;
            Vec2 p{-half + i * step, -half + j * step};
            if (!oracle_newton(s, t, p)) continue;
            if (std::none_of(out.begin(), out.end(), [&](Vec2 q) { return norm(q - p) < 1e-6; })) out.push_back(p);
        }
    return out;
}

}  // namespace oracles
