#include "vortexflow/complex_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "vortexflow/errors.hpp"
#include "vortexflow/ode.hpp"

namespace vortexflow {

std::string to_string(NodeClass c) {
    switch (c) {
        case NodeClass::attractor: return "attractor";
        case NodeClass::repellor: return "repellor";
        case NodeClass::center: return "center";
    }
    return "?";
}

std::string to_string(Rotation r) { return r == Rotation::clockwise ? "clockwise" : "counterclockwise"; }

namespace {

// The flow, f3 and the X-point depend only on ratios of the coefficients.
// Far nodes carry a tiny Gaussian envelope, so products of coefficients can
// underflow; rescale by a power of two (exact) to O(1) first.
LocalExpansion normalized(const LocalExpansion& e) {
    const double m = std::max({std::abs(e.a10), std::abs(e.a01), std::abs(e.b10), std::abs(e.b01), std::abs(e.a20),
                               std::abs(e.a02), std::abs(e.a11), std::abs(e.b20), std::abs(e.b02), std::abs(e.b11)});
    if (m == 0.0 || !std::isfinite(m)) return e;
    const int k = -std::ilogb(m);
    LocalExpansion r = e;
    for (double* x : {&r.a10, &r.a01, &r.a20, &r.a02, &r.a11, &r.b10, &r.b01, &r.b20, &r.b02, &r.b11})
        *x = std::ldexp(*x, k);
    r.psi0 = {std::ldexp(e.psi0.real(), k), std::ldexp(e.psi0.imag(), k)};
    return r;
}

}  // namespace

Vec2 moving_frame_rhs(const LocalExpansion& raw, double u, double v) {
    const LocalExpansion e = normalized(raw);
    const cplx z10 = e.z10(), z01 = e.z01(), z20 = e.z20(), z02 = e.z02(), z11 = e.z11();
    const cplx L = z10 * u + z01 * v;
    const cplx Q = 0.5 * z20 * u * u + z11 * u * v + 0.5 * z02 * v * v;
    const cplx Lu = z20 * u + z11 * v;
    const cplx Lv = z11 * u + z02 * v;
    const double G = std::norm(L + Q);
    if (G == 0.0) throw SingularField("moving-frame field evaluated at a zero of the expansion");
    const double nu = (std::conj(L) * z10 + std::conj(L) * Lu + std::conj(Q) * z10).imag();
    const double nv = (std::conj(L) * z01 + std::conj(L) * Lv + std::conj(Q) * z01).imag();
    return {nu / G - e.V.x, nv / G - e.V.y};
}

Vec2 moving_frame_rhs_exact(const Wavefield& field, const NodalState& frame, double u, double v) {
    return field.velocity(frame.pos.x + u, frame.pos.y + v, frame.t) - frame.vel;
}

std::array<double, 7> xpoint_g(const LocalExpansion& e) {
    const double B = e.a10 * e.a10 + e.b10 * e.b10;
    const double C = e.a01 * e.a10 + e.b01 * e.b10;
    const double D = e.a01 * e.a01 + e.b01 * e.b01;
    return {2.0 * e.d0(),
            2.0 * e.a11 * e.b01 + e.a10 * e.b02 - e.a02 * e.b10 - 2.0 * e.a01 * e.b11,
            e.a10 * e.b02 - e.a02 * e.b10,
            2.0 * e.a02 * e.b01 - 2.0 * e.a01 * e.b02,
            2.0 * D,
            -4.0 * C,
            2.0 * B};
}

namespace {

// Expansion in coordinates (u', v') with (u, v) = R(theta) (u', v').
LocalExpansion rotate(const LocalExpansion& e, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    const cplx z10 = e.z10(), z01 = e.z01(), z20 = e.z20(), z02 = e.z02(), z11 = e.z11();
    const cplx r10 = c * z10 + s * z01;
    const cplx r01 = -s * z10 + c * z01;
    const cplx r20 = c * c * z20 + 2.0 * c * s * z11 + s * s * z02;
    const cplx r02 = s * s * z20 - 2.0 * c * s * z11 + c * c * z02;
    const cplx r11 = -c * s * z20 + (c * c - s * s) * z11 + c * s * z02;
    LocalExpansion r = e;
    r.a10 = r10.real(); r.b10 = r10.imag();
    r.a01 = r01.real(); r.b01 = r01.imag();
    r.a20 = r20.real(); r.b20 = r20.imag();
    r.a02 = r02.real(); r.b02 = r02.imag();
    r.a11 = r11.real(); r.b11 = r11.imag();
    r.V = {c * e.V.x + s * e.V.y, -s * e.V.x + c * e.V.y};
    return r;
}

// X-point on the v-axis when V = (Vx, 0).
Vec2 axis_guess(const LocalExpansion& e) {
    const auto g = xpoint_g(e);
    const double den = g[1] + g[4] * e.V.x;
    if (std::abs(den) <= 1e-14 * (std::abs(g[1]) + std::abs(g[4] * e.V.x)) || den == 0.0)
        throw DegenerateGuess("vanishing X-point denominator");
    return {0.0, -g[0] / den};
}

}  // namespace

Vec2 xpoint_guess(const LocalExpansion& raw) {
    const LocalExpansion e = normalized(raw);
    const double Vx = e.V.x, Vy = e.V.y;
    const double speed = std::hypot(Vx, Vy);
    if (speed == 0.0) throw DegenerateGuess("no X-point in the rest frame");
    if (std::abs(Vx) < 0.05 * speed) {
        const double theta = std::atan2(Vy, Vx);
        const Vec2 p = axis_guess(rotate(e, theta));
        const double c = std::cos(theta), s = std::sin(theta);
        return {c * p.x - s * p.y, s * p.x + c * p.y};
    }
    if (std::abs(Vy) < 1e-12 * speed) return axis_guess(e);
    const auto g = xpoint_g(e);
    const double terms[] = {g[1] * Vx * Vx, g[2] * Vy * Vy, g[3] * Vx * Vy, g[4] * Vx * Vx * Vx,
                            g[5] * Vx * Vx * Vy, g[6] * Vx * Vy * Vy};
    double den = 0.0, mag = 0.0;
    for (double term : terms) {
        den += term;
        mag += std::abs(term);
    }
    if (std::abs(den) <= 1e-14 * mag || den == 0.0) throw DegenerateGuess("vanishing X-point denominator");
    const double u = g[0] * Vx * Vy / den;
    return {u, -(Vx / Vy) * u};
}

ComplexSnapshot xpoint_refine(const FlowJet& flow, const NodalState& node, Vec2 guess,
                              std::span<const NodalState> others, const XPointOptions& opt) {
    const Vec2 V = node.vel;
    Vec2 p = guess;
    if (!(norm(p) > 0.0)) throw NoConvergence("X-point seed at the node");
    bool converged = false;
    int it = 0;
    VelocityJet jet;
    try {
        for (; it < opt.max_iter; ++it) {
            jet = flow(node.pos + p);
            const Vec2 F = jet.v - V;
            // Rounding floor of v: its terms are O(|V|) and O(1/|p|) near the node.
            if (norm(F) <= 1e-13 * std::max({1.0, norm(V), 1.0 / norm(p)})) {
                converged = true;
                break;
            }
            const Sym2& J = jet.jac;
            const double det = J.xx * J.yy - J.xy * J.xy;
            if (det == 0.0 || !std::isfinite(det)) throw NoConvergence("singular X-point Jacobian");
            Vec2 step{-(J.yy * F.x - J.xy * F.y) / det, -(J.xx * F.y - J.xy * F.x) / det};
            const double r = norm(p);
            const double len = norm(step);
            if (len > 0.5 * r) step *= 0.5 * r / len;  // never jump across the node
            p += step;
            if (!std::isfinite(p.x) || !std::isfinite(p.y) || norm(p) > 4.0 * opt.max_radius)
                throw NoConvergence("X-point iteration diverged");
            // Absolute positions cannot resolve steps below a few ulps of |node.pos|.
            const double floor = 8.0 * std::numeric_limits<double>::epsilon() * (norm(node.pos) + norm(p));
            if (norm(step) <= std::max(opt.tol * std::max(norm(p), 1e-3), floor)) {
                converged = true;
                ++it;
                break;
            }
        }
        jet = flow(node.pos + p);
    } catch (const SingularField&) {
        throw NoConvergence("X-point iteration hit a node");
    }
    const double speed = norm(V);
    const double residual = norm(jet.v - V);
    if (!converged || residual > 1e-8 * std::max(1.0, speed))
        throw NoConvergence("X-point refinement did not converge");

    ComplexSnapshot snap;
    snap.node = node;
    snap.t = node.t;
    snap.xpoint = p;
    snap.R_X = norm(p);
    snap.newton_iterations = it;
    if (snap.R_X > opt.max_radius) throw SpuriousXPoint("X-point too far from its node");
    const Sym2& J = jet.jac;
    if (J.xx * J.yy - J.xy * J.xy >= 0.0) throw SpuriousXPoint("stationary point is not a saddle");

    const Vec2 X = node.pos + p;
    double nearest = snap.R_X;
    snap.adiabatic_a = 0.0;
    for (const NodalState& o : others) {
        if (norm(o.pos - node.pos) < 1e-12) continue;
        const double d = norm(X - o.pos);
        if (d < nearest) {
            nearest = d;
            snap.adiabatic_a = speed > 0.0 ? norm(V - o.vel) / speed : std::numeric_limits<double>::infinity();
        }
    }
    if (!(snap.adiabatic_a < opt.theta_a))
        throw SpuriousXPoint("X-point belongs to another node (adiabaticity ratio " +
                             std::to_string(snap.adiabatic_a) + ")");
    snap.adiabatic_b = snap.R_X;
    return xpoint_eigen(flow, snap);
}

ComplexSnapshot xpoint_refine(const Wavefield& field, const NodalState& node, Vec2 guess,
                              std::span<const NodalState> others, const XPointOptions& opt) {
    const double t = node.t;
    return xpoint_refine([&](Vec2 q) { return field.velocity_jet(q.x, q.y, t); }, node, guess, others, opt);
}

ComplexSnapshot xpoint_eigen(const FlowJet& flow, ComplexSnapshot snap) {
    const VelocityJet jet = flow(snap.xpoint_abs());
    const SymEigen e = eigen_sym(jet.jac);
    snap.eigenvalues = e.values;
    snap.eigenvectors = e.vectors;
    return snap;
}

ComplexSnapshot xpoint_eigen(const Wavefield& field, ComplexSnapshot snap) {
    const double t = snap.t;
    return xpoint_eigen([&](Vec2 q) { return field.velocity_jet(q.x, q.y, t); }, std::move(snap));
}

double f3_generic(const LocalExpansion& raw) {
    const LocalExpansion e = normalized(raw);
    const double a10 = e.a10, a01 = e.a01, a02 = e.a02, a11 = e.a11;
    const double b10 = e.b10, b01 = e.b01, b02 = e.b02, b11 = e.b11;
    const double d0 = e.d0();
    const double scale = a10 * a10 + b10 * b10 + a01 * a01 + b01 * b01;
    if (std::abs(d0) <= 1e-14 * scale || d0 == 0.0) throw DegenerateNode("linear part of psi is degenerate");
    const double Vx = e.V.x, Vy = e.V.y;
    if (Vx == 0.0 && Vy == 0.0) return 0.0;

    const double a10s = a10 * a10, a01s = a01 * a01, b10s = b10 * b10, b01s = b01 * b01;
    const double t1 = 2 * a01 * a10s * b02 + a01s * a11 * b10 - a10s * a11 * b10 - 2 * a10 * a02 * a01 * b10 +
                      a11 * b01s * b10 + 2 * a10 * b01 * b02 * b10 - 2 * a02 * b01 * b10s - a11 * b10s * b10 -
                      a01s * a10 * b11 + a10s * a10 * b11 - a10 * b01s * b11 + a10 * b10s * b11;
    const double t2 = 2 * a01 * a02 * a10 * b01 - 2 * a10 * a01s * b02 + a10s * a11 * b01 - a01s * a11 * b01 +
                      a11 * b10s * b01 + 2 * a02 * b10 * b01s - 2 * a01 * b10 * b02 * b01 - a11 * b01s * b01 -
                      a10s * a01 * b11 + a01s * a01 * b11 - a01 * b10s * b11 + a01 * b01s * b11;
    const double t3 = a01s * a01 * a10 + a01 * a10s * a10 + a01 * a10 * b01s + a01s * b01 * b10 +
                      a10s * b01 * b10 + b01s * b01 * b10 + a01 * a10 * b10s + b01 * b10s * b10;
    const double t4 = a01s * a01s - a10s * a10s + 2 * a01s * b01s + b01s * b01s - b10s * b10s - 2 * a10s * b10s;
    return (Vx * t1 - Vy * t2 + (Vx * Vx - Vy * Vy) * t3 + Vx * Vy * t4) / (4.0 * d0 * d0);
}

double f3_ekc(double t, double a, double b, double c) {
    const double s = std::sin((1.0 + c) * t);
    if (std::abs(s) < kTolDenominator || std::abs(std::sin(c * t)) < kTolDenominator)
        throw InfiniteF3("f3 pole");
    NodalState n;
    try {
        n = nodal_ekc(t, a, b, c);
    } catch (const NodeAtInfinity& e) {
        throw InfiniteF3(e.what());
    }
    const double B = b * std::sqrt(c);
    const double x0 = n.pos.x, xd = n.vel.x, yd = n.vel.y;
    const double x04 = x0 * x0 * x0 * x0;
    const double K = b * b * c * x04;
    const double cot = std::cos((1.0 + c) * t) / s;
    const double bracket = (1.0 - K) / (1.0 + K) * x0 * xd + xd * yd * (K - 1.0) / (B * s) -
                           x0 * x0 * (xd * xd - yd * yd) * cot;
    return (1.0 + K) / (4.0 * B * x04 * s) * bracket;
}

Classification classify_node(double f3, double d0, Vec2 V) {
    if (d0 == 0.0 || !std::isfinite(d0)) throw DegenerateNode("d0 vanishes");
    Classification out;
    out.rotation = d0 > 0.0 ? Rotation::counterclockwise : Rotation::clockwise;
    if (V.x == 0.0 && V.y == 0.0) {
        out.kind = NodeClass::center;
        return out;
    }
    const bool ccw = out.rotation == Rotation::counterclockwise;
    out.kind = ((f3 < 0.0 && ccw) || (f3 > 0.0 && !ccw)) ? NodeClass::attractor : NodeClass::repellor;
    return out;
}

ComplexSnapshot analyze_complex(const Wavefield& field, const NodalState& node,
                                std::span<const NodalState> others, std::optional<Vec2> previous,
                                const XPointOptions& opt) {
    const LocalExpansion e = field.expansion(node.pos, node.t, node.vel);
    ComplexSnapshot snap;
    bool done = false;
    if (previous) {
        try {
            snap = xpoint_refine(field, node, *previous, others, opt);
            done = true;
        } catch (const NoConvergence&) {
        }
    }
    if (!done) snap = xpoint_refine(field, node, xpoint_guess(e), others, opt);
    snap.d0 = e.d0();
    snap.f3 = f3_generic(e);
    const Classification cls = classify_node(snap.f3, normalized(e).d0(), node.vel);
    snap.classification = cls.kind;
    snap.rotation = cls.rotation;
    return snap;
}

Adiabaticity adiabaticity(const ComplexSnapshot& snap, Vec2 V0, double theta_a) {
    Adiabaticity out;
    const double speed = norm(snap.node.vel);
    out.ratio_a = speed > 0.0 ? norm(snap.node.vel - V0) / speed : std::numeric_limits<double>::infinity();
    out.R_X = snap.R_X;
    out.pass_a = out.ratio_a < theta_a;
    out.pass_b = out.R_X < 1.0;
    return out;
}

HopfScan hopf_scan(const std::function<std::optional<F3Sample>(double)>& sample, double t0, double t1,
                   double dt, double tol) {
    HopfScan scan;
    struct Point {
        double t;
        F3Sample s;
    };
    auto bisect = [&](Point lo, Point hi, auto&& value) {
        // value(sample) changes sign between lo and hi; returns (t, |value| at t).
        double a = lo.t, b = hi.t;
        const double va = value(lo.s);
        std::optional<F3Sample> mid_sample;
        while (b - a > tol) {
            const double m = 0.5 * (a + b);
            mid_sample = sample(m);
            if (!mid_sample) break;  // landed on a pole
            if ((value(*mid_sample) > 0.0) == (va > 0.0)) a = m;
            else b = m;
        }
        const double tm = 0.5 * (a + b);
        const auto sm = sample(tm);
        return std::pair<double, double>{tm, sm ? std::abs(value(*sm)) : std::numeric_limits<double>::infinity()};
    };

    const long n = static_cast<long>(std::floor((t1 - t0) / dt + 1e-9));
    std::optional<Point> prev;
    std::vector<double> breaks{t0, t1};
    for (long k = 1; k <= n; ++k) {
        const double t = t0 + k * dt;
        const auto s = sample(t);
        if (!s) {
            prev.reset();
            breaks.push_back(t);
            continue;
        }
        const Point cur{t, *s};
        if (prev) {
            if ((prev->s.f3 > 0.0) != (cur.s.f3 > 0.0)) {
                const auto [tz, vz] = bisect(*prev, cur, [](const F3Sample& x) { return x.f3; });
                if (vz < std::min(std::abs(prev->s.f3), std::abs(cur.s.f3))) {
                    const auto sz = sample(tz);
                    const double slope = cur.s.f3 - prev->s.f3;
                    const double d0 = sz ? sz->d0 : cur.s.d0;
                    scan.zeros.push_back({tz, (slope > 0.0) == (d0 > 0.0)});
                } else {
                    scan.poles.push_back(tz);
                }
                breaks.push_back(tz);
            }
            if ((prev->s.d0 > 0.0) != (cur.s.d0 > 0.0)) {
                const auto [tf, vf] = bisect(*prev, cur, [](const F3Sample& x) { return x.d0; });
                scan.rotation_flips.push_back(tf);
                breaks.push_back(tf);
            }
        }
        prev = cur;
    }

    std::sort(breaks.begin(), breaks.end());
    double repellor = 0.0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        const double a = breaks[i], b = breaks[i + 1];
        if (b <= a) continue;
        const auto s = sample(0.5 * (a + b));
        if (!s) continue;
        if (s->f3 * s->d0 > 0.0) repellor += b - a;
    }
    scan.repellor_fraction = repellor / (t1 - t0);
    return scan;
}

HopfScan hopf_scan_ekc(double a, double b, double c, double t0, double t1, double dt) {
    return hopf_scan(
        [=](double t) -> std::optional<F3Sample> {
            try {
                return F3Sample{f3_ekc(t, a, b, c), std::sin((1.0 + c) * t)};
            } catch (const InfiniteF3&) {
                return std::nullopt;
            }
        },
        t0, t1, dt);
}

std::optional<double> return_radius(const Wavefield& field, const ComplexSnapshot& snap, double r0,
                                    const LimitCycleOptions& opt) {
    const NodalState& node = snap.node;
    const double RX = snap.R_X;
    const Vec2 dir = (-1.0 / RX) * snap.xpoint;
    ode::State<2> y{r0 * dir.x, r0 * dir.y};
    auto rhs = [&](double, const ode::State<2>& p, ode::State<2>& dp) {
        try {
            const Vec2 v = field.velocity(node.pos.x + p[0], node.pos.y + p[1], node.t) - node.vel;
            dp = {v.x, v.y};
            return true;
        } catch (const SingularField&) {
            return false;
        }
    };
    auto cap = [&](double, const ode::State<2>& p) { return 0.1 * (p[0] * p[0] + p[1] * p[1]) + 1e-12; };
    auto angle_of = [&](const ode::State<2>& p) { return std::atan2(cross(dir, {p[0], p[1]}), dot(dir, {p[0], p[1]})); };

    std::optional<double> out;
    double swept = 0.0;
    auto observe = [&](const ode::Step<2>& s) {
        const double r = std::hypot(s.y1[0], s.y1[1]);
        if (r > opt.escape_radius * RX || r < 1e-9 * RX) return false;
        const double step = std::remainder(angle_of(s.y1) - angle_of(s.y0), 2 * std::numbers::pi);
        if (std::abs(swept + step) < 2 * std::numbers::pi) {
            swept += step;
            return true;
        }
        // Full turn inside this step: bisect the swept angle on the interpolant.
        const double target = swept > 0 || (swept == 0 && step > 0) ? 2 * std::numbers::pi : -2 * std::numbers::pi;
        double lo = s.t0, hi = s.t1;
        for (int k = 0; k < 100 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++k) {
            const double m = 0.5 * (lo + hi);
            const double part = std::remainder(angle_of(ode::hermite(s, m)) - angle_of(s.y0), 2 * std::numbers::pi);
            (std::abs(swept + part) < std::abs(target) ? lo : hi) = m;
        }
        const auto q = ode::hermite(s, hi);
        out = std::hypot(q[0], q[1]);
        return false;
    };
    ode::Options o;
    o.rtol = opt.rtol;
    o.atol = 1e-14;
    ode::integrate<2>(rhs, 0.0, y, 1e6, o, cap, observe);
    return out;
}

std::optional<double> stable_cycle_radius(const Wavefield& field, const ComplexSnapshot& snap,
                                          const LimitCycleOptions& opt) {
    const double RX = snap.R_X;
    std::optional<double> cycle;
    std::optional<double> prev_r, prev_g;
    for (int k = 1; k <= opt.ray_samples; ++k) {
        const double r = RX * opt.max_fraction * k / opt.ray_samples;
        const auto back = return_radius(field, snap, r, opt);
        if (!back) break;  // outside the separatrix loop
        const double g = *back - r;
        if (prev_g && *prev_g > 0.0 && g < 0.0) cycle = *prev_r + (r - *prev_r) * *prev_g / (*prev_g - g);
        prev_r = r;
        prev_g = g;
    }
    return cycle;
}

LimitCycleReport limit_cycle_lifetime(double a, double b, double c, double t_hopf, double t_max,
                                      const LimitCycleOptions& opt) {
    if (!(opt.dt > 0.0) || !(t_max > t_hopf)) throw ConfigError("invalid limit-cycle scan");
    const Wavefield field(Preset{Family::ekc, a, b, 0.0, c}.spec());
    LimitCycleReport rep;
    rep.t_hopf = t_hopf;
    rep.t_reach_x = t_max;
    // Just after the zero the cycle is still inside the first ray sample.
    bool seen = false;
    for (long k = 1;; ++k) {
        const double t = std::min(t_max, t_hopf + static_cast<double>(k) * opt.dt);
        const ComplexSnapshot snap = analyze_complex(field, nodal_ekc(t, a, b, c));
        const auto r = stable_cycle_radius(field, snap, opt);
        if (r) {
            seen = true;
            rep.last_radius = *r / snap.R_X;
        } else if (seen) {
            rep.t_reach_x = t;
            break;
        }
        if (t >= t_max) {
            if (!seen) throw NoConvergence("no stable cycle before t_max");
            break;
        }
    }
    rep.lifetime = rep.t_reach_x - t_hopf;
    return rep;
}

}  // namespace vortexflow
