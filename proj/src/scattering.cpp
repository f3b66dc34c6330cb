#include "vortexflow/scattering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>

#include "vortexflow/errors.hpp"
#include "vortexflow/ode.hpp"

namespace vortexflow {

namespace {

double speed(const ToyParams& p) {
    if (!(p.xdot0 != 0.0) || !std::isfinite(p.xdot0)) throw ConfigError("xdot0 must be nonzero");
    return std::abs(p.xdot0);
}

// Root of a strictly increasing f on a bracket grown from `guess`.
template <class F>
double increasing_root(F f, double guess, double step, double lo_limit, double hi_limit) {
    double lo = guess, hi = guess;
    while (f(lo) > 0.0) {
        lo = std::max(lo_limit, lo - step);
        step *= 2;
        if (lo == lo_limit && f(lo) > 0.0) throw NoConvergence("root bracket failed");
    }
    step = std::abs(step);
    while (f(hi) < 0.0) {
        hi = std::min(hi_limit, hi + step);
        step *= 2;
        if (hi == hi_limit && f(hi) < 0.0) throw NoConvergence("root bracket failed");
    }
    if (f(lo) == 0.0) return lo;
    if (f(hi) == 0.0) return hi;
    boost::uintmax_t iters = 200;
    const auto r = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
    return 0.5 * (r.first + r.second);
}

// Integrals in the positive-speed frame.
double v1_pos(double C, double x, double L) {
    const double lnC = std::log(C);
    auto f = [&](double v) { return 2.0 * x * v + std::log(L * L + v * v) - lnC; };
    return increasing_root(f, (lnC - 2.0 * std::log(L)) / (2.0 * x), 0.1, -1e6, 1e6);
}

double v0_pos(double C, double x) {
    const double lnC = std::log(C);
    const double Cx = std::exp(-2.0) / (x * x);
    if (C < Cx) {
        // lower root, v < -1/x, where 2 x v + 2 ln(-v) increases
        auto f = [&](double v) { return 2.0 * x * v + 2.0 * std::log(-v) - lnC; };
        const double vx = -1.0 / x;
        double lo = vx - 1.0 / x, hi = vx;
        while (f(lo) > 0.0) lo += (lo - vx);
        boost::uintmax_t iters = 200;
        const auto r =
            boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
        return 0.5 * (r.first + r.second);
    }
    auto f = [&](double v) { return 2.0 * x * v + 2.0 * std::log(v) - lnC; };
    return increasing_root(f, 0.278464542761074 / x, 0.1 / x, 1e-300, 1e6);
}

double traversal_pos(double C, double x, double L) {
    const double Cx = std::exp(-2.0) / (x * x);
    if (!(C > 0.0)) throw ConfigError("C must be positive");
    if (std::abs(C - Cx) < 1e-12 * Cx) throw SeparatrixC("C on the separatrix: traversal time diverges");
    const double v1 = v1_pos(C, x, L);
    const double v0 = v0_pos(C, x);
    if (!(v1 < v0)) throw ConfigError("curve does not traverse the complex from the launch line");
    const double w0 = 2.0 * v0 * (x * v0 + 1.0);

    // v = v0 - s^2: u^2 = s^2 q(s), dt = 2 v0^2 e^z ds / sqrt(q), z = 2 x s^2
    auto fs = [&](double s) {
        const double z = 2.0 * x * s * s;
        const double ez = z == 0.0 ? 0.0 : (std::expm1(z) - z) / z;  // (e^z - 1)/z - 1
        const double q = w0 + 2.0 * x * v0 * v0 * ez - s * s;
        return 2.0 * v0 * v0 * std::exp(z) / std::sqrt(std::max(q, 0.0));
    };
    auto fv = [&](double v) {
        const double a = C * std::exp(-2.0 * x * v);
        return a / std::sqrt(std::max(a - v * v, 0.0));
    };
    boost::math::quadrature::tanh_sinh<double> ts(15);
    const double vx = -1.0 / x;
    double half = 0.0;
    if (C > Cx && v1 < vx) {
        // the slow passage near the X-point sits at the split
        half = ts.integrate(fs, 0.0, std::sqrt(v0 - vx)) + ts.integrate(fv, v1, vx);
    } else {
        half = ts.integrate(fs, 0.0, std::sqrt(v0 - v1));
    }
    return 2.0 * half;
}

}  // namespace

Vec2 toy_rhs(double u, double v, const ToyParams& p) {
    const double r2 = u * u + v * v;
    if (r2 == 0.0) throw SingularField("toy flow singular at the origin");
    return {-v / r2 - p.xdot0, u / r2};
}

Sym2 toy_jacobian(double u, double v, const ToyParams&) {
    const double r2 = u * u + v * v;
    if (r2 == 0.0) throw SingularField("toy flow singular at the origin");
    const double r4 = r2 * r2;
    return {2.0 * u * v / r4, (v * v - u * u) / r4, -2.0 * u * v / r4};
}

double invariant_C(double u, double v, const ToyParams& p) { return std::exp(2.0 * p.xdot0 * v) * (u * u + v * v); }

double separatrix_C(const ToyParams& p) {
    const double x = speed(p);
    return std::exp(-2.0) / (x * x);
}

SeparatrixCrossings separatrix_crossings(const ToyParams& p) {
    const double x = speed(p);
    const double sign = p.xdot0 > 0 ? 1.0 : -1.0;
    SeparatrixCrossings out;
    out.a_s = increasing_root([](double a) { return a + std::log(a) + 1.0; }, 0.3, 0.05, 1e-300, 1.0);
    out.v_s = sign * v1_pos(std::exp(-2.0) / (x * x), x, 1.0);
    out.v_x_up = sign * out.a_s / x;
    return out;
}

double v1_of_C(double C, const ToyParams& p, double u_line) {
    const double sign = p.xdot0 > 0 ? 1.0 : -1.0;
    return sign * v1_pos(C, speed(p), u_line);
}

double v0_of_C(double C, const ToyParams& p) {
    const double sign = p.xdot0 > 0 ? 1.0 : -1.0;
    return sign * v0_pos(C, speed(p));
}

double traversal_time(double C, const ToyParams& p, double u_limit) { return traversal_pos(C, speed(p), u_limit); }

double amplification_estimate(double C, const ToyParams& p) {
    const double x = speed(p);
    const double Cx = std::exp(-2.0) / (x * x);
    if (std::abs(C - Cx) < 1e-12 * Cx) throw SeparatrixC("C on the separatrix");
    const double h = 1e-6 * std::abs(C - Cx);
    const double dT = (traversal_pos(C + h, x, 1.0) - traversal_pos(C - h, x, 1.0)) / (2.0 * h);
    return 1.0 + 2.0 * x * x * std::abs(dT) * C;
}

ScatterResult scatter_amplification(double v1, const ToyParams& p, const ScatterOptions& opt) {
    const double x = speed(p);
    const double sign = p.xdot0 > 0 ? 1.0 : -1.0;
    const ToyParams q{x};
    const double vs = v1_pos(std::exp(-2.0) / (x * x), x, opt.u_launch);
    // Work in the frame where the node drifts towards +u; reflect back at the end.
    const double w1 = sign * v1;
    if (std::abs(w1 - vs) < 1e-12) throw SeparatrixLaunch("launch on the stable manifold");

    ScatterResult res;
    res.v1 = v1;
    res.delta_v1 = std::abs(w1 - vs);
    res.type = w1 > vs ? EncounterType::type_I : EncounterType::type_II;

    const double xi0 = norm(opt.xi0);
    if (!(xi0 > 0.0)) throw ConfigError("deviation vector must be nonzero");
    ode::State<4> y{opt.u_launch, w1, sign * opt.xi0.x / xi0, sign * opt.xi0.y / xi0};

    auto rhs = [&](double, const ode::State<4>& s, ode::State<4>& d) {
        const double r2 = s[0] * s[0] + s[1] * s[1];
        if (r2 == 0.0) return false;
        const Vec2 f = toy_rhs(s[0], s[1], q);
        const Vec2 g = toy_jacobian(s[0], s[1], q) * Vec2{s[2], s[3]};
        d = {f.x, f.y, g.x, g.y};
        return true;
    };
    auto cap = [&](double, const ode::State<4>& s) { return 0.1 * (s[0] * s[0] + s[1] * s[1]); };

    ode::Options o;
    o.rtol = opt.tol;
    o.atol = opt.tol * 1e-3;

    std::vector<Vec2> path{{y[0], y[1]}};
    if (opt.keep_profile) res.profile.push_back({0.0, {y[0], y[1]}, 1.0});
    bool exited = false;
    double t_exit = 0.0;
    ode::State<4> y_exit{};
    auto observe = [&](const ode::Step<4>& s) {
        if (s.y1[0] <= opt.u_exit) {
            double lo = s.t0, hi = s.t1;
            for (int k = 0; k < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++k) {
                const double mid = 0.5 * (lo + hi);
                (ode::hermite(s, mid)[0] > opt.u_exit ? lo : hi) = mid;
            }
            // the cubic interpolant only locates the crossing; the state comes from a fresh step
            t_exit = hi;
            y_exit = s.y0;
            ode::integrate<4>(rhs, s.t0, y_exit, hi, o, cap, [](const ode::Step<4>&) { return true; });
            exited = true;
            path.push_back({y_exit[0], y_exit[1]});
            if (opt.keep_profile) res.profile.push_back({hi, {y_exit[0], y_exit[1]}, std::hypot(y_exit[2], y_exit[3])});
            return false;
        }
        path.push_back({s.y1[0], s.y1[1]});
        if (opt.keep_profile) res.profile.push_back({s.t1, {s.y1[0], s.y1[1]}, std::hypot(s.y1[2], s.y1[3])});
        return true;
    };
    ode::integrate<4>(rhs, 0.0, y, opt.t_max, o, cap, observe);
    if (!exited) throw NoConvergence("toy orbit did not reach the exit line");

    res.t_scatter = t_exit;
    res.amplification = std::hypot(y_exit[2], y_exit[3]);

    const Vec2 xp{0.0, -1.0 / x};
    Vec2 closest = path.front();
    for (const Vec2& r : path)
        if (norm(r - xp) < norm(closest - xp)) closest = r;
    res.path_type = classify_path(path, closest, xp, 0.5, &res.winding);

    if (sign < 0)
        for (ToySample& s : res.profile) s.p = -s.p;
    return res;
}

PowerLawFit fit_power_law(std::span<const std::pair<double, double>> samples) {
    if (samples.size() < 5) throw DegenerateFit("power-law fit needs at least five samples");
    double xmin = std::numeric_limits<double>::infinity(), xmax = 0.0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (const auto& [xv, yv] : samples) {
        if (!(xv > 0.0) || !(yv > 0.0)) throw DegenerateFit("power-law fit needs positive samples");
        xmin = std::min(xmin, xv);
        xmax = std::max(xmax, xv);
        const double lx = std::log(xv), ly = std::log(yv);
        sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly, syy += ly * ly;
    }
    if (xmax < 10.0 * xmin) throw DegenerateFit("x range spans less than one decade");
    const auto n = static_cast<double>(samples.size());
    const double cxx = sxx - sx * sx / n, cxy = sxy - sx * sy / n, cyy = syy - sy * sy / n;
    const double slope = cxy / cxx;
    PowerLawFit fit;
    fit.b = -slope;
    fit.A = std::exp((sy - slope * sx) / n);
    fit.r2 = cyy > 0.0 ? (cxy * cxy) / (cxx * cyy) : 1.0;
    return fit;
}

}  // namespace vortexflow
