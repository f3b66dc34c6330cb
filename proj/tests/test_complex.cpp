#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"
#include "vortexflow/complex_analysis.hpp"
#include "vortexflow/errors.hpp"
#include "vortexflow/nodal.hpp"
#include "vortexflow/wavefield.hpp"

using namespace vortexflow;
using testutil::kC;
using oracles::f3_quadrature;
using oracles::random_expansion;

namespace {

constexpr double kPi = std::numbers::pi;

const Wavefield& ekc_field() {
    static const Wavefield f(Preset{Family::ekc, 1, 1, 0, kC}.spec());
    return f;
}

bool near_singular(double t) {
    return std::abs(std::sin((1 + kC) * t)) < 0.05 || std::abs(std::sin(kC * t)) < 0.05;
}

}  // namespace

TEST_CASE("property: f3 closed form equals the angle quadrature") {
    testutil::Gen gen(99);
    int n = 0;
    while (n < 1000) {
        const LocalExpansion e = random_expansion(gen);
        if (std::abs(e.d0()) < 0.2) continue;
        const double q = f3_quadrature(e);
        const double f = f3_generic(e);
        CHECK(std::abs(q - f) < 1e-8 * std::max(1.0, std::abs(q)));
        ++n;
    }
    // Rest frame: exactly zero, and the quadrature agrees.
    LocalExpansion e = random_expansion(gen);
    e.V = {0, 0};
    CHECK(f3_generic(e) == 0.0);
    CHECK(std::abs(f3_quadrature(e)) < 1e-12);

    e.a10 = e.a01 = 1;
    e.b10 = e.b01 = 1;
    CHECK_THROWS_AS(f3_generic(e), DegenerateNode);
}

TEST_CASE("f3 EKC closed form matches the generic expression") {
    testutil::Gen gen(4);
    int n = 0;
    while (n < 300) {
        const double a = gen.uniform(0.6, 1.5), b = gen.uniform(0.6, 1.5), t = gen.uniform(0.05, 10);
        if (near_singular(t)) continue;
        const Wavefield f(Preset{Family::ekc, a, b, 0, kC}.spec());
        const NodalState node = nodal_ekc(t, a, b, kC);
        const LocalExpansion e = f.expansion(node.pos, t, node.vel);
        const double g = f3_generic(e);
        const double k = f3_ekc(t, a, b, kC);
        CHECK(std::abs(g - k) < 1e-8 * std::max(1.0, std::abs(g)));
        CHECK(std::abs(f3_quadrature(e) - k) < 1e-8 * std::max(1.0, std::abs(k)));
        ++n;
    }
    CHECK_THROWS_AS(f3_ekc(kPi / (1 + kC), 1, 1, kC), InfiniteF3);
    CHECK_THROWS_AS(f3_ekc(kPi / kC, 1, 1, kC), InfiniteF3);
}

TEST_CASE("EKC classification follows d0 = sin((1+c)t)") {
    // d0 has the sign of sin((1+c)t); with f3 < 0 a counterclockwise spiral
    // winds into the node, so the node repels iff f3 and sin((1+c)t) share a sign.
    for (double t = 0.013; t < 10; t += 0.0371) {
        if (near_singular(t)) continue;
        const NodalState node = nodal_ekc(t, 1, 1, kC);
        const LocalExpansion e = ekc_field().expansion(node.pos, t, node.vel);
        const double f3 = f3_generic(e);
        const double s1 = std::sin((1 + kC) * t);
        CHECK((e.d0() > 0) == (s1 > 0));
        const Classification c = classify_node(f3, e.d0(), node.vel);
        CHECK((c.kind == NodeClass::repellor) == (f3 * s1 > 0));
        CHECK((c.rotation == Rotation::counterclockwise) == (s1 > 0));
    }
}

TEST_CASE("moving-frame equations") {
    // EKC: P is a quadratic polynomial, so the truncated equations are exact.
    const double t = 1.25;
    const NodalState node = nodal_ekc(t, 1, 1, kC);
    const LocalExpansion e = ekc_field().expansion(node.pos, t, node.vel);
    for (double phi = 0.1; phi < 2 * kPi; phi += 0.7) {
        const double u = 0.05 * std::cos(phi), v = 0.05 * std::sin(phi);
        const Vec2 exact = moving_frame_rhs_exact(ekc_field(), node, u, v);
        CHECK(norm(exact - moving_frame_rhs(e, u, v)) < 1e-9 * norm(exact + node.vel));
    }
    // case-30 has cubic terms: relative error of the truncation is O(R).
    const Preset p30{Family::case30, 1.23, 1.15, 0, kC};
    const Wavefield f30(p30.spec());
    const NodalState n30 = preset_nodes(p30, 1.0).front();
    const LocalExpansion e30 = f30.expansion(n30.pos, 1.0, n30.vel);
    double prev = 1;
    for (double R : {0.02, 0.01, 0.005, 0.0025}) {
        double worst = 0;
        for (double phi = 0.1; phi < 2 * kPi; phi += 0.7) {
            const double u = R * std::cos(phi), v = R * std::sin(phi);
            const Vec2 exact = moving_frame_rhs_exact(f30, n30, u, v) + n30.vel;
            const Vec2 trunc = moving_frame_rhs(e30, u, v) + n30.vel;
            worst = std::max(worst, norm(exact - trunc) / norm(exact));
        }
        CHECK(worst < 0.6 * prev);
        prev = worst;
    }
    CHECK_THROWS_AS(moving_frame_rhs(e, 0, 0), SingularField);

    // Rotation sense near the node follows d0.
    testutil::Gen gen(8);
    for (int k = 0; k < 200; ++k) {
        const LocalExpansion r = random_expansion(gen);
        if (std::abs(r.d0()) < 0.1) continue;
        const double R = 1e-4;
        for (double phi = 0; phi < 2 * kPi; phi += 0.5) {
            const double u = R * std::cos(phi), v = R * std::sin(phi);
            const Vec2 f = moving_frame_rhs(r, u, v);
            CHECK((u * f.y - v * f.x > 0) == (r.d0() > 0));
        }
    }
}

TEST_CASE("property: rest-frame current is divergence-free") {
    testutil::Gen gen(13);
    for (int k = 0; k < 200; ++k) {
        LocalExpansion e = random_expansion(gen);
        e.V = {0, 0};
        const auto j = [&](double u, double v) {
            const cplx L = e.z10() * u + e.z01() * v;
            const cplx Q = 0.5 * e.z20() * u * u + e.z11() * u * v + 0.5 * e.z02() * v * v;
            return std::norm(L + Q) * moving_frame_rhs(e, u, v);
        };
        const double u = gen.uniform(-0.2, 0.2), v = gen.uniform(-0.2, 0.2);
        const double h = 1e-5;
        const double div = (j(u + h, v).x - j(u - h, v).x + j(u, v + h).y - j(u, v - h).y) / (2 * h);
        CHECK(std::abs(div) < 1e-8);
    }
}

TEST_CASE("X-point of the toy flow") {
    // psi = u + i v moving with (xdot0, 0): the flow of the scattering toy model.
    LocalExpansion e;
    e.a10 = 1;
    e.b01 = 1;
    for (double xd : {3.0, 10.0}) {
        e.V = {xd, 0};
        const Vec2 g = xpoint_guess(e);
        CHECK(std::abs(g.x) < 1e-15);
        CHECK(g.y == doctest::Approx(-1 / xd).epsilon(1e-14));

        const FlowJet toy = [](Vec2 p) {
            const double r2 = p.x * p.x + p.y * p.y, r4 = r2 * r2;
            VelocityJet j;
            j.v = {-p.y / r2, p.x / r2};
            j.jac = {2 * p.x * p.y / r4, (p.y * p.y - p.x * p.x) / r4, -2 * p.x * p.y / r4};
            return j;
        };
        NodalState node;
        node.vel = {xd, 0};
        const ComplexSnapshot s = xpoint_refine(toy, node, {0.05, -0.8 / xd});
        CHECK(std::abs(s.xpoint.x) < 1e-13);
        CHECK(s.xpoint.y == doctest::Approx(-1 / xd).epsilon(1e-13));
        CHECK(s.eigenvalues[0] == doctest::Approx(xd * xd).epsilon(1e-10));
        CHECK(s.eigenvalues[1] == doctest::Approx(-xd * xd).epsilon(1e-10));
    }
    // Rotated velocity: the guess rotates with the frame.
    e.V = {0, 3};
    const Vec2 g = xpoint_guess(e);
    CHECK(g.x == doctest::Approx(1.0 / 3).epsilon(1e-14));
    CHECK(std::abs(g.y) < 1e-15);
    e.V = {0, 0};
    CHECK_THROWS_AS(xpoint_guess(e), DegenerateGuess);
}

TEST_CASE("X-point guess scaling") {
    testutil::Gen gen(21);
    for (int k = 0; k < 50; ++k) {
        LocalExpansion e = random_expansion(gen);
        if (std::abs(e.d0()) < 0.2) continue;
        const Vec2 dir = (1 / norm(e.V)) * e.V;
        e.V = 200.0 * dir;
        const double r1 = norm(xpoint_guess(e));
        e.V = 400.0 * dir;
        const double r2 = norm(xpoint_guess(e));
        CHECK(r2 / r1 == doctest::Approx(0.5).epsilon(0.02));
    }
}

TEST_CASE("EKC complexes") {
    const Wavefield& f = ekc_field();
    const ComplexSnapshot s125 = analyze_complex(f, nodal_ekc(1.25, 1, 1, kC));
    CHECK(s125.classification == NodeClass::attractor);
    CHECK(s125.rotation == Rotation::counterclockwise);
    CHECK(s125.R_X > 0);
    CHECK(s125.eigenvalues[0] * s125.eigenvalues[1] < 0);
    // Stationarity of the refined X-point.
    const Vec2 X = s125.xpoint_abs();
    CHECK(norm(f.velocity(X.x, X.y, 1.25) - s125.node.vel) < 1e-8 * std::max(1.0, norm(s125.node.vel)));
    for (const Vec2& v : s125.eigenvectors) CHECK(norm(v) == doctest::Approx(1).epsilon(1e-12));

    const ComplexSnapshot s135 = analyze_complex(f, nodal_ekc(1.35, 1, 1, kC));
    CHECK(s135.classification == NodeClass::repellor);

    // Rest frame: center.
    CHECK(classify_node(0.0, 1.0, {0, 0}).kind == NodeClass::center);
    CHECK(classify_node(0.0, -1.0, {0, 0}).rotation == Rotation::clockwise);
    CHECK_THROWS_AS(classify_node(1.0, 0.0, {1, 0}), DegenerateNode);
}

TEST_CASE("property: saddle sign and Newton effort over EKC snapshots") {
    testutil::Gen gen(77);
    const Wavefield& f = ekc_field();
    int accepted = 0, small = 0, fast = 0;
    while (accepted < 1000) {
        const double t = gen.uniform(0.02, 10);
        if (near_singular(t)) continue;
        const NodalState node = nodal_ekc(t, 1, 1, kC);
        ComplexSnapshot s;
        try {
            s = analyze_complex(f, node);
        } catch (const Error&) {
            continue;
        }
        ++accepted;
        CHECK(s.eigenvalues[0] * s.eigenvalues[1] < 0);
        CHECK(s.eigenvalues[0] > 0);
        if (s.R_X < 1) {
            ++small;
            if (s.newton_iterations <= 8) ++fast;
        }
    }
    CHECK(small > 100);
    CHECK(static_cast<double>(fast) / small >= 0.99);
}

TEST_CASE("R_X |V| stays in its regression interval") {
    // Grid t = 0.001 k over (0, 10), skipping |sin((1+c)t)| or |sin(ct)| < 0.2.
    // Observed 0.00709 .. 8.897; the product is far from constant because the
    // coefficients themselves vary along the nodal line.
    double lo = 1e300, hi = 0;
    for (int k = 1; k < 10000; ++k) {
        const double t = 1e-3 * k;
        if (std::abs(std::sin((1 + kC) * t)) < 0.2 || std::abs(std::sin(kC * t)) < 0.2) continue;
        const NodalState node = nodal_ekc(t, 1, 1, kC);
        try {
            const ComplexSnapshot s = analyze_complex(ekc_field(), node);
            lo = std::min(lo, s.R_X * norm(node.vel));
            hi = std::max(hi, s.R_X * norm(node.vel));
        } catch (const Error&) {
        }
    }
    CHECK(lo > 0.005);
    CHECK(hi < 10.0);
}

TEST_CASE("case-20 cross-node X-point is rejected") {
    const Preset p{Family::case20, 1.23, 1.15, 0, kC};
    const Wavefield f(p.spec());
    const double t = 1.0;
    const auto nodes = nodal_case20(t, p.a, p.b, p.c);
    REQUIRE(nodes.size() == 2);
    const NodalState& n1 = nodes[0];
    const NodalState& n2 = nodes[1];
    // X-point that node 2 produces in the frame of node 1.
    const LocalExpansion e2 = f.expansion(n2.pos, t, n1.vel);
    const Vec2 seed = n2.pos + xpoint_guess(e2) - n1.pos;
    XPointOptions opt;
    opt.max_radius = 50;
    const ComplexSnapshot s = xpoint_refine(f, n1, seed, {}, opt);
    CHECK(norm(s.xpoint_abs() - n2.pos) < norm(s.xpoint_abs() - n1.pos));
    const Adiabaticity ad = adiabaticity(s, n2.vel);
    CHECK(ad.ratio_a == doctest::Approx(2).epsilon(1e-12));
    CHECK_FALSE(ad.pass_a);
    const NodalState others[] = {n1, n2};
    CHECK_THROWS_AS(xpoint_refine(f, n1, seed, others, opt), SpuriousXPoint);

    // Its own X-point is accepted.
    const ComplexSnapshot own = analyze_complex(f, n1, others);
    CHECK(own.adiabatic_a < 0.1);
    CHECK(adiabaticity(own, n1.vel).ratio_a == 0.0);
    CHECK(adiabaticity(own, n1.vel).pass_a);
}

TEST_CASE("adiabaticity conventions") {
    ComplexSnapshot s;
    s.R_X = 0.4;
    s.node.vel = {0, 0};
    const Adiabaticity rest = adiabaticity(s, {0, 0});
    CHECK_FALSE(rest.pass_a);
    CHECK(rest.pass_b);
    s.node.vel = {2, 0};
    s.R_X = 1.5;
    const Adiabaticity m = adiabaticity(s, {2.1, 0});
    CHECK(m.ratio_a == doctest::Approx(0.05));
    CHECK(m.pass_a);
    CHECK_FALSE(m.pass_b);
}

TEST_CASE("Hopf scan structure") {
    const HopfScan scan = hopf_scan_ekc(1, 1, kC, 0, 10, 1e-3);
    std::vector<double> expected_poles;
    for (int k = 1; k <= 5; ++k) expected_poles.push_back(k * kPi / (1 + kC));
    expected_poles.push_back(kPi / kC);
    expected_poles.push_back(2 * kPi / kC);
    std::sort(expected_poles.begin(), expected_poles.end());
    // Every reported pole is one of the singular instants, and every
    // sign change of f3 between consecutive poles is a zero.
    for (double p : scan.poles) {
        double d = 1e300;
        for (double q : expected_poles) d = std::min(d, std::abs(p - q));
        CHECK(d < 1e-6);
    }
    std::vector<double> bounds{0};
    bounds.insert(bounds.end(), expected_poles.begin(), expected_poles.end());
    bounds.push_back(10);
    int intervals_with_zeros = 0;
    for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
        int z = 0;
        for (const HopfZero& h : scan.zeros) z += h.t > bounds[i] && h.t < bounds[i + 1];
        CHECK(z <= 3);
        if (z > 0) ++intervals_with_zeros;
    }
    CHECK(intervals_with_zeros >= 4);
    for (const HopfZero& h : scan.zeros) CHECK(std::abs(f3_ekc(h.t, 1, 1, kC)) < 1e-6);
    CHECK(scan.repellor_fraction > 0.3);
    CHECK(scan.repellor_fraction < 0.7);
    // Rotation flips are exactly the zeros of sin((1+c)t).
    for (double r : scan.rotation_flips) CHECK(std::abs(std::sin((1 + kC) * r)) < 1e-6);
}

TEST_CASE("limit cycle after the first Hopf zero") {
    const Wavefield field(Preset{Family::ekc, 1, 1, 0, kC}.spec());
    const HopfScan scan = hopf_scan_ekc(1, 1, kC, 1.2, 1.4, 1e-4);
    REQUIRE(!scan.zeros.empty());
    const double t_hopf = scan.zeros.front().t;

    // Between the zero and the collision the cycle encloses a repelling node.
    const ComplexSnapshot mid = analyze_complex(field, nodal_ekc(1.29, 1, 1, kC));
    const auto r_cycle = stable_cycle_radius(field, mid);
    REQUIRE(r_cycle.has_value());
    CHECK(*r_cycle > 0.0);
    CHECK(*r_cycle < mid.R_X);
    const auto inner = return_radius(field, mid, 0.25 * *r_cycle);
    REQUIRE(inner.has_value());
    CHECK(*inner > 0.25 * *r_cycle);

    // Well past the collision no stable cycle is left.
    const ComplexSnapshot late = analyze_complex(field, nodal_ekc(1.33, 1, 1, kC));
    CHECK_FALSE(stable_cycle_radius(field, late).has_value());

    const LimitCycleReport rep = limit_cycle_lifetime(1, 1, kC, t_hopf, 1.35);
    CHECK(rep.t_reach_x > t_hopf);
    CHECK(rep.t_reach_x < t_hopf + 0.05);
    CHECK(rep.last_radius > 0.0);
    CHECK(rep.last_radius < 1.0);
    CHECK_THROWS_AS(limit_cycle_lifetime(1, 1, kC, 1.3, 1.2), ConfigError);
}
