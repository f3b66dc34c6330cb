#include "vortexflow/wavefield.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <utility>

#include "vortexflow/errors.hpp"

namespace vortexflow {

namespace {

constexpr int kMaxOrder = 16;

// He_0..He_n at x into out[0..n].
void hermite_table(int n, double x, double* out) {
    out[0] = 1.0;
    if (n >= 1) out[1] = x;
    for (int k = 1; k < n; ++k) out[k + 1] = x * out[k] - k * out[k - 1];
}

}  // namespace

SymEigen eigen_sym(const Sym2& m) {
    const double half_tr = 0.5 * (m.xx + m.yy);
    const double half_diff = 0.5 * (m.xx - m.yy);
    const double r = std::hypot(half_diff, m.xy);
    SymEigen e;
    e.values = {half_tr + r, half_tr - r};
    // Eigenvector angle of the larger eigenvalue.
    const double theta = 0.5 * std::atan2(m.xy, half_diff);
    e.vectors[0] = {std::cos(theta), std::sin(theta)};
    e.vectors[1] = {-std::sin(theta), std::cos(theta)};
    return e;
}

void WaveSpec::validate() const {
    if (terms.empty()) throw ConfigError("wavefunction has no terms");
    if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("anisotropy c must be positive");
    std::set<std::pair<int, int>> seen;
    for (const Term& term : terms) {
        if (term.n1 < 0 || term.n2 < 0) throw ConfigError("negative quantum number");
        if (term.n1 > kMaxOrder || term.n2 > kMaxOrder)
            throw ConfigError("quantum number above supported order " + std::to_string(kMaxOrder));
        if (!seen.insert({term.n1, term.n2}).second)
            throw ConfigError("repeated term (" + std::to_string(term.n1) + ", " +
                              std::to_string(term.n2) + ")");
    }
}

bool WaveSpec::has_moving_nodes() const {
    std::set<int> n1s, n2s;
    for (const Term& term : terms) {
        n1s.insert(term.n1);
        n2s.insert(term.n2);
    }
    return n1s.size() > 1 && n2s.size() > 1;
}

std::string to_string(Family f) {
    switch (f) {
        case Family::ekc: return "ekc";
        case Family::eps20: return "case-eps20";
        case Family::case20: return "case-20";
        case Family::case30: return "case-30";
    }
    return "?";
}

Family family_from_string(const std::string& name) {
    if (name == "ekc") return Family::ekc;
    if (name == "case-eps20") return Family::eps20;
    if (name == "case-20") return Family::case20;
    if (name == "case-30") return Family::case30;
    throw ConfigError("unknown preset '" + name + "'");
}

WaveSpec Preset::spec() const {
    WaveSpec s;
    s.c = c;
    s.terms.push_back({0, 0, {1.0, 0.0}});
    switch (family) {
        case Family::ekc:
            s.terms.push_back({1, 0, {a, 0.0}});
            break;
        case Family::eps20:
            s.terms.push_back({1, 0, {a, 0.0}});
            s.terms.push_back({2, 0, {eps, 0.0}});
            break;
        case Family::case20:
            s.terms.push_back({2, 0, {a, 0.0}});
            break;
        case Family::case30:
            s.terms.push_back({3, 0, {a, 0.0}});
            break;
    }
    s.terms.push_back({1, 1, {b, 0.0}});
    return s;
}

double hermite_he(int n, double x) {
    if (n < 0) return 0.0;
    double prev = 1.0, cur = x;
    if (n == 0) return prev;
    for (int k = 1; k < n; ++k) {
        const double next = x * cur - k * prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

double eigen_energy(int n1, int n2, double c) { return (0.5 + n1) + (0.5 + n2) * c; }

cplx eval_eigenstate(int n1, int n2, double x, double y, double t, double c) {
    const double envelope = std::exp(-0.5 * (x * x + c * y * y));
    const double spatial = envelope * hermite_he(n1, x) * hermite_he(n2, std::sqrt(c) * y);
    return std::polar(spatial, -eigen_energy(n1, n2, c) * t);
}

cplx eval_psi(const WaveSpec& spec, double x, double y, double t) {
    return Wavefield(spec).psi(x, y, t);
}

Wavefield::Wavefield(WaveSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    sqrt_c_ = std::sqrt(spec_.c);
    for (const Term& term : spec_.terms) {
        terms_.push_back({term.n1, term.n2, term.coeff, eigen_energy(term.n1, term.n2, spec_.c)});
        max_n1_ = std::max(max_n1_, term.n1);
        max_n2_ = std::max(max_n2_, term.n2);
    }
}

PolyJet Wavefield::poly(double x, double y, double t) const {
    std::array<double, kMaxOrder + 1> hx{}, hs{};
    const double s = sqrt_c_ * y;
    hermite_table(max_n1_, x, hx.data());
    hermite_table(max_n2_, s, hs.data());
    auto he = [](const std::array<double, kMaxOrder + 1>& h, int n) { return n < 0 ? 0.0 : h[n]; };

    PolyJet j{};
    for (const Prepared& term : terms_) {
        const cplx w = term.coeff * std::polar(1.0, -term.energy * t);
        const int n1 = term.n1, n2 = term.n2;
        const double X = hx[n1], Xd = n1 * he(hx, n1 - 1), Xdd = n1 * (n1 - 1) * he(hx, n1 - 2);
        const double Y = hs[n2], Yd = sqrt_c_ * n2 * he(hs, n2 - 1),
                     Ydd = spec_.c * n2 * (n2 - 1) * he(hs, n2 - 2);
        j.p += w * (X * Y);
        j.px += w * (Xd * Y);
        j.py += w * (X * Yd);
        j.pxx += w * (Xdd * Y);
        j.pxy += w * (Xd * Yd);
        j.pyy += w * (X * Ydd);
        j.pt += cplx(0.0, -term.energy) * w * (X * Y);
    }
    return j;
}

cplx Wavefield::poly_value(double x, double y, double t) const {
    std::array<double, kMaxOrder + 1> hx{}, hs{};
    hermite_table(max_n1_, x, hx.data());
    hermite_table(max_n2_, sqrt_c_ * y, hs.data());
    cplx p{0.0, 0.0};
    for (const Prepared& term : terms_)
        p += term.coeff * std::polar(1.0, -term.energy * t) * (hx[term.n1] * hs[term.n2]);
    return p;
}

PsiJet Wavefield::psi_jet(double x, double y, double t) const {
    const PolyJet q = poly(x, y, t);
    const double c = spec_.c;
    const double g = std::exp(-0.5 * (x * x + c * y * y));
    const double gx = -x, gy = -c * y;  // derivatives of log g
    PsiJet j;
    j.psi = g * q.p;
    j.px = g * (q.px + gx * q.p);
    j.py = g * (q.py + gy * q.p);
    j.pxx = g * (q.pxx + 2.0 * gx * q.px + (x * x - 1.0) * q.p);
    j.pyy = g * (q.pyy + 2.0 * gy * q.py + (c * c * y * y - c) * q.p);
    j.pxy = g * (q.pxy + gy * q.px + gx * q.py + gx * gy * q.p);
    j.pt = g * q.pt;
    return j;
}

cplx Wavefield::psi(double x, double y, double t) const {
    return std::exp(-0.5 * (x * x + spec_.c * y * y)) * poly_value(x, y, t);
}

Vec2 Wavefield::velocity(double x, double y, double t, double tol_singular) const {
    const PolyJet q = poly(x, y, t);
    if (std::abs(q.p) < tol_singular)
        throw SingularField("velocity requested at a nodal point");
    return {(q.px / q.p).imag(), (q.py / q.p).imag()};
}

VelocityJet Wavefield::velocity_jet(double x, double y, double t, double tol_singular) const {
    const PolyJet q = poly(x, y, t);
    VelocityJet out;
    out.abs_p = std::abs(q.p);
    if (out.abs_p < tol_singular) throw SingularField("velocity requested at a nodal point");
    const cplx inv = 1.0 / q.p;
    const cplx wx = q.px * inv, wy = q.py * inv;
    out.v = {wx.imag(), wy.imag()};
    out.jac.xx = (q.pxx * inv - wx * wx).imag();
    out.jac.xy = (q.pxy * inv - wx * wy).imag();
    out.jac.yy = (q.pyy * inv - wy * wy).imag();
    return out;
}

LocalExpansion Wavefield::expansion(Vec2 center, double t, Vec2 V, double tol_node) const {
    const PsiJet j = psi_jet(center.x, center.y, t);
    LocalExpansion e;
    e.center = center;
    e.V = V;
    e.t = t;
    e.psi0 = j.psi;
    cplx z10 = j.px, z01 = j.py, z20 = j.pxx, z02 = j.pyy, z11 = j.pxy;

    if (std::abs(poly_value(center.x, center.y, t)) <= tol_node) {
        // Real factor (1 + alpha u + beta v) that makes the quadratic part harmonic.
        const double det = 2.0 * (z10.real() * z01.imag() - z01.real() * z10.imag());
        if (det != 0.0) {
            const double ra = -(z20.real() + z02.real());
            const double rb = -(z20.imag() + z02.imag());
            const double alpha = (ra * z01.imag() - rb * z01.real()) / det;
            const double beta = (rb * z10.real() - ra * z10.imag()) / det;
            z20 += 2.0 * alpha * z10;
            z02 += 2.0 * beta * z01;
            z11 += alpha * z01 + beta * z10;
            e.nodal_gauge = true;
        }
    }
    e.a10 = z10.real(); e.b10 = z10.imag();
    e.a01 = z01.real(); e.b01 = z01.imag();
    e.a20 = z20.real(); e.b20 = z20.imag();
    e.a02 = z02.real(); e.b02 = z02.imag();
    e.a11 = z11.real(); e.b11 = z11.imag();
    return e;
}

Vec2 velocity_field(const WaveSpec& spec, double x, double y, double t, double tol_singular) {
    return Wavefield(spec).velocity(x, y, t, tol_singular);
}

LocalExpansion local_expansion(const WaveSpec& spec, double x0, double y0, double t, Vec2 V,
                               double tol_node) {
    return Wavefield(spec).expansion({x0, y0}, t, V, tol_node);
}

DensityCurrent density_and_current(const WaveSpec& spec, double x, double y, double t) {
    const PsiJet j = Wavefield(spec).psi_jet(x, y, t);
    DensityCurrent out;
    out.rho = std::norm(j.psi);
    out.j = {j.psi.real() * j.px.imag() - j.psi.imag() * j.px.real(),
             j.psi.real() * j.py.imag() - j.psi.imag() * j.py.real()};
    return out;
}

}  // namespace vortexflow
