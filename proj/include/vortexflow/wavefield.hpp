#pragma once

#include <complex>
#include <string>
#include <vector>

#include "vortexflow/vec2.hpp"

namespace vortexflow {

using cplx = std::complex<double>;

/// Tolerance on the envelope-reduced amplitude |P| below which the velocity
/// field is treated as singular.  P is psi with the Gaussian envelope
/// exp(-(x^2 + c y^2)/2) divided out, so it stays O(1) far from the origin
/// where psi itself underflows.
inline constexpr double kTolSingular = 1e-12;
/// |P| at or below this value marks a point as nodal.
inline constexpr double kTolNode = 1e-10;

/// One oscillator eigenstate Psi_{n1 n2} with its complex weight.
struct Term {
    int n1 = 0;
    int n2 = 0;
    cplx coeff{1.0, 0.0};
};

/// Superposition of 2D anisotropic oscillator eigenstates (hbar = 1, omega_x = 1, omega_y = c).
struct WaveSpec {
    std::vector<Term> terms;
    double c = 0.70710678118654752440;

    /// Throws ConfigError on an empty term list, repeated (n1, n2) pairs,
    /// negative quantum numbers or non-positive c.
    void validate() const;

    /// Moving nodal lines need at least two distinct n1 and two distinct n2.
    bool has_moving_nodes() const;
};

enum class Family { ekc, eps20, case20, case30 };

std::string to_string(Family f);
/// Accepts "ekc", "case-eps20", "case-20", "case-30".
Family family_from_string(const std::string& name);

/// Named model families.  The EKC model is Psi00 + a Psi10 + b Psi11 in
/// eigenstate normalisation; the other three swap or add one term.
struct Preset {
    Family family = Family::ekc;
    double a = 1.0;
    double b = 1.0;
    double eps = 0.0;
    double c = 0.70710678118654752440;

    WaveSpec spec() const;
};

/// Probabilists' Hermite polynomial He_n.
double hermite_he(int n, double x);

/// Energy (1/2 + n1) + (1/2 + n2) c.
double eigen_energy(int n1, int n2, double c);

cplx eval_eigenstate(int n1, int n2, double x, double y, double t, double c);
cplx eval_psi(const WaveSpec& spec, double x, double y, double t);

/// Derivatives of the envelope-reduced field P up to second order in space
/// and first order in time.
struct PolyJet {
    cplx p, px, py, pxx, pxy, pyy, pt;
};

/// Derivatives of psi itself.
struct PsiJet {
    cplx psi, px, py, pxx, pxy, pyy, pt;
};

/// Bohmian velocity and its spatial Jacobian (symmetric, since v is a gradient).
struct VelocityJet {
    Vec2 v;
    Sym2 jac;
    double abs_p = 0.0;
};

/// Taylor coefficients of psi about `center`: a10 + i b10 = d_u psi,
/// a20 + i b20 = d_uu psi, a11 + i b11 = d_uv psi, and so on, so that
/// psi ~ psi0 + L + (z20 u^2 + 2 z11 uv + z02 v^2)/2.
///
/// At a nodal center the coefficients are multiplied by a real positive
/// factor (1 + alpha u + beta v) chosen so that a20 + a02 = b20 + b02 = 0.
/// Such a factor leaves the Bohmian flow unchanged to the order kept; the
/// raw Taylor coefficients of a moving node satisfy lap psi = 2i V.grad psi
/// instead.
struct LocalExpansion {
    double a10 = 0, a01 = 0, a20 = 0, a02 = 0, a11 = 0;
    double b10 = 0, b01 = 0, b20 = 0, b02 = 0, b11 = 0;
    cplx psi0{0.0, 0.0};
    Vec2 center;
    Vec2 V;
    double t = 0.0;
    bool nodal_gauge = false;

    double d0() const { return a10 * b01 - a01 * b10; }
    cplx z10() const { return {a10, b10}; }
    cplx z01() const { return {a01, b01}; }
    cplx z20() const { return {a20, b20}; }
    cplx z02() const { return {a02, b02}; }
    cplx z11() const { return {a11, b11}; }
};

/// Evaluation engine for one WaveSpec.  Construction precomputes energies;
/// every method is const and thread safe.
class Wavefield {
public:
    explicit Wavefield(WaveSpec spec);

    const WaveSpec& spec() const { return spec_; }
    double c() const { return spec_.c; }

    PolyJet poly(double x, double y, double t) const;
    /// P only, no derivatives.
    cplx poly_value(double x, double y, double t) const;
    PsiJet psi_jet(double x, double y, double t) const;
    cplx psi(double x, double y, double t) const;

    /// Im(grad psi / psi).  Throws SingularField when |P| < tol_singular.
    Vec2 velocity(double x, double y, double t, double tol_singular = kTolSingular) const;
    VelocityJet velocity_jet(double x, double y, double t, double tol_singular = kTolSingular) const;

    LocalExpansion expansion(Vec2 center, double t, Vec2 V, double tol_node = kTolNode) const;

private:
    struct Prepared {
        int n1, n2;
        cplx coeff;
        double energy;
    };
    WaveSpec spec_;
    std::vector<Prepared> terms_;
    int max_n1_ = 0;
    int max_n2_ = 0;
    double sqrt_c_ = 1.0;
};

Vec2 velocity_field(const WaveSpec& spec, double x, double y, double t,
                    double tol_singular = kTolSingular);

LocalExpansion local_expansion(const WaveSpec& spec, double x0, double y0, double t, Vec2 V,
                               double tol_node = kTolNode);

struct DensityCurrent {
    double rho = 0.0;
    Vec2 j;
};

/// rho = |psi|^2, j = Re psi grad Im psi - Im psi grad Re psi.
DensityCurrent density_and_current(const WaveSpec& spec, double x, double y, double t);

}  // namespace vortexflow
