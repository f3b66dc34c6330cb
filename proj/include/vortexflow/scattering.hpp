#pragma once

#include <span>
#include <utility>
#include <vector>

#include "vortexflow/dynamics.hpp"
#include "vortexflow/vec2.hpp"

namespace vortexflow {

/// Toy scattering flow du/dt = -v/r^2 - xdot0, dv/dt = u/r^2.  The theory
/// functions assume xdot0 > 0; a negative speed maps onto |xdot0| by the
/// point reflection (u, v) -> (-u, -v).
struct ToyParams {
    double xdot0 = 3.0;
};

/// Throws SingularField at the origin.
Vec2 toy_rhs(double u, double v, const ToyParams& p);

/// Jacobian of toy_rhs (symmetric: the flow is the gradient of the polar angle
/// plus a uniform drift).
Sym2 toy_jacobian(double u, double v, const ToyParams& p);

/// C = exp(2 xdot0 v) (u^2 + v^2).
double invariant_C(double u, double v, const ToyParams& p);

/// C of the X-point's asymptotic curves, 1 / (e^2 xdot0^2).
double separatrix_C(const ToyParams& p);

struct SeparatrixCrossings {
    double v_s = 0.0;     // stable manifold on the launch line u = 1
    double v_x_up = 0.0;  // upper crossing of the separatrix loop with the v axis
    double a_s = 0.0;     // root of a + ln a + 1 = 0
};

SeparatrixCrossings separatrix_crossings(const ToyParams& p);

/// v on the curve C at |u| = u_line (the launch line).
double v1_of_C(double C, const ToyParams& p, double u_line = 1.0);
/// v on the curve C at u = 0: the lower root (below the X-point) for
/// C < C_x, the upper root above the node for C > C_x.
double v0_of_C(double C, const ToyParams& p);

/// Time to traverse from u = u_limit to u = -u_limit along curve C, by
/// quadrature after v = v0 - s^2.  Throws SeparatrixC near C_x.
double traversal_time(double C, const ToyParams& p, double u_limit = 1.0);

struct ScatterOptions {
    double tol = 1e-12;
    Vec2 xi0{1.0, 0.0};
    double u_launch = 1.0;
    double u_exit = -1.0;
    /// Keep the (t, u, v, xi) history of accepted steps.
    bool keep_profile = false;
    double t_max = 1e4;
};

struct ToySample {
    double t;
    Vec2 p;
    double xi;
};

struct ScatterResult {
    double v1 = 0.0;
    double delta_v1 = 0.0;
    double amplification = 1.0;
    EncounterType type = EncounterType::unclassified;  // by side of v_s
    EncounterType path_type = EncounterType::unclassified;  // by winding
    double winding = 0.0;
    double t_scatter = 0.0;
    std::vector<ToySample> profile;
};

/// Launches at (u_launch, v1) with the tangent flow and stops at u = u_exit.
/// Throws SeparatrixLaunch within 1e-12 of v_s and NoConvergence when the
/// exit line is not reached by t_max.
ScatterResult scatter_amplification(double v1, const ToyParams& p, const ScatterOptions& opt = {});

/// 1 + 2 xdot0^2 |dT/dC| C with dT/dC by central differences.
double amplification_estimate(double C, const ToyParams& p);

struct PowerLawFit {
    double A = 0.0;
    double b = 0.0;
    double r2 = 0.0;
};

/// Least squares of ln y = ln A - b ln x.  Throws DegenerateFit for fewer
/// than five samples, non-positive values or an x range under one decade.
PowerLawFit fit_power_law(std::span<const std::pair<double, double>> samples);

}  // namespace vortexflow
