#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vortexflow/nodal.hpp"
#include "vortexflow/vec2.hpp"
#include "vortexflow/wavefield.hpp"

namespace vortexflow {

enum class NodeClass { attractor, repellor, center };
enum class Rotation { clockwise, counterclockwise };

std::string to_string(NodeClass c);
std::string to_string(Rotation r);

/// Nodal point together with its companion X-point, in the frame moving with
/// the node (frame velocity = node.vel).
struct ComplexSnapshot {
    NodalState node;
    Vec2 xpoint;  // (u_X, v_X) relative to the node
    double R_X = 0.0;
    std::array<double, 2> eigenvalues{};  // lambda1 > 0 > lambda2
    std::array<Vec2, 2> eigenvectors{};
    double f3 = 0.0;
    double d0 = 0.0;
    NodeClass classification = NodeClass::center;
    Rotation rotation = Rotation::counterclockwise;
    double adiabatic_a = 0.0;  // |V - V0| / |V| against the nearest other node
    double adiabatic_b = 0.0;  // R_X
    double t = 0.0;
    int newton_iterations = 0;

    Vec2 xpoint_abs() const { return node.pos + xpoint; }
};

/// Truncated moving-frame equations: Im(conj(L+Q) grad(L+Q)) up to second
/// degree over G = |L+Q|^2, minus the frame velocity.
Vec2 moving_frame_rhs(const LocalExpansion& exp, double u, double v);

/// Exact field Im(grad psi/psi)(node + (u,v)) - V.
Vec2 moving_frame_rhs_exact(const Wavefield& field, const NodalState& frame, double u, double v);

/// Coefficients g1..g7 of the X-point formula.
std::array<double, 7> xpoint_g(const LocalExpansion& exp);

/// First-order X-point position.  Uses the frame rotated onto V when V is
/// nearly aligned with an axis.  Throws DegenerateGuess.
Vec2 xpoint_guess(const LocalExpansion& exp);

/// Velocity and Jacobian of the rest-frame flow at an absolute position,
/// at the (frozen) time of the snapshot.
using FlowJet = std::function<VelocityJet(Vec2)>;

struct XPointOptions {
    int max_iter = 40;
    double tol = 1e-14;
    double theta_a = 0.1;
    /// X-points further than this from their node are rejected.
    double max_radius = 10.0;
};

/// Newton refinement of the stationary point of flow - node.vel.
/// `others` are the remaining nodes at the same instant; an X-point closer
/// to another node whose velocity differs by theta_a or more (relative to
/// |V|) is rejected with SpuriousXPoint, as is any non-saddle.
ComplexSnapshot xpoint_refine(const FlowJet& flow, const NodalState& node, Vec2 guess,
                              std::span<const NodalState> others = {}, const XPointOptions& opt = {});
ComplexSnapshot xpoint_refine(const Wavefield& field, const NodalState& node, Vec2 guess,
                              std::span<const NodalState> others = {}, const XPointOptions& opt = {});

/// Fills eigenvalues and eigenvectors of the flow Jacobian at the X-point.
ComplexSnapshot xpoint_eigen(const FlowJet& flow, ComplexSnapshot snap);
ComplexSnapshot xpoint_eigen(const Wavefield& field, ComplexSnapshot snap);

/// Closed-form angle average of the cubic radial coefficient.  Throws DegenerateNode.
double f3_generic(const LocalExpansion& exp);

/// EKC closed form with corrected second factor.  Throws InfiniteF3.
double f3_ekc(double t, double a, double b, double c);

struct Classification {
    NodeClass kind;
    Rotation rotation;
};

/// Throws DegenerateNode when d0 == 0.
Classification classify_node(double f3, double d0, Vec2 V);

/// Full pipeline for one node: expansion, guess, refinement, eigenstructure,
/// f3 and classification.  `previous` (relative X-point offset from an
/// earlier snapshot of the same branch) replaces the first-order guess when
/// given.
ComplexSnapshot analyze_complex(const Wavefield& field, const NodalState& node,
                                std::span<const NodalState> others = {},
                                std::optional<Vec2> previous = std::nullopt, const XPointOptions& opt = {});

struct Adiabaticity {
    double ratio_a = 0.0;
    double R_X = 0.0;
    bool pass_a = false;
    bool pass_b = false;
};

/// Condition (a): |V - V0| / |V| < theta_a, with V the frame velocity of the
/// snapshot.  Condition (b): R_X < 1.  A rest frame fails (a).
Adiabaticity adiabaticity(const ComplexSnapshot& snap, Vec2 V0, double theta_a = 0.1);

struct F3Sample {
    double f3;
    double d0;
};

struct HopfZero {
    double t = 0.0;
    /// Direct when the node turns from attractor to repellor.
    bool direct = true;
};

struct HopfScan {
    std::vector<HopfZero> zeros;
    /// Sign changes of f3 that turned out to be poles.
    std::vector<double> poles;
    /// Sign changes of d0 (rotation reversals).
    std::vector<double> rotation_flips;
    double repellor_fraction = 0.0;
};

/// Scans f3(t) on a grid of spacing dt over (t0, t1], bisects sign changes to
/// `tol` and separates zeros from poles.  `sample` returns nullopt at poles.
HopfScan hopf_scan(const std::function<std::optional<F3Sample>(double)>& sample, double t0, double t1,
                   double dt, double tol = 1e-12);

/// hopf_scan on the EKC closed form; d0 takes the sign of sin((1+c)t).
HopfScan hopf_scan_ekc(double a, double b, double c, double t0, double t1, double dt = 1e-3);

struct LimitCycleOptions {
    /// Ray samples of the return map, evenly spaced in (0, max_fraction R_X].
    int ray_samples = 100;
    double max_fraction = 0.95;
    /// Radius (in units of R_X) counted as escape.
    double escape_radius = 3.0;
    /// Time step of the scan after the Hopf zero.
    double dt = 1e-4;
    double rtol = 1e-11;
};

struct LimitCycleReport {
    double t_hopf = 0.0;
    /// First scan time after t_hopf at which the frozen flow has no stable
    /// cycle around the node (the cycle has reached the X-point).
    double t_reach_x = 0.0;
    double lifetime = 0.0;
    /// Cycle radius over R_X at the last scan time that still had one.
    double last_radius = 0.0;
};

/// Radius at the next crossing of the ray from the node away from the
/// X-point, for the frozen moving-frame flow of `snap`, starting at r0 on
/// that ray.  Empty when the orbit escapes or falls into the node.
std::optional<double> return_radius(const Wavefield& field, const ComplexSnapshot& snap, double r0,
                                    const LimitCycleOptions& opt = {});

/// Radius of the outermost stable cycle (sign change of P(r) - r from + to -)
/// among the ray samples, or empty.
std::optional<double> stable_cycle_radius(const Wavefield& field, const ComplexSnapshot& snap,
                                          const LimitCycleOptions& opt = {});

/// Steps t from t_hopf by opt.dt for the EKC family until a stable cycle has
/// appeared and then vanished, or t_max is reached.  Throws NoConvergence
/// when no cycle appears before t_max.
LimitCycleReport limit_cycle_lifetime(double a, double b, double c, double t_hopf, double t_max,
                                      const LimitCycleOptions& opt = {});

}  // namespace vortexflow
