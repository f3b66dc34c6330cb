#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vortexflow/vec2.hpp"
#include "vortexflow/wavefield.hpp"

namespace vortexflow {

enum class Provenance { analytic_ekc, analytic_eps20, analytic_20, analytic_30, newton };

std::string to_string(Provenance p);

struct NodalState {
    Vec2 pos;
    Vec2 vel;
    double t = 0.0;
    int branch_id = -1;
    Provenance provenance = Provenance::newton;
};

/// Denominators below this magnitude are treated as vanishing.
inline constexpr double kTolDenominator = 1e-12;

/// Single node of Psi00 + a Psi10 + b Psi11.  Throws NodeAtInfinity when
/// sin(ct) or sin((1+c)t) vanishes.
NodalState nodal_ekc(double t, double a, double b, double c);

/// Nodes of Psi00 + a Psi10 + b Psi11 + eps Psi20 from the exact quadratic in x.
/// Branch 0 is the root that tends to the EKC node as eps -> 0; branch 1 is
/// the far root, present only while eps sin((c-1)t) is not negligible.
/// Throws NoRealRoot on a negative discriminant.
std::vector<NodalState> nodal_eps20(double t, double a, double b, double eps, double c);

/// Symmetric node pair of Psi00 + a Psi20 + b Psi11, or an empty list.
std::vector<NodalState> nodal_case20(double t, double a, double b, double c);

/// One or three nodes of Psi00 + a Psi30 + b Psi11.  Throws DegenerateRoot at
/// a double root of the cubic.
std::vector<NodalState> nodal_case30(double t, double a, double b, double c);

/// Real roots of x^3 - 3x + p = 0, ascending, double roots repeated.
std::vector<double> depressed_cubic_roots(double p);

/// Node positions only, same conventions and errors as the solvers above.
std::vector<Vec2> preset_node_positions(const Preset& preset, double t);

/// Nodes of a preset family at time t, labelled by root order.
std::vector<NodalState> preset_nodes(const Preset& preset, double t);

struct RefineOptions {
    int max_iter = 50;
    double tol_residual = 1e-12;
    /// Iterates further than this from the seed count as a failed basin.
    double max_travel = 2.0;
};

/// Newton on (Re P, Im P) = 0; the velocity comes from the implicit function
/// theorem.  Throws NoConvergence or DegenerateJacobian.
NodalState refine_node(const Wavefield& field, Vec2 guess, double t, const RefineOptions& opt = {});
NodalState refine_node(const WaveSpec& spec, Vec2 guess, double t, const RefineOptions& opt = {});

/// Iterations used by the most recent refine_node call on this thread.
int last_refine_iterations();

/// Central difference of the node position tracked by Newton to t +- h.
Vec2 nodal_velocity_fd(const WaveSpec& spec, const NodalState& node, double t, double h);

/// Newton-refined nodes found from local minima of |P| on a grid.
std::vector<NodalState> scan_nodes(const Wavefield& field, double t, double half_width = 6.0,
                                   double spacing = 0.05);

enum class NodalEventKind { pair_creation, pair_annihilation, escape_to_infinity, entry_from_infinity };

std::string to_string(NodalEventKind k);

struct NodalEvent {
    NodalEventKind kind = NodalEventKind::pair_creation;
    double t_bif = 0.0;
    /// Empty for events at infinity.
    std::optional<Vec2> location;
};

struct NodalLine {
    int branch_id = -1;
    std::vector<NodalState> points;
};

struct NodalTrack {
    std::vector<NodalLine> lines;
    std::vector<NodalEvent> events;
};

struct TrackOptions {
    double infinity_cutoff = 50.0;
    double singular_halfwidth = 1e-6;
    /// Newly appearing nodes closer than this form a created pair.
    double pair_distance = 0.5;
    /// Bisection tolerance on event times.
    double event_tol = 1e-9;
};

/// Node finder for a time t; may throw NodeAtInfinity at singular instants.
using NodeSolver = std::function<std::vector<NodalState>(double)>;

NodeSolver preset_solver(const Preset& preset);
/// Continuation plus grid scan for arbitrary specs.
NodeSolver generic_solver(const WaveSpec& spec, double half_width = 6.0);

NodalTrack track_nodal_lines(const NodeSolver& solver, double t0, double t1, double dt,
                             const TrackOptions& opt = {});

}  // namespace vortexflow
