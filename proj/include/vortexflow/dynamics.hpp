#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vortexflow/complex_analysis.hpp"
#include "vortexflow/vec2.hpp"
#include "vortexflow/wavefield.hpp"

namespace vortexflow {

/// Node positions at time t for the step-size cap.  May throw; the cap then
/// falls back to the local estimate |P|/|grad P|.
using NodeLocator = std::function<std::vector<Vec2>(double)>;

struct Flow {
    Wavefield field;
    NodeLocator nodes;
};

Flow make_flow(const Preset& preset);
/// Without analytic nodes the cap uses |P|/|grad P| as the node distance.
Flow make_flow(const WaveSpec& spec);

enum class EncounterType { type_I, type_II, unclassified };

std::string to_string(EncounterType t);

struct EncounterRecord {
    double t_a = 0.0;
    double t_b = 0.0;
    double d = 0.0;
    double t_min = 0.0;
    double R_X = 0.0;
    int branch_id = -1;
    EncounterType type = EncounterType::unclassified;
    double xi_ratio = 1.0;  // xi(t_b) / xi(t_a); 1 for position-only runs
    double winding = 0.0;   // net winding about the node, radians
};

enum class TrajectoryStatus { ok, node_collision, escaped, step_failure };

std::string to_string(TrajectoryStatus s);

struct TrajectoryRecord {
    Vec2 initial;
    double xi0 = 1.0;
    bool variational = false;

    std::vector<double> t;
    std::vector<Vec2> pos;
    /// ln(xi(t) / xi(0)), free of renormalisation.
    std::vector<double> log_xi;
    std::vector<EncounterRecord> encounters;

    /// Last state reached, kept even when samples are not stored.
    double t_final = 0.0;
    Vec2 pos_final;
    double log_xi_final = 0.0;

    long steps = 0;
    long rejected = 0;
    long renormalisations = 0;
    double min_abs_psi = std::numeric_limits<double>::infinity();
    TrajectoryStatus status = TrajectoryStatus::ok;
    std::string message;

    double xi(std::size_t i) const;
    double chi(std::size_t i) const;
    double chi_final() const;
};

struct TraceOptions {
    double tol = 1e-10;
    double kappa = 0.1;
    double tol_singular = kTolSingular;
    double sample_dt = 0.01;
    bool store_samples = true;
    Vec2 xi0{1.0, 0.0};
    double renorm = 1e6;
    double escape_radius = 1e3;
    long max_steps = 200'000'000;
};

/// One nodal point - X-point complex per node slot, single precision.
struct ComplexSlot {
    float node_x = 0, node_y = 0;
    float x_x = 0, x_y = 0;  // absolute X-point position
    float r_x = -1;          // <= 0 when no X-point was accepted
};

/// Time-indexed complex table on the grid t = k dt, k = 0..n-1.  Slot i holds
/// the i-th root of preset_node_positions; absent nodes have a NaN node_x.
class ComplexTrack {
public:
    ComplexTrack() = default;
    ComplexTrack(double dt, std::size_t samples, int slots);

    /// Analyses every node of the preset on [0, t_end].  Failed analyses leave
    /// the slot without an X-point.
    static ComplexTrack build(const Preset& preset, double t_end, double dt = 0.01, int workers = 1,
                              const XPointOptions& opt = {});

    double dt() const { return dt_; }
    std::size_t size() const { return samples_; }
    int slots() const { return slots_; }
    /// Nearest grid sample to t, or nullopt outside the table.
    std::optional<std::size_t> index(double t) const;
    std::span<const ComplexSlot> at(std::size_t k) const {
        return {data_.data() + k * static_cast<std::size_t>(slots_), static_cast<std::size_t>(slots_)};
    }
    std::span<ComplexSlot> at(std::size_t k) {
        return {data_.data() + k * static_cast<std::size_t>(slots_), static_cast<std::size_t>(slots_)};
    }

private:
    double dt_ = 0.01;
    std::size_t samples_ = 0;
    int slots_ = 0;
    std::vector<ComplexSlot> data_;
};

struct EncounterOptions {
    double d_max = 0.2;
    double window = 0.1;
    /// Winding tolerance delta of the type I rule.
    double delta = 0.5;
    /// Path kept on either side of the window for classification.
    double margin = 0.1;
    /// X-points further than this from their node are not part of a complex.
    double max_rx = 1.0;
};

/// Type I iff the loop part of the winding (net winding minus the chord
/// angle between first and last point) reaches 2 pi - delta; type II iff the
/// net winding stays below pi and the closest approach lies beyond the
/// X-point as seen from the node.  Positions are relative to the node.
EncounterType classify_path(std::span<const Vec2> rel_path, Vec2 closest_rel, Vec2 xpoint_rel,
                            double delta = 0.5, double* net_winding = nullptr);

/// Streaming window detector.  motion() feeds the fine path used for the
/// winding, sample() feeds grid samples on the track's time grid.
class EncounterDetector {
public:
    EncounterDetector(const ComplexTrack& track, const EncounterOptions& opt = {});

    void motion(double t, Vec2 p, std::span<const Vec2> nodes);
    void sample(double t, Vec2 p, double log_xi);
    std::vector<EncounterRecord> finish();

private:
    struct PathPoint {
        double t;
        Vec2 p;
        std::array<Vec2, 3> nodes;
        int n;
    };
    struct Pending {
        EncounterRecord rec;
        int slot = -1;
        Vec2 closest_rel;
        Vec2 xpoint_rel;
        int nodes_at_min = 0;
    };

    void close_window(double log_xi_end);
    void classify(Pending& p);
    void flush(double t_now, bool all);

    const ComplexTrack* track_;
    EncounterOptions opt_;
    long window_ = std::numeric_limits<long>::min();
    bool have_min_ = false;
    Pending cur_;
    double log_xi_start_ = 0.0;
    double log_xi_last_ = 0.0;
    std::deque<PathPoint> path_;
    std::vector<Pending> pending_;
    std::vector<EncounterRecord> done_;
};

/// Position-only trajectory.  Encounters are detected on the fly when a
/// track is given.
TrajectoryRecord integrate(const Flow& flow, Vec2 x0, double t_end, const TraceOptions& opt = {},
                           const ComplexTrack* track = nullptr, const EncounterOptions& enc = {});

/// Trajectory plus one deviation vector of the tangent flow.
TrajectoryRecord integrate_variational(const Flow& flow, Vec2 x0, double t_end, const TraceOptions& opt = {},
                                       const ComplexTrack* track = nullptr,
                                       const EncounterOptions& enc = {});

/// (1/t) ln(xi(t)/xi(0)), linear in ln xi between samples.
double ftle(const TrajectoryRecord& record, double t);

/// Encounters from stored samples; the winding then has only the sample
/// resolution.
std::vector<EncounterRecord> detect_encounters(const TrajectoryRecord& record, const ComplexTrack& track,
                                               const EncounterOptions& opt = {});

/// Records with R_X <= r_max and d <= R_X / 2.
std::size_t corrected_encounters(std::span<const EncounterRecord> encounters, double r_max = 0.5);

/// Reclassifies one encounter from stored samples.
EncounterType classify_encounter(const TrajectoryRecord& record, const EncounterRecord& encounter,
                                 const ComplexTrack& track, const EncounterOptions& opt = {});

}  // namespace vortexflow
