#include "vortexflow/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <thread>

#include "vortexflow/errors.hpp"
#include "vortexflow/nodal.hpp"
#include "vortexflow/ode.hpp"

namespace vortexflow {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double angle_between(Vec2 a, Vec2 b) { return std::atan2(cross(a, b), dot(a, b)); }

int family_slots(Family f) {
    switch (f) {
        case Family::ekc: return 1;
        case Family::eps20: return 2;
        case Family::case20: return 2;
        case Family::case30: return 3;
    }
    return 1;
}

std::vector<Vec2> locate(const NodeLocator& nodes, double t) {
    if (!nodes) return {};
    try {
        return nodes(t);
    } catch (const Error&) {
        return {};
    }
}

// Squared distance to the nearest node, or the Newton estimate |P|/|grad P|
// when no node list is available.
double node_distance2(const Flow& flow, double t, Vec2 p) {
    if (flow.nodes) {
        try {
            const std::vector<Vec2> nodes = flow.nodes(t);
            double best = std::numeric_limits<double>::infinity();
            for (const Vec2& n : nodes) {
                const Vec2 r = p - n;
                best = std::min(best, dot(r, r));
            }
            return best;
        } catch (const Error&) {
        }
    }
    const PolyJet j = flow.field.poly(p.x, p.y, t);
    const double g2 = std::norm(j.px) + std::norm(j.py);
    if (g2 == 0.0) return std::numeric_limits<double>::infinity();
    return std::norm(j.p) / g2;
}

template <std::size_t N>
TrajectoryRecord trace(const Flow& flow, Vec2 x0, double t_end, const TraceOptions& opt,
                       const ComplexTrack* track, const EncounterOptions& enc) {
    static_assert(N == 2 || N == 4);
    constexpr bool kVar = N == 4;
    if (!(t_end > 0.0)) throw ConfigError("t_end must be positive");
    if (!(opt.sample_dt > 0.0)) throw ConfigError("sample_dt must be positive");
    const double xi0 = norm(opt.xi0);
    if (kVar && !(xi0 > 0.0)) throw ConfigError("deviation vector must be nonzero");

    TrajectoryRecord rec;
    rec.initial = x0;
    rec.variational = kVar;
    rec.xi0 = kVar ? xi0 : 1.0;

    std::optional<EncounterDetector> detector;
    if (track) detector.emplace(*track, enc);

    const Wavefield& field = flow.field;
    const double c = field.c();
    double min_psi = std::numeric_limits<double>::infinity();

    auto rhs = [&](double t, const ode::State<N>& y, ode::State<N>& dy) -> bool {
        VelocityJet j;
        try {
            j = field.velocity_jet(y[0], y[1], t, opt.tol_singular);
        } catch (const SingularField&) {
            return false;
        }
        if (!std::isfinite(j.v.x) || !std::isfinite(j.v.y)) return false;
        min_psi = std::min(min_psi, j.abs_p * std::exp(-0.5 * (y[0] * y[0] + c * y[1] * y[1])));
        dy[0] = j.v.x;
        dy[1] = j.v.y;
        if constexpr (kVar) {
            const Vec2 d = j.jac * Vec2{y[2], y[3]};
            dy[2] = d.x;
            dy[3] = d.y;
        }
        return true;
    };
    auto cap = [&](double t, const ode::State<N>& y) {
        return opt.kappa * node_distance2(flow, t, {y[0], y[1]});
    };

    // The deviation vector is integrated with unit initial length and the
    // stored logarithm is relative to it.
    ode::State<N> y{};
    y[0] = x0.x;
    y[1] = x0.y;
    if constexpr (kVar) {
        y[2] = opt.xi0.x / xi0;
        y[3] = opt.xi0.y / xi0;
    }
    double log_acc = 0.0;
    auto log_of = [&](const ode::State<N>& s) {
        if constexpr (kVar) return log_acc + std::log(std::hypot(s[2], s[3]));
        else return 0.0;
    };

    auto emit = [&](double t, Vec2 p, double lx) {
        if (opt.store_samples) {
            rec.t.push_back(t);
            rec.pos.push_back(p);
            rec.log_xi.push_back(lx);
        }
        if (detector) detector->sample(t, p, lx);
    };
    if (detector) {
        const std::vector<Vec2> n0 = locate(flow.nodes, 0.0);
        detector->motion(0.0, x0, n0);
    }
    emit(0.0, x0, 0.0);
    long next_k = 1;
    double t_last_sample = 0.0;

    bool escaped = false;
    bool renorm_due = false;
    double t = 0.0;
    auto observe = [&](const ode::Step<N>& s) {
        while (true) {
            const double ts = static_cast<double>(next_k) * opt.sample_dt;
            if (ts > s.t1 * (1.0 + 1e-14)) break;
            const ode::State<N> ys = ts >= s.t1 ? s.y1 : ode::hermite(s, ts);
            emit(ts, {ys[0], ys[1]}, log_of(ys));
            t_last_sample = ts;
            ++next_k;
        }
        t = s.t1;
        const Vec2 p{s.y1[0], s.y1[1]};
        if (detector) {
            const std::vector<Vec2> n1 = locate(flow.nodes, s.t1);
            detector->motion(s.t1, p, n1);
        }
        if (norm(p) > opt.escape_radius) {
            escaped = true;
            return false;
        }
        if constexpr (kVar) {
            if (std::hypot(s.y1[2], s.y1[3]) > opt.renorm) {
                renorm_due = true;
                return false;
            }
        }
        return true;
    };

    ode::Options o;
    o.rtol = opt.tol;
    o.atol = opt.tol * 1e-2;
    o.max_steps = opt.max_steps;
    ode::Stats stats;
    while (true) {
        renorm_due = false;
        const ode::Status st = ode::integrate<N>(rhs, t, y, t_end, o, cap, observe, &stats);
        rec.steps += stats.steps;
        rec.rejected += stats.rejected;
        o.max_steps -= stats.steps;
        o.h_init = stats.h_next;
        if (st == ode::Status::completed) break;
        if (st == ode::Status::stopped && renorm_due) {
            if constexpr (kVar) {
                const double len = std::hypot(y[2], y[3]);
                log_acc += std::log(len);
                y[2] /= len;
                y[3] /= len;
            }
            ++rec.renormalisations;
            continue;
        }
        if (st == ode::Status::stopped && escaped) {
            rec.status = TrajectoryStatus::escaped;
            rec.message = "trajectory left the escape radius";
        } else if (st == ode::Status::step_underflow || st == ode::Status::rhs_failure) {
            rec.status = TrajectoryStatus::node_collision;
            rec.message = "NodeCollision: step size underflow near a nodal point";
        } else {
            rec.status = TrajectoryStatus::step_failure;
            rec.message = "step budget exhausted";
        }
        break;
    }

    rec.t_final = t;
    rec.pos_final = {y[0], y[1]};
    rec.log_xi_final = log_of(y);
    if (t > t_last_sample + 1e-12) emit(t, rec.pos_final, rec.log_xi_final);
    rec.min_abs_psi = min_psi;
    if (detector) rec.encounters = detector->finish();
    return rec;
}

}  // namespace

Flow make_flow(const Preset& preset) {
    return {Wavefield(preset.spec()), [preset](double t) { return preset_node_positions(preset, t); }};
}

Flow make_flow(const WaveSpec& spec) { return {Wavefield(spec), nullptr}; }

std::string to_string(EncounterType t) {
    switch (t) {
        case EncounterType::type_I: return "I";
        case EncounterType::type_II: return "II";
        case EncounterType::unclassified: return "unclassified";
    }
    return "?";
}

std::string to_string(TrajectoryStatus s) {
    switch (s) {
        case TrajectoryStatus::ok: return "ok";
        case TrajectoryStatus::node_collision: return "NodeCollision";
        case TrajectoryStatus::escaped: return "Escaped";
        case TrajectoryStatus::step_failure: return "StepFailure";
    }
    return "?";
}

double TrajectoryRecord::xi(std::size_t i) const { return xi0 * std::exp(log_xi.at(i)); }

double TrajectoryRecord::chi(std::size_t i) const {
    const double tt = t.at(i);
    return tt > 0.0 ? log_xi[i] / tt : 0.0;
}

double TrajectoryRecord::chi_final() const { return t_final > 0.0 ? log_xi_final / t_final : 0.0; }

// ---------------------------------------------------------------------------
// Complex track

ComplexTrack::ComplexTrack(double dt, std::size_t samples, int slots)
    : dt_(dt), samples_(samples), slots_(slots), data_(samples * static_cast<std::size_t>(slots)) {
    for (ComplexSlot& s : data_) s.node_x = s.node_y = std::numeric_limits<float>::quiet_NaN();
}

std::optional<std::size_t> ComplexTrack::index(double t) const {
    const double k = std::round(t / dt_);
    if (k < 0.0 || k >= static_cast<double>(samples_)) return std::nullopt;
    return static_cast<std::size_t>(k);
}

ComplexTrack ComplexTrack::build(const Preset& preset, double t_end, double dt, int workers,
                                 const XPointOptions& opt) {
    if (!(dt > 0.0) || !(t_end >= 0.0)) throw ConfigError("invalid complex track range");
    const auto n = static_cast<std::size_t>(std::floor(t_end / dt + 1e-9)) + 1;
    ComplexTrack track(dt, n, family_slots(preset.family));
    const Wavefield field(preset.spec());

    auto run = [&](std::size_t k0, std::size_t k1) {
        std::array<std::optional<Vec2>, 3> prev;
        std::size_t prev_count = 0;
        for (std::size_t k = k0; k < k1; ++k) {
            const double t = static_cast<double>(k) * dt;
            std::vector<NodalState> nodes;
            try {
                nodes = preset_nodes(preset, t);
            } catch (const Error&) {
            }
            if (nodes.size() != prev_count) prev.fill(std::nullopt);
            prev_count = nodes.size();
            auto slots = track.at(k);
            for (std::size_t i = 0; i < nodes.size() && i < slots.size(); ++i) {
                ComplexSlot& s = slots[i];
                s.node_x = static_cast<float>(nodes[i].pos.x);
                s.node_y = static_cast<float>(nodes[i].pos.y);
                std::vector<NodalState> others;
                for (std::size_t j = 0; j < nodes.size(); ++j)
                    if (j != i) others.push_back(nodes[j]);
                try {
                    const ComplexSnapshot snap = analyze_complex(field, nodes[i], others, prev[i], opt);
                    const Vec2 x = snap.xpoint_abs();
                    s.x_x = static_cast<float>(x.x);
                    s.x_y = static_cast<float>(x.y);
                    s.r_x = static_cast<float>(snap.R_X);
                    prev[i] = snap.xpoint;
                } catch (const Error&) {
                    prev[i].reset();
                }
            }
        }
    };

    // Fixed blocks keep the continuation seeds, and so the table, independent of the worker count.
    constexpr std::size_t block = 4096;
    const std::size_t blocks = (n + block - 1) / block;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t b; (b = next.fetch_add(1)) < blocks;) run(b * block, std::min(n, (b + 1) * block));
    };
    const auto w = static_cast<std::size_t>(std::clamp<long>(workers, 1, static_cast<long>(blocks)));
    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < w; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    return track;
}

// ---------------------------------------------------------------------------
// Encounters

EncounterType classify_path(std::span<const Vec2> rel_path, Vec2 closest_rel, Vec2 xpoint_rel, double delta,
                            double* net_winding) {
    double net = 0.0;
    for (std::size_t i = 1; i < rel_path.size(); ++i) net += angle_between(rel_path[i - 1], rel_path[i]);
    if (net_winding) *net_winding = net;
    if (rel_path.size() < 2) return EncounterType::unclassified;
    const double chord = angle_between(rel_path.front(), rel_path.back());
    const double loop = net - chord;
    if (std::abs(loop) >= 2.0 * std::numbers::pi - delta) return EncounterType::type_I;
    const double rx = norm(xpoint_rel);
    if (std::abs(net) < std::numbers::pi && rx > 0.0 && dot(closest_rel, xpoint_rel) / rx > rx)
        return EncounterType::type_II;
    return EncounterType::unclassified;
}

EncounterDetector::EncounterDetector(const ComplexTrack& track, const EncounterOptions& opt)
    : track_(&track), opt_(opt) {
    if (!(opt.window > 0.0) || !(opt.d_max >= 0.0)) throw ConfigError("invalid encounter options");
}

void EncounterDetector::motion(double t, Vec2 p, std::span<const Vec2> nodes) {
    PathPoint pt{t, p, {}, static_cast<int>(std::min<std::size_t>(nodes.size(), 3))};
    for (int i = 0; i < pt.n; ++i) pt.nodes[static_cast<std::size_t>(i)] = nodes[static_cast<std::size_t>(i)];
    path_.push_back(pt);
    flush(t, false);
}

void EncounterDetector::sample(double t, Vec2 p, double log_xi) {
    const auto w = static_cast<long>(std::floor(t / opt_.window + 1e-9));
    if (w != window_) {
        if (window_ != std::numeric_limits<long>::min()) close_window(log_xi);
        window_ = w;
        log_xi_start_ = log_xi;
        have_min_ = false;
    }
    log_xi_last_ = log_xi;
    if (const auto k = track_->index(t)) {
        const auto slots = track_->at(*k);
        int present = 0;
        for (const ComplexSlot& s : slots) present += std::isfinite(s.node_x) ? 1 : 0;
        for (std::size_t i = 0; i < slots.size(); ++i) {
            const ComplexSlot& s = slots[i];
            if (!(s.r_x > 0.0f) || s.r_x > opt_.max_rx || !std::isfinite(s.node_x)) continue;
            const Vec2 x{s.x_x, s.x_y};
            const double d = norm(p - x);
            if (!have_min_ || d < cur_.rec.d) {
                have_min_ = true;
                const Vec2 node{s.node_x, s.node_y};
                cur_.rec.d = d;
                cur_.rec.t_min = t;
                cur_.rec.R_X = s.r_x;
                cur_.rec.branch_id = static_cast<int>(i);
                cur_.slot = static_cast<int>(i);
                cur_.closest_rel = p - node;
                cur_.xpoint_rel = x - node;
                cur_.nodes_at_min = present;
            }
        }
    }
    flush(t, false);
}

void EncounterDetector::close_window(double log_xi_end) {
    if (!have_min_ || cur_.rec.d > opt_.d_max) return;
    Pending p = cur_;
    p.rec.t_a = static_cast<double>(window_) * opt_.window;
    p.rec.t_b = p.rec.t_a + opt_.window;
    p.rec.xi_ratio = std::exp(log_xi_end - log_xi_start_);
    pending_.push_back(p);
}

void EncounterDetector::classify(Pending& p) {
    std::vector<Vec2> rel;
    const double lo = p.rec.t_a - opt_.margin, hi = p.rec.t_b + opt_.margin;
    for (const PathPoint& pt : path_) {
        if (pt.t < lo || pt.t > hi) continue;
        if (pt.n != p.nodes_at_min || p.slot >= pt.n) continue;
        rel.push_back(pt.p - pt.nodes[static_cast<std::size_t>(p.slot)]);
    }
    p.rec.type = classify_path(rel, p.closest_rel, p.xpoint_rel, opt_.delta, &p.rec.winding);
}

void EncounterDetector::flush(double t_now, bool all) {
    std::size_t i = 0;
    for (; i < pending_.size(); ++i) {
        if (!all && pending_[i].rec.t_b + opt_.margin > t_now) break;
        classify(pending_[i]);
        done_.push_back(pending_[i].rec);
    }
    pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(i));

    double keep = static_cast<double>(window_) * opt_.window;
    if (!pending_.empty()) keep = std::min(keep, pending_.front().rec.t_a);
    keep -= opt_.margin + 1e-9;
    while (path_.size() > 1 && path_.front().t < keep) path_.pop_front();
}

std::vector<EncounterRecord> EncounterDetector::finish() {
    // The last window is open; it closes with the final ratio it has.
    if (window_ != std::numeric_limits<long>::min()) close_window(log_xi_last_);
    have_min_ = false;
    flush(std::numeric_limits<double>::infinity(), true);
    std::vector<EncounterRecord> out;
    out.swap(done_);
    return out;
}

TrajectoryRecord integrate(const Flow& flow, Vec2 x0, double t_end, const TraceOptions& opt,
                           const ComplexTrack* track, const EncounterOptions& enc) {
    return trace<2>(flow, x0, t_end, opt, track, enc);
}

TrajectoryRecord integrate_variational(const Flow& flow, Vec2 x0, double t_end, const TraceOptions& opt,
                                       const ComplexTrack* track, const EncounterOptions& enc) {
    return trace<4>(flow, x0, t_end, opt, track, enc);
}

double ftle(const TrajectoryRecord& record, double t) {
    if (record.t.empty() || !(t > 0.0) || t > record.t.back() * (1.0 + 1e-12))
        throw ConfigError("ftle time outside the record");
    const auto it = std::lower_bound(record.t.begin(), record.t.end(), t);
    const auto i = static_cast<std::size_t>(it - record.t.begin());
    if (i == 0 || record.t[i] == t) return record.log_xi[i] / t;
    const double w = (t - record.t[i - 1]) / (record.t[i] - record.t[i - 1]);
    return ((1.0 - w) * record.log_xi[i - 1] + w * record.log_xi[i]) / t;
}

std::vector<EncounterRecord> detect_encounters(const TrajectoryRecord& record, const ComplexTrack& track,
                                               const EncounterOptions& opt) {
    EncounterDetector det(track, opt);
    std::vector<Vec2> nodes;
    for (std::size_t i = 0; i < record.t.size(); ++i) {
        nodes.clear();
        if (const auto k = track.index(record.t[i]))
            for (const ComplexSlot& s : track.at(*k))
                if (std::isfinite(s.node_x)) nodes.push_back({s.node_x, s.node_y});
        det.motion(record.t[i], record.pos[i], nodes);
        det.sample(record.t[i], record.pos[i], record.log_xi[i]);
    }
    return det.finish();
}

std::size_t corrected_encounters(std::span<const EncounterRecord> encounters, double r_max) {
    return static_cast<std::size_t>(std::count_if(encounters.begin(), encounters.end(), [&](const auto& e) {
        return e.R_X <= r_max && e.d <= 0.5 * e.R_X;
    }));
}

EncounterType classify_encounter(const TrajectoryRecord& record, const EncounterRecord& encounter,
                                 const ComplexTrack& track, const EncounterOptions& opt) {
    const int slot = encounter.branch_id;
    const auto km = track.index(encounter.t_min);
    if (slot < 0 || slot >= track.slots() || !km) return EncounterType::unclassified;
    const ComplexSlot& sm = track.at(*km)[static_cast<std::size_t>(slot)];
    if (!std::isfinite(sm.node_x) || !(sm.r_x > 0.0f)) return EncounterType::unclassified;
    const Vec2 node_m{sm.node_x, sm.node_y};
    const Vec2 xrel = Vec2{sm.x_x, sm.x_y} - node_m;

    std::vector<Vec2> rel;
    Vec2 closest = {kNaN, kNaN};
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < record.t.size(); ++i) {
        const double t = record.t[i];
        if (t < encounter.t_a - opt.margin || t > encounter.t_b + opt.margin) continue;
        const auto k = track.index(t);
        if (!k) continue;
        const ComplexSlot& s = track.at(*k)[static_cast<std::size_t>(slot)];
        if (!std::isfinite(s.node_x)) continue;
        const Vec2 r = record.pos[i] - Vec2{s.node_x, s.node_y};
        rel.push_back(r);
        if (s.r_x > 0.0f) {
            const double d = norm(record.pos[i] - Vec2{s.x_x, s.x_y});
            if (d < best) {
                best = d;
                closest = r;
            }
        }
    }
    if (!std::isfinite(closest.x)) return EncounterType::unclassified;
    return classify_path(rel, closest, xrel, opt.delta);
}

}  // namespace vortexflow
