#include "vortexflow/nodal.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <tuple>

#include "vortexflow/errors.hpp"

namespace vortexflow {

namespace {

thread_local int g_last_iterations = 0;

// Node velocity from P_x xdot + P_y ydot + P_t = 0.
Vec2 implicit_velocity(const PolyJet& q) {
    const double j11 = q.px.real(), j12 = q.py.real();
    const double j21 = q.px.imag(), j22 = q.py.imag();
    const double det = j11 * j22 - j12 * j21;
    if (det == 0.0) throw DegenerateJacobian("node is not simple");
    const double r1 = -q.pt.real(), r2 = -q.pt.imag();
    return {(r1 * j22 - j12 * r2) / det, (j11 * r2 - j21 * r1) / det};
}

NodalState finish(const Wavefield& field, Vec2 pos, double t, Provenance prov, int branch) {
    NodalState n;
    n.pos = pos;
    n.t = t;
    n.vel = implicit_velocity(field.poly(pos.x, pos.y, t));
    n.provenance = prov;
    n.branch_id = branch;
    return n;
}

void require_denominator(double d, const char* what) {
    if (std::abs(d) < kTolDenominator) throw NodeAtInfinity(std::string("vanishing ") + what);
}

double newton_polish_cubic(double x, double p) {
    const double f = x * x * x - 3.0 * x + p;
    const double fp = 3.0 * x * x - 3.0;
    return fp != 0.0 ? x - f / fp : x;
}

}  // namespace

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::analytic_ekc: return "analytic-ekc";
        case Provenance::analytic_eps20: return "analytic-eps20";
        case Provenance::analytic_20: return "analytic-20";
        case Provenance::analytic_30: return "analytic-30";
        case Provenance::newton: return "newton";
    }
    return "?";
}

std::string to_string(NodalEventKind k) {
    switch (k) {
        case NodalEventKind::pair_creation: return "pair-creation";
        case NodalEventKind::pair_annihilation: return "pair-annihilation";
        case NodalEventKind::escape_to_infinity: return "escape-to-infinity";
        case NodalEventKind::entry_from_infinity: return "entry-from-infinity";
    }
    return "?";
}

NodalState nodal_ekc(double t, double a, double b, double c) {
    const double sc = std::sin(c * t), s1 = std::sin((1.0 + c) * t);
    require_denominator(a * sc, "sin(ct)");
    require_denominator(s1, "sin((1+c)t)");
    const double B = b * std::sqrt(c);
    const double cc = std::cos(c * t), c1 = std::cos((1.0 + c) * t);
    NodalState n;
    n.t = t;
    n.pos = {-s1 / (a * sc), -a * std::sin(t) / (B * s1)};
    n.vel = {-((1.0 + c) * c1 * sc - s1 * c * cc) / (a * sc * sc),
             -a * (std::cos(t) * s1 - std::sin(t) * (1.0 + c) * c1) / (B * s1 * s1)};
    n.provenance = Provenance::analytic_ekc;
    n.branch_id = 0;
    return n;
}

namespace {

std::vector<Vec2> eps20_positions(double t, double a, double b, double eps, double c) {
    const double A = eps * std::sin((c - 1.0) * t);
    const double Bq = a * std::sin(c * t);
    const double s1 = std::sin((1.0 + c) * t);
    const double Cq = s1 - A;
    const double disc = Bq * Bq - 4.0 * A * Cq;
    if (disc < 0.0) throw NoRealRoot("negative discriminant");

    const double q = -0.5 * (Bq + std::copysign(std::sqrt(disc), Bq));
    require_denominator(q, "quadratic root scale");
    std::vector<double> xs{Cq / q};
    if (std::abs(A) > kTolDenominator) xs.push_back(q / A);

    const double B = b * std::sqrt(c);
    std::vector<Vec2> out;
    for (double x : xs) {
        require_denominator(x * B * s1, "x sin((1+c)t)");
        out.push_back({x, (-a * x * std::sin(t) + eps * (1.0 - x * x) * std::sin(2.0 * t)) / (x * B * s1)});
    }
    return out;
}

std::vector<Vec2> case20_positions(double t, double a, double b, double c) {
    const double scm1 = std::sin((c - 1.0) * t);
    require_denominator(a * scm1, "sin((c-1)t)");
    double x2 = 1.0 - std::sin((1.0 + c) * t) / (a * scm1);
    if (x2 < 0.0 && x2 > -1e-12) x2 = 0.0;  // rounding at the a = 1, t = k pi coalescence
    if (x2 < 0.0) return {};
    const double x = std::sqrt(x2);
    const double B = b * std::sqrt(c);
    const double s2t = std::sin(2.0 * t);
    double y = 0.0;
    if (x * std::abs(B * scm1) < kTolDenominator) {
        // Coalesced pair: y vanishes along the branch as x -> 0.
        if (std::abs(s2t) > 1e-8) throw NodeAtInfinity("node at x = 0 with sin(2t) != 0");
    } else {
        y = s2t / (B * x * scm1);
    }
    return {{x, y}, {-x, -y}};
}

std::vector<Vec2> case30_positions(double t, double a, double b, double c) {
    const double scm2 = std::sin((c - 2.0) * t);
    require_denominator(a * scm2, "sin((c-2)t)");
    const double p = std::sin((1.0 + c) * t) / (a * scm2);
    if (std::abs(0.25 * p * p - 1.0) < 1e-12) throw DegenerateRoot("double root of the nodal cubic");
    const double B = b * std::sqrt(c);
    std::vector<Vec2> out;
    for (double x : depressed_cubic_roots(p)) {
        require_denominator(x * B * scm2, "x sin((c-2)t)");
        out.push_back({x, std::sin(3.0 * t) / (B * x * scm2)});
    }
    return out;
}

std::vector<NodalState> with_velocities(const std::vector<Vec2>& pos, const Preset& preset, double t,
                                        Provenance prov) {
    std::vector<NodalState> out;
    if (pos.empty()) return out;
    const Wavefield field(preset.spec());
    for (std::size_t i = 0; i < pos.size(); ++i) {
        if (pos[i].x == 0.0 && pos[i].y == 0.0 && pos.size() == 2) {
            // Coalesced pair of the case-20 family: not a simple zero.
            NodalState n;
            n.t = t;
            n.provenance = prov;
            n.branch_id = static_cast<int>(i);
            out.push_back(n);
            continue;
        }
        out.push_back(finish(field, pos[i], t, prov, static_cast<int>(i)));
    }
    return out;
}

}  // namespace

std::vector<NodalState> nodal_eps20(double t, double a, double b, double eps, double c) {
    return with_velocities(eps20_positions(t, a, b, eps, c), Preset{Family::eps20, a, b, eps, c}, t,
                           Provenance::analytic_eps20);
}

std::vector<NodalState> nodal_case20(double t, double a, double b, double c) {
    return with_velocities(case20_positions(t, a, b, c), Preset{Family::case20, a, b, 0.0, c}, t,
                           Provenance::analytic_20);
}

std::vector<double> depressed_cubic_roots(double p) {
    const double h = 0.25 * p * p;
    if (h == 1.0) {
        return p > 0 ? std::vector<double>{-2.0, 1.0, 1.0} : std::vector<double>{-1.0, -1.0, 2.0};
    }
    std::vector<double> roots;
    if (h < 1.0) {
        const double theta = std::acos(-0.5 * p);
        for (int k = 0; k < 3; ++k)
            roots.push_back(2.0 * std::cos((theta - 2.0 * std::numbers::pi * k) / 3.0));
    } else {
        const double s = p > 0 ? 1.0 : -1.0;
        roots.push_back(-2.0 * s * std::cosh(std::acosh(0.5 * std::abs(p)) / 3.0));
    }
    for (double& r : roots) r = newton_polish_cubic(r, p);
    std::sort(roots.begin(), roots.end());
    return roots;
}

std::vector<NodalState> nodal_case30(double t, double a, double b, double c) {
    return with_velocities(case30_positions(t, a, b, c), Preset{Family::case30, a, b, 0.0, c}, t,
                           Provenance::analytic_30);
}

std::vector<Vec2> preset_node_positions(const Preset& preset, double t) {
    switch (preset.family) {
        case Family::ekc: return {nodal_ekc(t, preset.a, preset.b, preset.c).pos};
        case Family::eps20: return eps20_positions(t, preset.a, preset.b, preset.eps, preset.c);
        case Family::case20: return case20_positions(t, preset.a, preset.b, preset.c);
        case Family::case30: return case30_positions(t, preset.a, preset.b, preset.c);
    }
    return {};
}

std::vector<NodalState> preset_nodes(const Preset& preset, double t) {
    switch (preset.family) {
        case Family::ekc: return {nodal_ekc(t, preset.a, preset.b, preset.c)};
        case Family::eps20: return nodal_eps20(t, preset.a, preset.b, preset.eps, preset.c);
        case Family::case20: return nodal_case20(t, preset.a, preset.b, preset.c);
        case Family::case30: return nodal_case30(t, preset.a, preset.b, preset.c);
    }
    return {};
}

NodalState refine_node(const Wavefield& field, Vec2 guess, double t, const RefineOptions& opt) {
    Vec2 x = guess;
    for (int it = 0; it <= opt.max_iter; ++it) {
        const PolyJet q = field.poly(x.x, x.y, t);
        const double j11 = q.px.real(), j12 = q.py.real();
        const double j21 = q.px.imag(), j22 = q.py.imag();
        const double det = j11 * j22 - j12 * j21;
        const double scale = std::norm(q.px) + std::norm(q.py);
        const bool converged = std::abs(q.p) < opt.tol_residual;
        if (converged) {
            g_last_iterations = it;
            // One polishing step brings the position to full precision.
            if (std::abs(det) > 1e-14 * scale && scale > 0.0) {
                x.x -= (q.p.real() * j22 - j12 * q.p.imag()) / det;
                x.y -= (j11 * q.p.imag() - j21 * q.p.real()) / det;
            }
            return finish(field, x, t, Provenance::newton, -1);
        }
        if (it == opt.max_iter) break;
        if (!(scale > 0.0) || std::abs(det) < 1e-14 * scale)
            throw DegenerateJacobian("singular Jacobian during node refinement");
        x.x -= (q.p.real() * j22 - j12 * q.p.imag()) / det;
        x.y -= (j11 * q.p.imag() - j21 * q.p.real()) / det;
        if (!std::isfinite(x.x) || !std::isfinite(x.y) || norm(x - guess) > opt.max_travel)
            throw NoConvergence("node refinement left the seed basin");
    }
    throw NoConvergence("node refinement hit the iteration limit");
}

NodalState refine_node(const WaveSpec& spec, Vec2 guess, double t, const RefineOptions& opt) {
    return refine_node(Wavefield(spec), guess, t, opt);
}

int last_refine_iterations() { return g_last_iterations; }

Vec2 nodal_velocity_fd(const WaveSpec& spec, const NodalState& node, double t, double h) {
    const Wavefield field(spec);
    RefineOptions opt;
    opt.max_travel = 0.5;
    try {
        const NodalState plus = refine_node(field, node.pos, t + h, opt);
        const NodalState minus = refine_node(field, node.pos, t - h, opt);
        return (0.5 / h) * (plus.pos - minus.pos);
    } catch (const Error& e) {
        throw BranchLost(std::string("continuation failed: ") + e.what());
    }
}

std::vector<NodalState> scan_nodes(const Wavefield& field, double t, double half_width, double spacing) {
    const int n = static_cast<int>(std::ceil(2.0 * half_width / spacing)) + 1;
    std::vector<double> mag(static_cast<std::size_t>(n) * n);
    auto coord = [&](int i) { return -half_width + i * spacing; };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) mag[i * n + j] = std::abs(field.poly_value(coord(i), coord(j), t));

    RefineOptions opt;
    opt.max_travel = 4.0 * spacing;
    std::vector<NodalState> out;
    for (int i = 1; i + 1 < n; ++i) {
        for (int j = 1; j + 1 < n; ++j) {
            const double m = mag[i * n + j];
            bool is_min = true;
            for (int di = -1; di <= 1 && is_min; ++di)
                for (int dj = -1; dj <= 1; ++dj)
                    if ((di || dj) && mag[(i + di) * n + j + dj] < m) { is_min = false; break; }
            if (!is_min) continue;
            try {
                NodalState node = refine_node(field, {coord(i), coord(j)}, t, opt);
                const bool dup = std::any_of(out.begin(), out.end(), [&](const NodalState& o) {
                    return norm(o.pos - node.pos) < 1e-6;
                });
                if (!dup) out.push_back(node);
            } catch (const Error&) {
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const NodalState& l, const NodalState& r) {
        return std::tie(l.pos.x, l.pos.y) < std::tie(r.pos.x, r.pos.y);
    });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].branch_id = static_cast<int>(i);
    return out;
}

NodeSolver preset_solver(const Preset& preset) {
    return [preset](double t) { return preset_nodes(preset, t); };
}

NodeSolver generic_solver(const WaveSpec& spec, double half_width) {
    auto field = std::make_shared<Wavefield>(spec);
    return [field, half_width](double t) { return scan_nodes(*field, t, half_width); };
}

namespace {

class Tracker {
public:
    Tracker(const NodeSolver& solver, const TrackOptions& opt) : solver_(solver), opt_(opt) {}

    void start(double t) {
        if (auto nodes = solve(t)) {
            t_ = t;
            for (NodalState n : *nodes) {
                n.branch_id = next_id_++;
                commit_point(n);
                active_.push_back(n);
            }
            started_ = true;
        }
    }

    void advance_to(double t) {
        if (!started_) {
            start(t);
            return;
        }
        auto nodes = solve(t);
        if (!nodes) return;  // singular instant: labels carry over
        advance(t, *nodes, 0);
    }

    NodalTrack result() && {
        NodalTrack track;
        for (auto& [id, line] : lines_) track.lines.push_back(std::move(line));
        std::sort(track.lines.begin(), track.lines.end(),
                  [](const NodalLine& l, const NodalLine& r) { return l.branch_id < r.branch_id; });
        track.events = std::move(events_);
        std::stable_sort(track.events.begin(), track.events.end(),
                         [](const NodalEvent& l, const NodalEvent& r) { return l.t_bif < r.t_bif; });
        return track;
    }

private:
    std::optional<std::vector<NodalState>> solve(double t) {
        try {
            std::vector<NodalState> nodes = solver_(t);
            std::vector<NodalState> kept;
            for (const NodalState& n : nodes)
                if (std::abs(n.pos.x) <= opt_.infinity_cutoff && std::abs(n.pos.y) <= opt_.infinity_cutoff)
                    kept.push_back(n);
            return kept;
        } catch (const Error&) {
            return std::nullopt;
        }
    }

    struct Match {
        std::vector<int> new_for_old;
        std::vector<int> old_for_new;
        bool complete = true;
    };

    Match match(const std::vector<NodalState>& nodes, double t) const {
        const double dt = t - t_;
        std::vector<std::tuple<double, int, int>> cand;
        for (std::size_t i = 0; i < active_.size(); ++i) {
            const NodalState& p = active_[i];
            const Vec2 predicted = p.pos + dt * p.vel;
            const double threshold = 10.0 * std::abs(dt) * norm(p.vel) + 0.05;
            for (std::size_t j = 0; j < nodes.size(); ++j) {
                const double d = norm(nodes[j].pos - predicted);
                if (d <= threshold) cand.emplace_back(d, static_cast<int>(i), static_cast<int>(j));
            }
        }
        std::sort(cand.begin(), cand.end());
        Match m;
        m.new_for_old.assign(active_.size(), -1);
        m.old_for_new.assign(nodes.size(), -1);
        for (const auto& [d, i, j] : cand) {
            if (m.new_for_old[i] >= 0 || m.old_for_new[j] >= 0) continue;
            m.new_for_old[i] = j;
            m.old_for_new[j] = i;
        }
        m.complete = std::none_of(m.new_for_old.begin(), m.new_for_old.end(), [](int v) { return v < 0; }) &&
                     std::none_of(m.old_for_new.begin(), m.old_for_new.end(), [](int v) { return v < 0; });
        return m;
    }

    void advance(double t, std::vector<NodalState> nodes, int depth) {
        Match m = match(nodes, t);
        const double min_dt = std::max(opt_.event_tol, 1e-12);
        if (!m.complete && t - t_ > min_dt && depth < 60) {
            double mid = 0.5 * (t_ + t);
            auto mid_nodes = solve(mid);
            if (!mid_nodes) {
                mid = std::min(t, mid + opt_.singular_halfwidth);
                mid_nodes = solve(mid);
            }
            if (mid_nodes && mid > t_ && mid < t) {
                advance(mid, std::move(*mid_nodes), depth + 1);
                advance(t, std::move(nodes), depth + 1);
                return;
            }
        }
        commit(t, nodes, m);
    }

    void commit(double t, std::vector<NodalState>& nodes, const Match& m) {
        const double t_event = 0.5 * (t_ + t);
        const double dt = t - t_;
        const int delta = static_cast<int>(nodes.size()) - static_cast<int>(active_.size());

        std::vector<int> lost, born;
        for (std::size_t i = 0; i < active_.size(); ++i)
            if (m.new_for_old[i] < 0) lost.push_back(static_cast<int>(i));
        for (std::size_t j = 0; j < nodes.size(); ++j)
            if (m.old_for_new[j] < 0) born.push_back(static_cast<int>(j));

        auto far = [&](Vec2 p) {
            return std::max(std::abs(p.x), std::abs(p.y)) > 0.5 * opt_.infinity_cutoff;
        };
        auto pair_up = [&](std::vector<int>& idx, const std::vector<NodalState>& set, NodalEventKind kind) {
            for (std::size_t a = 0; a < idx.size(); ++a) {
                for (std::size_t b = a + 1; b < idx.size(); ++b) {
                    const Vec2 pa = set[idx[a]].pos, pb = set[idx[b]].pos;
                    if (norm(pa - pb) <= opt_.pair_distance) {
                        events_.push_back({kind, t_event, 0.5 * (pa + pb)});
                        idx.erase(idx.begin() + static_cast<long>(b));
                        idx.erase(idx.begin() + static_cast<long>(a));
                        --a;
                        break;
                    }
                }
            }
        };
        if (delta > 0) pair_up(born, nodes, NodalEventKind::pair_creation);
        if (delta < 0) pair_up(lost, active_, NodalEventKind::pair_annihilation);
        for (int i : lost) {
            const NodalState& p = active_[i];
            if (far(p.pos) || far(p.pos + dt * p.vel) || delta < 0)
                events_.push_back({NodalEventKind::escape_to_infinity, t_event, std::nullopt});
        }
        for (int j : born) {
            const NodalState& n = nodes[j];
            if (far(n.pos) || far(n.pos - dt * n.vel) || delta > 0)
                events_.push_back({NodalEventKind::entry_from_infinity, t_event, std::nullopt});
        }

        for (std::size_t j = 0; j < nodes.size(); ++j) {
            const int old = m.old_for_new[j];
            nodes[j].branch_id = old >= 0 ? active_[old].branch_id : next_id_++;
            commit_point(nodes[j]);
        }
        active_ = nodes;
        t_ = t;
    }

    void commit_point(const NodalState& n) {
        NodalLine& line = lines_[n.branch_id];
        line.branch_id = n.branch_id;
        line.points.push_back(n);
    }

    const NodeSolver& solver_;
    TrackOptions opt_;
    std::vector<NodalState> active_;
    std::map<int, NodalLine> lines_;
    std::vector<NodalEvent> events_;
    double t_ = 0.0;
    int next_id_ = 0;
    bool started_ = false;
};

}  // namespace

NodalTrack track_nodal_lines(const NodeSolver& solver, double t0, double t1, double dt,
                             const TrackOptions& opt) {
    Tracker tracker(solver, opt);
    const long steps = static_cast<long>(std::ceil((t1 - t0) / dt - 1e-9));
    for (long k = 0; k <= steps; ++k) tracker.advance_to(std::min(t1, t0 + k * dt));
    return std::move(tracker).result();
}

}  // namespace vortexflow
