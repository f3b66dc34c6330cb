// vortexflow command-line front end.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vortexflow/complex_analysis.hpp"
#include "vortexflow/dynamics.hpp"
#include "vortexflow/ensemble.hpp"
#include "vortexflow/errors.hpp"
#include "vortexflow/nodal.hpp"
#include "vortexflow/scattering.hpp"

using namespace vortexflow;
namespace fs = std::filesystem;

namespace {

const std::string& fmt(double v) {
    thread_local std::string s;
    s = format_double(v);
    return s;
}

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + p.string());
    return f;
}

// Wavefunction given by preset flags or by a config file's [wavefunction] section.
struct WaveArgs {
    std::string preset = "ekc";
    double a = 1.0, b = 1.0, eps = 0.0;
    double c = 0.70710678118654752440;
    std::string config;

    void add(CLI::App* app) {
        app->add_option("--preset", preset, "ekc, case-eps20, case-20 or case-30");
        app->add_option("--a", a);
        app->add_option("--b", b);
        app->add_option("--eps", eps);
        app->add_option("--c", c, "frequency ratio omega_y / omega_x");
        app->add_option("--config", config, "file with a [wavefunction] section (overrides the flags)");
    }

    WaveSource resolve() const {
        if (!config.empty()) return parse_wavefunction(ConfigFile::load(config).entries("wavefunction"));
        WaveSource src;
        Preset p;
        p.family = family_from_string(preset);
        p.a = a, p.b = b, p.eps = eps, p.c = c;
        src.preset = p;
        src.spec = p.spec();
        src.spec.validate();
        return src;
    }
};

// ---------------------------------------------------------------------------

struct NodalArgs {
    WaveArgs wave;
    double t0 = 0.0, t1 = 20.0, dt = 0.01;
    std::string out = "lines.csv";
};

void run_nodal(const NodalArgs& a) {
    const WaveSource src = a.wave.resolve();
    const NodeSolver solver = src.preset ? preset_solver(*src.preset) : generic_solver(src.spec);
    const NodalTrack track = track_nodal_lines(solver, a.t0, a.t1, a.dt);

    auto f = open_out(a.out);
    f << "t,branch_id,x,y,xdot,ydot\n";
    for (const NodalLine& line : track.lines)
        for (const NodalState& s : line.points)
            f << fmt(s.t) << ',' << line.branch_id << ',' << fmt(s.pos.x) << ',' << fmt(s.pos.y) << ','
              << fmt(s.vel.x) << ',' << fmt(s.vel.y) << '\n';
    auto e = open_out(fs::path(a.out).replace_filename("events.csv"));
    e << "kind,t_bif,x,y\n";
    for (const NodalEvent& ev : track.events) {
        e << to_string(ev.kind) << ',' << fmt(ev.t_bif) << ',';
        if (ev.location) e << fmt(ev.location->x) << ',' << fmt(ev.location->y);
        else e << ',';
        e << '\n';
    }
    std::cout << track.lines.size() << " nodal lines, " << track.events.size() << " events\n";
}

// ---------------------------------------------------------------------------

struct ComplexArgs {
    WaveArgs wave;
    double t = 1.25;
    bool scan = false;
    double t0 = 0.0, t1 = 10.0, dt = 0.001;
    std::string out = "f3.csv";
};

std::vector<NodalState> nodes_at(const WaveSource& src, double t) {
    if (src.preset) return preset_nodes(*src.preset, t);
    return generic_solver(src.spec)(t);
}

std::vector<NodalState> others_of(const std::vector<NodalState>& nodes, std::size_t i) {
    std::vector<NodalState> out;
    for (std::size_t j = 0; j < nodes.size(); ++j)
        if (j != i) out.push_back(nodes[j]);
    return out;
}

void run_complex(const ComplexArgs& a) {
    const WaveSource src = a.wave.resolve();
    const Wavefield field(src.spec);

    if (!a.scan) {
        const auto nodes = nodes_at(src, a.t);
        nlohmann::json records = nlohmann::json::array();
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const NodalState& n = nodes[i];
            std::cout << "node " << i << " at (" << fmt(n.pos.x) << ", " << fmt(n.pos.y) << ") velocity ("
                      << fmt(n.vel.x) << ", " << fmt(n.vel.y) << ")\n";
            nlohmann::json r{{"t", a.t}, {"branch", i}, {"x0", n.pos.x}, {"y0", n.pos.y}, {"xdot", n.vel.x},
                             {"ydot", n.vel.y}};
            try {
                const ComplexSnapshot s = analyze_complex(field, n, others_of(nodes, i));
                std::cout << "  X-point (u, v) = (" << fmt(s.xpoint.x) << ", " << fmt(s.xpoint.y)
                          << "), R_X = " << fmt(s.R_X) << "\n  eigenvalues " << fmt(s.eigenvalues[0]) << ", "
                          << fmt(s.eigenvalues[1]) << "\n  <f3> = " << fmt(s.f3) << ", d0 = " << fmt(s.d0) << ", "
                          << to_string(s.classification) << ", " << to_string(s.rotation)
                          << "\n  adiabaticity ratio_a = " << fmt(s.adiabatic_a) << '\n';
                r.update({{"u_X", s.xpoint.x}, {"v_X", s.xpoint.y}, {"R_X", s.R_X}, {"lambda1", s.eigenvalues[0]},
                          {"lambda2", s.eigenvalues[1]}, {"f3", s.f3}, {"d0", s.d0},
                          {"class", to_string(s.classification)}, {"rotation", to_string(s.rotation)},
                          {"ratio_a", s.adiabatic_a}});
            } catch (const Error& e) {
                std::cout << "  no complex: " << e.what() << '\n';
                r["error"] = e.what();
            }
            records.push_back(r);
        }
        if (nodes.empty()) std::cout << "no nodal points at t = " << fmt(a.t) << '\n';
        std::cout << records.dump() << '\n';
        return;
    }

    if (!(a.dt > 0.0) || !(a.t1 > a.t0)) throw ConfigError("invalid scan range");
    auto f = open_out(a.out);
    f << "t,f3,d0,class,u_X,v_X,R_X,lambda1,lambda2,ratio_a,branch\n";
    std::vector<std::optional<Vec2>> prev;
    const auto n = static_cast<long>(std::floor((a.t1 - a.t0) / a.dt + 1e-9));
    long failures = 0;
    for (long k = 1; k <= n; ++k) {
        const double t = a.t0 + static_cast<double>(k) * a.dt;
        std::vector<NodalState> nodes;
        try {
            nodes = nodes_at(src, t);
        } catch (const Error&) {
            ++failures;
            continue;
        }
        if (prev.size() != nodes.size()) prev.assign(nodes.size(), std::nullopt);
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            try {
                const ComplexSnapshot s = analyze_complex(field, nodes[i], others_of(nodes, i), prev[i]);
                prev[i] = s.xpoint;
                f << fmt(t) << ',' << fmt(s.f3) << ',' << fmt(s.d0) << ',' << to_string(s.classification) << ','
                  << fmt(s.xpoint.x) << ',' << fmt(s.xpoint.y) << ',' << fmt(s.R_X) << ',' << fmt(s.eigenvalues[0])
                  << ',' << fmt(s.eigenvalues[1]) << ',' << fmt(s.adiabatic_a) << ',' << i << '\n';
            } catch (const Error&) {
                prev[i].reset();
                ++failures;
            }
        }
    }
    std::cout << n << " samples, " << failures << " without a complex\n";
}

// ---------------------------------------------------------------------------

struct TraceArgs {
    WaveArgs wave;
    double x0 = 0.0, y0 = 0.0, t_end = 100.0;
    double tol = 1e-10, kappa = 0.1, sample_dt = 0.01;
    double d_max = 0.2, window = 0.1;
    int workers = 1;
    std::string out = "orbit.csv";
    std::string encounters;
};

void run_trace(const TraceArgs& a) {
    const WaveSource src = a.wave.resolve();
    const Flow flow = src.preset ? make_flow(*src.preset) : make_flow(src.spec);
    TraceOptions opt;
    opt.tol = a.tol;
    opt.kappa = a.kappa;
    opt.sample_dt = a.sample_dt;
    EncounterOptions enc;
    enc.d_max = a.d_max;
    enc.window = a.window;

    std::optional<ComplexTrack> track;
    if (!a.encounters.empty()) {
        if (!src.preset) throw ConfigError("--encounters needs a named preset");
        track = ComplexTrack::build(*src.preset, a.t_end, 0.01, a.workers);
    }
    const TrajectoryRecord r =
        integrate_variational(flow, {a.x0, a.y0}, a.t_end, opt, track ? &*track : nullptr, enc);

    auto f = open_out(a.out);
    f << "t,x,y,xi,chi\n";
    for (std::size_t i = 0; i < r.t.size(); ++i)
        f << fmt(r.t[i]) << ',' << fmt(r.pos[i].x) << ',' << fmt(r.pos[i].y) << ',' << fmt(r.xi(i)) << ','
          << fmt(r.chi(i)) << '\n';
    if (track) {
        auto e = open_out(a.encounters);
        e << "t_a,t_b,d,R_X,type\n";
        for (const EncounterRecord& x : r.encounters)
            e << fmt(x.t_a) << ',' << fmt(x.t_b) << ',' << fmt(x.d) << ',' << fmt(x.R_X) << ',' << to_string(x.type)
              << '\n';
        std::cout << "encounters N(d <= " << a.d_max << ") = " << r.encounters.size() << ", corrected "
                  << corrected_encounters(r.encounters) << '\n';
    }
    std::cout << "status " << to_string(r.status) << (r.message.empty() ? "" : ": " + r.message) << "\nt_final "
              << fmt(r.t_final) << " chi " << fmt(r.chi_final()) << " steps " << r.steps << '\n';
}

// ---------------------------------------------------------------------------

struct ScatterArgs {
    double xdot0 = 3.0;
    double dv_min = 1e-4, dv_max = 1e-1;
    int points = 200;
    std::vector<double> xi0{1.0, 0.0};
    double tol = 1e-12;
    bool fit = false;
    std::string out = "sweep.csv";
};

void run_scatter(const ScatterArgs& a) {
    if (!(a.dv_min > 0.0) || !(a.dv_max > a.dv_min) || a.points < 2) throw ConfigError("invalid sweep range");
    if (a.xi0.size() != 2) throw ConfigError("--xi0 takes two numbers");
    const ToyParams p{a.xdot0};
    const double vs = separatrix_crossings(p).v_s;
    const double sign = a.xdot0 > 0 ? 1.0 : -1.0;
    ScatterOptions opt;
    opt.tol = a.tol;
    opt.xi0 = {a.xi0[0], a.xi0[1]};

    auto f = open_out(a.out);
    f << "v1,delta_v1,type,amplification,t_scatter\n";
    std::vector<std::pair<double, double>> I, II;
    for (int k = 0; k < a.points; ++k) {
        const double d = a.dv_min * std::pow(a.dv_max / a.dv_min, static_cast<double>(k) / (a.points - 1));
        for (double side : {1.0, -1.0}) {
            const ScatterResult r = scatter_amplification(vs + sign * side * d, p, opt);
            f << fmt(r.v1) << ',' << fmt(r.delta_v1) << ',' << to_string(r.type) << ',' << fmt(r.amplification)
              << ',' << fmt(r.t_scatter) << '\n';
            (r.type == EncounterType::type_I ? I : II).push_back({r.delta_v1, r.amplification});
        }
    }
    std::cout << "v_s " << fmt(vs) << '\n';
    if (a.fit) {
        for (auto [name, pts] : {std::pair{"I", &I}, std::pair{"II", &II}}) {
            const PowerLawFit fit = fit_power_law(*pts);
            std::cout << "fit type " << name << " A " << fmt(fit.A) << " b " << fmt(fit.b) << " r2 " << fmt(fit.r2)
                      << '\n';
        }
    }
}

// ---------------------------------------------------------------------------

struct EnsembleArgs {
    std::string config;
    std::string out = "report";
    std::optional<int> workers;
    std::optional<std::uint64_t> seed;
};

void run_ensemble_cmd(const EnsembleArgs& a) {
    EnsembleConfig cfg = parse_ensemble_config(ConfigFile::load(a.config));
    if (a.workers) cfg.workers = *a.workers;
    if (a.seed) cfg.seed = *a.seed;
    cfg.validate();
    const EnsembleReport rep = run_ensemble(cfg);
    write_report(rep, a.out);
    std::cout << rep.rows.size() << " orbits, " << rep.failures << " failed; report in " << a.out << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bohmian trajectories, nodal points and their X-point complexes"};
    app.require_subcommand(1);

    NodalArgs nodal;
    auto* cmd_nodal = app.add_subcommand("nodal-lines", "track nodal points over time");
    nodal.wave.add(cmd_nodal);
    cmd_nodal->add_option("--t0", nodal.t0);
    cmd_nodal->add_option("--t1", nodal.t1);
    cmd_nodal->add_option("--dt", nodal.dt);
    cmd_nodal->add_option("--out", nodal.out, "lines CSV; events.csv is written beside it");

    ComplexArgs cx;
    auto* cmd_cx = app.add_subcommand("complex", "nodal point - X-point complex analysis");
    cx.wave.add(cmd_cx);
    cmd_cx->add_option("--t", cx.t, "snapshot time");
    cmd_cx->add_flag("--scan", cx.scan, "scan a time range instead of one snapshot");
    cmd_cx->add_option("--t0", cx.t0);
    cmd_cx->add_option("--t1", cx.t1);
    cmd_cx->add_option("--dt", cx.dt);
    cmd_cx->add_option("--out", cx.out);

    TraceArgs tr;
    auto* cmd_tr = app.add_subcommand("trace", "integrate one trajectory with its deviation vector");
    tr.wave.add(cmd_tr);
    cmd_tr->add_option("--x0", tr.x0)->required();
    cmd_tr->add_option("--y0", tr.y0)->required();
    cmd_tr->add_option("--t-end", tr.t_end);
    cmd_tr->add_option("--tol", tr.tol);
    cmd_tr->add_option("--kappa", tr.kappa, "step cap factor near nodes");
    cmd_tr->add_option("--sample-dt", tr.sample_dt);
    cmd_tr->add_option("--d-max", tr.d_max);
    cmd_tr->add_option("--window", tr.window);
    cmd_tr->add_option("--workers", tr.workers, "threads for the complex table");
    cmd_tr->add_option("--out", tr.out);
    cmd_tr->add_option("--encounters", tr.encounters, "encounter CSV");

    ScatterArgs sc;
    auto* cmd_sc = app.add_subcommand("scatter", "deviation amplification sweep of the toy model");
    cmd_sc->add_option("--xdot0", sc.xdot0);
    cmd_sc->add_option("--v1-min", sc.dv_min, "smallest distance from the stable manifold");
    cmd_sc->add_option("--v1-max", sc.dv_max, "largest distance from the stable manifold");
    cmd_sc->add_option("--points", sc.points, "launches per side");
    cmd_sc->add_option("--xi0", sc.xi0, "initial deviation direction")->expected(2);
    cmd_sc->add_option("--tol", sc.tol);
    cmd_sc->add_flag("--fit", sc.fit, "print power-law fits per type");
    cmd_sc->add_option("--out", sc.out);

    EnsembleArgs en;
    auto* cmd_en = app.add_subcommand("ensemble", "random-orbit ensemble with chi and encounter statistics");
    cmd_en->add_option("--config", en.config)->required();
    cmd_en->add_option("--out", en.out);
    cmd_en->add_option("--workers", en.workers);
    cmd_en->add_option("--seed", en.seed);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*cmd_nodal) run_nodal(nodal);
        if (*cmd_cx) run_complex(cx);
        if (*cmd_tr) run_trace(tr);
        if (*cmd_sc) run_scatter(sc);
        if (*cmd_en) run_ensemble_cmd(en);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
