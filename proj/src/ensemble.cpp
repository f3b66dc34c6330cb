#include "vortexflow/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "vortexflow/errors.hpp"

namespace vortexflow {

// ---------------------------------------------------------------------------
// Philox4x64-10

namespace {

constexpr std::uint64_t kM0 = 0xD2E7470EE14C6C93ULL;
constexpr std::uint64_t kM1 = 0xCA5A826395121157ULL;
constexpr std::uint64_t kW0 = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kW1 = 0xBB67AE8584CAA73BULL;

inline void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
    const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
    hi = static_cast<std::uint64_t>(p >> 64);
    lo = static_cast<std::uint64_t>(p);
}

}  // namespace

Philox4x64::Philox4x64(Key key, Block counter) : key_(key), counter_(counter) {}

Philox4x64::Block Philox4x64::block(Block ctr, Key key) {
    for (int r = 0; r < 10; ++r) {
        std::uint64_t hi0, lo0, hi1, lo1;
        mulhilo(kM0, ctr[0], hi0, lo0);
        mulhilo(kM1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kW0;
        key[1] += kW1;
    }
    return ctr;
}

Philox4x64::result_type Philox4x64::operator()() {
    if (pos_ == 4) {
        for (auto& w : counter_)
            if (++w != 0) break;
        buffer_ = block(counter_, key_);
        pos_ = 0;
    }
    return buffer_[static_cast<std::size_t>(pos_++)];
}

double Philox4x64::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

// ---------------------------------------------------------------------------
// Config files

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || trim(v.substr(used)) != "") throw ConfigError("'" + key + "': not a number: " + v);
    return out;
}

long to_long(const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (d != std::floor(d) || std::abs(d) > 1e15) throw ConfigError("'" + key + "': not an integer: " + v);
    return static_cast<long>(d);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    std::uint64_t out = 0;
    try {
        if (!v.empty() && v[0] != '-') out = std::stoull(v, &used, 0);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || trim(v.substr(used)) != "") throw ConfigError("'" + key + "': not an unsigned integer: " + v);
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    throw ConfigError("'" + key + "': not a boolean: " + v);
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    for (std::string item; std::getline(ss, item, ',');) out.push_back(to_double(key, trim(item)));
    return out;
}

}  // namespace

ConfigFile ConfigFile::parse(std::istream& in) {
    ConfigFile f;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": unterminated section");
            const std::string name = trim(line.substr(1, line.size() - 2));
            if (name.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
            if (f.has(name)) throw ConfigError("line " + std::to_string(lineno) + ": repeated section [" + name + "]");
            f.sections_.push_back({name, {}});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        if (f.sections_.empty()) throw ConfigError("line " + std::to_string(lineno) + ": key outside a section");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        f.sections_.back().second.push_back({key, trim(line.substr(eq + 1))});
    }
    return f;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    return parse(in);
}

bool ConfigFile::has(const std::string& section) const {
    return std::any_of(sections_.begin(), sections_.end(), [&](const auto& s) { return s.first == section; });
}

const ConfigFile::Entries& ConfigFile::entries(const std::string& section) const {
    static const Entries empty;
    for (const auto& s : sections_)
        if (s.first == section) return s.second;
    return empty;
}

std::vector<std::string> ConfigFile::sections() const {
    std::vector<std::string> out;
    for (const auto& s : sections_) out.push_back(s.first);
    return out;
}

WaveSource parse_wavefunction(const ConfigFile::Entries& entries) {
    WaveSource src;
    Preset preset;
    bool named = false, seen_param = false, seen_c = false;
    double c = preset.c;
    std::vector<Term> terms;
    for (const auto& [key, value] : entries) {
        if (key == "preset") {
            if (named) throw ConfigError("'preset' given twice");
            preset.family = family_from_string(value);
            named = true;
        } else if (key == "a") {
            preset.a = to_double(key, value), seen_param = true;
        } else if (key == "b") {
            preset.b = to_double(key, value), seen_param = true;
        } else if (key == "eps") {
            preset.eps = to_double(key, value), seen_param = true;
        } else if (key == "c") {
            c = to_double(key, value), seen_c = true;
        } else if (key == "term") {
            const auto v = to_list(key, value);
            if (v.size() != 4 || v[0] != std::floor(v[0]) || v[1] != std::floor(v[1]))
                throw ConfigError("'term' expects n1, n2, re, im");
            terms.push_back({static_cast<int>(v[0]), static_cast<int>(v[1]), {v[2], v[3]}});
        } else {
            throw ConfigError("unknown key '" + key + "' in [wavefunction]");
        }
    }
    if (named == !terms.empty()) throw ConfigError("[wavefunction] needs exactly one of 'preset' or 'term' lines");
    if (!named && seen_param) throw ConfigError("a, b and eps apply to presets only");
    if (named) {
        if (seen_c) preset.c = c;
        src.preset = preset;
        src.spec = preset.spec();
    } else {
        src.spec.terms = terms;
        src.spec.c = c;
    }
    src.spec.validate();
    return src;
}

void EnsembleConfig::validate() const {
    auto bad_box = [](const Box& b) {
        return !(b.x_min < b.x_max) || !(b.y_min < b.y_max) || !std::isfinite(b.x_min + b.x_max + b.y_min + b.y_max);
    };
    if (bad_box(box)) throw ConfigError("ensemble box is empty");
    if (n_orbits < 1) throw ConfigError("n_orbits must be at least 1");
    if (!(t_end > 0.0) || !std::isfinite(t_end)) throw ConfigError("t_end must be positive");
    if (!(bin_width > 0.0)) throw ConfigError("bin_width must be positive");
    if (workers < 1) throw ConfigError("workers must be at least 1");
    if (!(track_dt > 0.0)) throw ConfigError("track_dt must be positive");
    if (!(encounters.window > 0.0) || !(encounters.d_max >= 0.0)) throw ConfigError("invalid encounter settings");
    if (!(trace.tol > 0.0) || !(trace.kappa > 0.0)) throw ConfigError("invalid integrator settings");
    if (scan) {
        if (bad_box(scan_box)) throw ConfigError("scan box is empty");
        if (!(scan_dt > 0.0) || !(scan_t_end > 0.0)) throw ConfigError("invalid scan range");
        if (!(rx_bin_width > 0.0)) throw ConfigError("rx_bin_width must be positive");
    }
    preset.spec().validate();
}

EnsembleConfig parse_ensemble_config(const ConfigFile& file) {
    for (const auto& s : file.sections())
        if (s != "wavefunction" && s != "ensemble" && s != "encounters" && s != "output")
            throw ConfigError("unknown section [" + s + "]");
    EnsembleConfig cfg;
    const WaveSource src = parse_wavefunction(file.entries("wavefunction"));
    if (!src.preset) throw ConfigError("ensembles need a named preset (encounters use its nodal formulas)");
    cfg.preset = *src.preset;

    for (const auto& [key, v] : file.entries("ensemble")) {
        if (key == "n_orbits") cfg.n_orbits = static_cast<int>(to_long(key, v));
        else if (key == "t_end") cfg.t_end = to_double(key, v);
        else if (key == "seed") cfg.seed = to_u64(key, v);
        else if (key == "workers") cfg.workers = static_cast<int>(to_long(key, v));
        else if (key == "x_min") cfg.box.x_min = to_double(key, v);
        else if (key == "x_max") cfg.box.x_max = to_double(key, v);
        else if (key == "y_min") cfg.box.y_min = to_double(key, v);
        else if (key == "y_max") cfg.box.y_max = to_double(key, v);
        else if (key == "bin_width") cfg.bin_width = to_double(key, v);
        else if (key == "tol") cfg.trace.tol = to_double(key, v);
        else if (key == "kappa") cfg.trace.kappa = to_double(key, v);
        else throw ConfigError("unknown key '" + key + "' in [ensemble]");
    }
    for (const auto& [key, v] : file.entries("encounters")) {
        if (key == "d_max") cfg.encounters.d_max = to_double(key, v);
        else if (key == "window") cfg.encounters.window = to_double(key, v);
        else if (key == "delta") cfg.encounters.delta = to_double(key, v);
        else if (key == "margin") cfg.encounters.margin = to_double(key, v);
        else if (key == "max_rx") cfg.encounters.max_rx = to_double(key, v);
        else if (key == "r_max") cfg.corrected_r_max = to_double(key, v);
        else if (key == "track_dt") cfg.track_dt = to_double(key, v);
        else throw ConfigError("unknown key '" + key + "' in [encounters]");
    }
    bool scan_end = false;
    for (const auto& [key, v] : file.entries("output")) {
        if (key == "scan") cfg.scan = to_bool(key, v);
        else if (key == "scan_dt") cfg.scan_dt = to_double(key, v);
        else if (key == "scan_t_end") cfg.scan_t_end = to_double(key, v), scan_end = true;
        else if (key == "scan_box") {
            const auto b = to_list(key, v);
            if (b.size() != 4) throw ConfigError("'scan_box' expects x_min, x_max, y_min, y_max");
            cfg.scan_box = {b[0], b[1], b[2], b[3]};
        } else if (key == "rx_bin_width") cfg.rx_bin_width = to_double(key, v);
        else throw ConfigError("unknown key '" + key + "' in [output]");
    }
    if (!scan_end) cfg.scan_t_end = cfg.t_end;
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Statistics

std::size_t Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

Histogram histogram(std::span<const double> values, double width, double anchor) {
    if (!(width > 0.0)) throw ConfigError("histogram bin width must be positive");
    Histogram h;
    h.width = width;
    h.anchor = anchor;
    std::vector<long> bins;
    for (double v : values)
        if (std::isfinite(v)) bins.push_back(static_cast<long>(std::floor((v - anchor) / width + 0.5)));
    if (bins.empty()) return h;
    const auto [lo, hi] = std::minmax_element(bins.begin(), bins.end());
    h.first = *lo;
    h.counts.assign(static_cast<std::size_t>(*hi - *lo + 1), 0);
    for (long k : bins) ++h.counts[static_cast<std::size_t>(k - h.first)];
    return h;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ConfigError("spearman: size mismatch");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (x.size() < 2) return nan;
    const auto rx = ranks(x), ry = ranks(y);
    const double n = static_cast<double>(x.size());
    const double mean = (n + 1.0) / 2.0;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mean) * (ry[i] - mean);
        sxx += (rx[i] - mean) * (rx[i] - mean);
        syy += (ry[i] - mean) * (ry[i] - mean);
    }
    if (sxx == 0.0 || syy == 0.0) return nan;
    return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Runs

namespace {

// Runs job(i) for i in [0, n) on a shared index queue.
template <class Job>
void parallel_for(std::size_t n, int workers, Job job) {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) job(i);
    };
    const auto w = static_cast<std::size_t>(std::max(1, workers));
    std::vector<std::thread> pool;
    for (std::size_t i = 1; i < std::min(w, n); ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
}

}  // namespace

Vec2 ensemble_initial_condition(const EnsembleConfig& cfg, std::uint64_t index) {
    Philox4x64 g({cfg.seed, index});
    const double ux = g.uniform(), uy = g.uniform();
    return {cfg.box.x_min + ux * (cfg.box.x_max - cfg.box.x_min), cfg.box.y_min + uy * (cfg.box.y_max - cfg.box.y_min)};
}

ComplexScan complex_scan(const Preset& preset, double t_end, double dt, const Box& box, double log_bin_width,
                         int workers, const XPointOptions& opt) {
    if (!(dt > 0.0) || !(t_end > 0.0)) throw ConfigError("invalid scan range");
    const ComplexTrack track = ComplexTrack::build(preset, t_end, dt, workers, opt);
    ComplexScan out;
    std::vector<double> logs;
    double sum = 0.0;
    for (std::size_t k = 1; k < track.size(); ++k) {
        ++out.samples;
        for (const ComplexSlot& s : track.at(k)) {
            if (!std::isfinite(s.node_x) || !box.contains({s.node_x, s.node_y})) continue;
            if (!(s.r_x > 0.0f)) {
                ++out.failures;
                continue;
            }
            ++out.count;
            sum += s.r_x;
            logs.push_back(std::log10(static_cast<double>(s.r_x)));
        }
    }
    out.mean_rx = out.count ? sum / static_cast<double>(out.count) : std::numeric_limits<double>::quiet_NaN();
    out.log10_rx = histogram(logs, log_bin_width, 0.0);
    return out;
}

EnsembleReport run_ensemble(const EnsembleConfig& cfg) {
    cfg.validate();
    EnsembleReport rep;
    rep.config = cfg;
    const Flow flow = make_flow(cfg.preset);
    const ComplexTrack track = ComplexTrack::build(cfg.preset, cfg.t_end, cfg.track_dt, cfg.workers);
    TraceOptions trace = cfg.trace;
    trace.store_samples = false;

    rep.rows.resize(static_cast<std::size_t>(cfg.n_orbits));
    parallel_for(rep.rows.size(), cfg.workers, [&](std::size_t i) {
        OrbitRow& row = rep.rows[i];
        row.index = i;
        row.initial = ensemble_initial_condition(cfg, i);
        try {
            const TrajectoryRecord r = integrate_variational(flow, row.initial, cfg.t_end, trace, &track, cfg.encounters);
            row.steps = r.steps;
            row.n_raw = static_cast<int>(r.encounters.size());
            row.n_corrected = static_cast<int>(corrected_encounters(r.encounters, cfg.corrected_r_max));
            row.status = to_string(r.status);
            row.message = r.message;
            if (r.status == TrajectoryStatus::ok) row.chi = r.chi_final();
        } catch (const NoConvergence& e) {
            row.status = "NoConvergence";
            row.message = e.what();
        } catch (const std::exception& e) {
            row.status = "Error";
            row.message = e.what();
        }
    });

    std::vector<double> chis;
    for (const OrbitRow& row : rep.rows) {
        if (row.failed()) ++rep.failures;
        chis.push_back(row.chi);
    }
    rep.chi_hist = histogram(chis, cfg.bin_width, 0.0);
    if (cfg.scan) rep.scan = complex_scan(cfg.preset, cfg.scan_t_end, cfg.scan_dt, cfg.scan_box, cfg.rx_bin_width, cfg.workers);
    return rep;
}

std::vector<ChiN> chi_vs_n_table(const EnsembleReport& report) {
    std::vector<ChiN> out;
    for (const OrbitRow& r : report.rows)
        if (!r.failed()) out.push_back({r.chi, r.n_raw, r.n_corrected});
    return out;
}

// ---------------------------------------------------------------------------
// Output

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_report(const EnsembleReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) throw ConfigError("cannot write " + (dir / name).string());
        return f;
    };
    {
        auto f = open("orbits.csv");
        f << "index,x0,y0,chi,n_raw,n_corrected,status,steps\n";
        for (const OrbitRow& r : report.rows)
            f << r.index << ',' << format_double(r.initial.x) << ',' << format_double(r.initial.y) << ','
              << format_double(r.chi) << ',' << r.n_raw << ',' << r.n_corrected << ',' << r.status << ',' << r.steps
              << '\n';
    }
    auto write_hist = [&](const char* name, const char* column, const Histogram& h) {
        auto f = open(name);
        f << column << ",count\n";
        for (std::size_t i = 0; i < h.counts.size(); ++i) f << format_double(h.center(i)) << ',' << h.counts[i] << '\n';
    };
    write_hist("chi_hist.csv", "chi", report.chi_hist);
    write_hist("rx_hist.csv", "log10_rx", report.scan ? report.scan->log10_rx : Histogram{});

    auto f = open("events.log");
    const EnsembleConfig& c = report.config;
    f << "preset " << to_string(c.preset.family) << " a=" << format_double(c.preset.a)
      << " b=" << format_double(c.preset.b) << " eps=" << format_double(c.preset.eps)
      << " c=" << format_double(c.preset.c) << '\n';
    f << "orbits " << c.n_orbits << " t_end " << format_double(c.t_end) << " seed " << c.seed << '\n';
    for (const OrbitRow& r : report.rows)
        if (r.failed()) f << "orbit " << r.index << ' ' << r.status << ": " << r.message << '\n';
    f << "failures " << report.failures << '\n';
    if (report.scan) {
        const ComplexScan& s = *report.scan;
        f << "complex_scan samples " << s.samples << " complexes " << s.count << " rejected " << s.failures
          << " mean_rx " << format_double(s.mean_rx) << '\n';
    }
}

}  // namespace vortexflow
