#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vortexflow/complex_analysis.hpp"
#include "vortexflow/dynamics.hpp"
#include "vortexflow/wavefield.hpp"

namespace vortexflow {

/// Philox4x64-10 counter-based generator.  The output stream matches
/// numpy.random.Philox with the same key and counter: the counter is
/// incremented before each block of four words.
class Philox4x64 {
public:
    using result_type = std::uint64_t;
    using Block = std::array<std::uint64_t, 4>;
    using Key = std::array<std::uint64_t, 2>;

    explicit Philox4x64(Key key, Block counter = {});

    static Block block(Block counter, Key key);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()();
    /// Uniform on [0, 1) from the top 53 bits.
    double uniform();

private:
    Key key_;
    Block counter_;
    Block buffer_{};
    int pos_ = 4;
};

/// Sections of a `[section]` / `key = value` text file.  Keys may repeat;
/// `#` and `;` start comments.
class ConfigFile {
public:
    using Entries = std::vector<std::pair<std::string, std::string>>;

    static ConfigFile parse(std::istream& in);
    static ConfigFile load(const std::filesystem::path& path);

    bool has(const std::string& section) const;
    const Entries& entries(const std::string& section) const;
    std::vector<std::string> sections() const;

private:
    std::vector<std::pair<std::string, Entries>> sections_;
};

/// A `[wavefunction]` section: either `preset = ...` with a, b, eps, c, or
/// explicit `term = n1, n2, re, im` lines with c.
struct WaveSource {
    std::optional<Preset> preset;
    WaveSpec spec;
};

WaveSource parse_wavefunction(const ConfigFile::Entries& entries);

struct Box {
    double x_min = -1.5, x_max = 1.5;
    double y_min = 0.0, y_max = 1.5;

    bool contains(Vec2 p) const { return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max; }
};

struct EnsembleConfig {
    Preset preset;
    Box box;
    int n_orbits = 100;
    double t_end = 1e4;
    std::uint64_t seed = 1;
    int workers = 1;
    TraceOptions trace;
    EncounterOptions encounters;
    double corrected_r_max = 0.5;
    double track_dt = 0.01;
    double bin_width = 0.005;
    /// Complex scan written to rx_hist.csv.
    bool scan = true;
    double scan_dt = 0.1;
    double scan_t_end = 1e4;
    Box scan_box{-3.0, 3.0, -3.0, 3.0};
    double rx_bin_width = 0.1;

    /// Throws ConfigError.
    void validate() const;
};

/// Reads `[wavefunction]`, `[ensemble]`, `[encounters]` and `[output]`.
/// Unknown sections or keys are ConfigErrors.
EnsembleConfig parse_ensemble_config(const ConfigFile& file);

/// Uniform initial condition of orbit `index`, drawn from its own substream.
Vec2 ensemble_initial_condition(const EnsembleConfig& cfg, std::uint64_t index);

struct Histogram {
    double width = 0.0;
    double anchor = 0.0;
    long first = 0;  // bin index of counts[0]
    std::vector<std::size_t> counts;

    /// Bin k covers [anchor + (k - 1/2) width, anchor + (k + 1/2) width).
    double center(std::size_t i) const { return anchor + static_cast<double>(first + static_cast<long>(i)) * width; }
    std::size_t total() const;
};

/// Non-finite values are skipped.  Throws ConfigError for width <= 0.
Histogram histogram(std::span<const double> values, double width, double anchor = 0.0);

struct OrbitRow {
    std::uint64_t index = 0;
    Vec2 initial;
    double chi = std::numeric_limits<double>::quiet_NaN();  // NaN for failed orbits
    int n_raw = 0;
    int n_corrected = 0;
    std::string status = "ok";
    std::string message;
    long steps = 0;

    bool failed() const { return status != "ok"; }
};

struct ComplexScan {
    std::size_t samples = 0;
    std::size_t count = 0;     // complexes with the node inside the box
    std::size_t failures = 0;  // nodes in the box without an accepted X-point
    double mean_rx = 0.0;
    Histogram log10_rx;
};

/// Every node of the preset at t = k dt, k = 1..floor(t_end/dt), inside `box`.
ComplexScan complex_scan(const Preset& preset, double t_end, double dt, const Box& box, double log_bin_width = 0.1,
                         int workers = 1, const XPointOptions& opt = {});

struct EnsembleReport {
    EnsembleConfig config;
    std::vector<OrbitRow> rows;
    Histogram chi_hist;
    std::size_t failures = 0;
    std::optional<ComplexScan> scan;
};

/// Orbits run on a shared index queue; rows are stored by index, so the
/// report does not depend on the worker count.
EnsembleReport run_ensemble(const EnsembleConfig& cfg);

struct ChiN {
    double chi;
    int n_raw;
    int n_corrected;
};

/// Successful orbits only.
std::vector<ChiN> chi_vs_n_table(const EnsembleReport& report);

/// Spearman rank correlation with average ranks for ties.  NaN when either
/// input is constant or shorter than 2.
double spearman(std::span<const double> x, std::span<const double> y);

/// %.17g, with "nan" for missing values.
std::string format_double(double v);

/// Writes orbits.csv, chi_hist.csv, rx_hist.csv and events.log into `dir`.
void write_report(const EnsembleReport& report, const std::filesystem::path& dir);

}  // namespace vortexflow
