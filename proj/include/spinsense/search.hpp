// search.hpp: exhaustive grids over measurement angles, two-stage t* scans
// (magnetization, fidelity, uncertainty) and parameter sweeps built on them.

#pragma once

#include "spinsense/kernel.hpp"
#include "spinsense/noise.hpp"
#include "spinsense/parallel.hpp"
#include "spinsense/protocol.hpp"
#include "spinsense/spin_models.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace spinsense {

// Relative margin a candidate must win by to displace an earlier grid point.
inline constexpr double kTieTolerance = 1e-9;

inline bool strictly_better(double candidate, double incumbent, bool maximize) {
    if (!std::isfinite(candidate)) return false;
    if (!std::isfinite(incumbent)) return true;
    const double margin = kTieTolerance * std::max(1.0, std::abs(incumbent));
    return maximize ? candidate > incumbent + margin : candidate < incumbent - margin;
}

// ---------------------------- grids ----------------------------------------

struct ScanGrid {
    std::string axis = "t_star";
    double start = 0.0;
    double stop = 100.0;
    double coarse_step = 0.25;
    double fine_step = 0.05;
    double window = 5.0;  // refinement half-width

    void validate() const {
        if (!(start < stop)) throw std::invalid_argument("ScanGrid: start must be < stop");
        if (!(coarse_step > 0.0) || !(fine_step > 0.0) || !(window >= 0.0))
            throw std::invalid_argument("ScanGrid: steps must be > 0 and window >= 0");
        if (fine_step > coarse_step) throw std::invalid_argument("ScanGrid: fine step must be <= coarse step");
    }

    // start + k * coarse_step for all k with value <= stop.
    std::vector<double> coarse_points() const {
        validate();
        std::vector<double> v;
        const auto count = static_cast<long>(std::floor((stop - start) / coarse_step + 1e-9));
        for (long k = 0; k <= count; ++k) v.push_back(start + static_cast<double>(k) * coarse_step);
        return v;
    }

    // center + k * fine_step within the window, clipped to [start, stop].
    std::vector<double> fine_points(double center) const {
        validate();
        std::vector<double> v;
        const auto half = static_cast<long>(std::floor(window / fine_step + 1e-9));
        for (long k = -half; k <= half; ++k) {
            const double t = center + static_cast<double>(k) * fine_step;
            if (t >= start - 1e-12 && t <= stop + 1e-12) v.push_back(std::max(t, start));
        }
        return v;
    }
};

struct SweepPoint {
    double x = 0.0;
    double value = std::numeric_limits<double>::quiet_NaN();
    bool beats_sql = false;
    std::optional<SensingOutcome> outcome;  // uncertainty objective only
};

struct SweepResult {
    std::vector<SweepPoint> coarse;
    std::vector<SweepPoint> fine;
    double argopt = std::numeric_limits<double>::quiet_NaN();
    double best = std::numeric_limits<double>::quiet_NaN();
    double coarse_argopt = std::numeric_limits<double>::quiet_NaN();  // optimum of the coarse pass
    std::optional<SensingOutcome> best_outcome;
    double t_range = 0.0;  // coarse points beating the SQL times the coarse step
    bool failed = false;   // no valid point
    bool maximize = false;

    // All evaluated points, fine pass last.
    std::vector<SweepPoint> all_points() const {
        std::vector<SweepPoint> v = coarse;
        v.insert(v.end(), fine.begin(), fine.end());
        return v;
    }
};

// ---------------------------- angles ---------------------------------------

struct AngleSample {
    double theta = 0.0;
    double phi = 0.0;
    double value = 0.0;
};

struct AngleSearch {
    AngleSample best;
    std::vector<AngleSample> surface;  // theta-major order
};

inline int grid_divisions(double range, double step, const char* what) {
    if (!(step > 0.0)) throw std::invalid_argument(std::string("grid_search_angles: ") + what + " step must be > 0");
    const double k = range / step;
    const double r = std::round(k);
    if (std::abs(k - r) > 1e-9 * std::max(1.0, k) || r < 1)
        throw std::invalid_argument(std::string("grid_search_angles: ") + what + " step must divide its range");
    return static_cast<int>(r);
}

// Maximizes objective over theta in [0, pi] and phi in [0, 2pi). Ties go to
// the smallest theta, then the smallest phi.
inline AngleSearch grid_search_angles(const std::function<double(double, double)>& objective, double step_theta,
                                      double step_phi, int workers = 1) {
    const int nt = grid_divisions(std::numbers::pi, step_theta, "theta");
    const int np = grid_divisions(2.0 * std::numbers::pi, step_phi, "phi");
    const std::size_t total = static_cast<std::size_t>(nt + 1) * static_cast<std::size_t>(np);
    AngleSearch out;
    out.surface = parallel_map<AngleSample>(total, workers, [&](std::size_t idx) {
        const int i = static_cast<int>(idx / static_cast<std::size_t>(np));
        const int j = static_cast<int>(idx % static_cast<std::size_t>(np));
        const double th = std::numbers::pi * i / nt;
        const double ph = 2.0 * std::numbers::pi * j / np;
        return AngleSample{th, ph, objective(th, ph)};
    });
    out.best = out.surface.front();
    for (const auto& s : out.surface)
        if (strictly_better(s.value, out.best.value, true)) out.best = s;
    return out;
}

// ---------------------------- t* scans -------------------------------------

enum class Objective { Magnetization, Fidelity, Uncertainty };

inline const char* to_string(Objective o) {
    switch (o) {
        case Objective::Magnetization: return "magnetization";
        case Objective::Fidelity: return "fidelity";
        case Objective::Uncertainty: return "uncertainty";
    }
    return "?";
}

// How the magnetization optimum is picked on the coarse grid.
enum class PeakPolicy {
    Global,          // plain argmax over the grid
    FirstDominant,   // first local max a with m(a) = max over [start, 2a]
};

// One probe configuration evaluated on every slice of an uncertainty scan.
struct ProbeSetting {
    double omega = 1e-6;
    double tau = 1000.0 * std::numbers::pi;  // probe exposure
    double t_dph = std::numeric_limits<double>::infinity();
};

struct ScanOptions {
    int workers = 1;
    bool coarse_only = false;
    PeakPolicy peak = PeakPolicy::FirstDominant;
};

namespace detail {

inline void finalize(SweepResult& r, const ScanGrid& grid, bool maximize) {
    r.maximize = maximize;
    r.failed = true;
    auto consider = [&](const SweepPoint& p) {
        if (!std::isfinite(p.value)) return;
        if (r.failed || strictly_better(p.value, r.best, maximize)) {
            r.best = p.value;
            r.argopt = p.x;
            r.best_outcome = p.outcome;
            r.failed = false;
        }
    };
    for (const auto& p : r.coarse) consider(p);
    r.coarse_argopt = r.argopt;
    for (const auto& p : r.fine) consider(p);
    long beats = 0;
    for (const auto& p : r.coarse) beats += p.beats_sql ? 1 : 0;
    r.t_range = static_cast<double>(beats) * grid.coarse_step;
}

inline std::size_t first_dominant_peak(const std::vector<SweepPoint>& pts) {
    std::size_t global = 0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        if (pts[i].value > pts[global].value) global = i;
    const double floor = 0.5 * pts[global].value;
    const double t0 = pts.front().x;
    for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
        const double v = pts[i].value;
        if (!(v > pts[i - 1].value && v >= pts[i + 1].value) || v < floor) continue;
        const double limit = t0 + 2.0 * (pts[i].x - t0);
        bool dominant = true;
        for (std::size_t j = 0; j < pts.size() && pts[j].x <= limit + 1e-12; ++j)
            if (pts[j].value > v) {
                dominant = false;
                break;
            }
        if (dominant) return i;
    }
    return global;
}

}  // namespace detail

// Cheap objectives (magnetization, fidelity): both maximized.
inline SweepResult scan_tstar_cheap(const SensorEngine& engine, const ScanGrid& grid, Objective objective,
                                    const ScanOptions& opts = {}) {
    if (objective == Objective::Uncertainty) throw std::invalid_argument("scan_tstar_cheap: use scan_uncertainty");
    auto eval = [&](double t) {
        return objective == Objective::Magnetization ? engine.magnetization(t) : engine.fidelity(t);
    };
    SweepResult r;
    const auto coarse = grid.coarse_points();
    const auto values = parallel_map<double>(coarse.size(), opts.workers, [&](std::size_t i) { return eval(coarse[i]); });
    for (std::size_t i = 0; i < coarse.size(); ++i) r.coarse.push_back({coarse[i], values[i], false, std::nullopt});
    std::size_t center = 0;
    if (objective == Objective::Magnetization && opts.peak == PeakPolicy::FirstDominant) {
        center = detail::first_dominant_peak(r.coarse);
    } else {
        for (std::size_t i = 0; i < r.coarse.size(); ++i)
            if (strictly_better(r.coarse[i].value, r.coarse[center].value, true)) center = i;
    }
    r.coarse_argopt = r.coarse[center].x;
    if (!opts.coarse_only) {
        const double c = r.coarse[center].x;
        for (double t : grid.fine_points(c)) r.fine.push_back({t, eval(t), false, std::nullopt});
        // Restrict the optimum to the refinement window around the chosen peak.
        SweepResult local;
        local.coarse = {r.coarse[center]};
        local.fine = r.fine;
        detail::finalize(local, grid, true);
        r.best = local.best;
        r.argopt = local.argopt;
        r.failed = local.failed;
        r.maximize = true;
        r.coarse_argopt = r.coarse[center].x;
        return r;
    }
    r.best = r.coarse[center].value;
    r.argopt = r.coarse[center].x;
    r.failed = !std::isfinite(r.best);
    r.maximize = true;
    return r;
}

// Called after each coarse or fine batch with the points computed so far.
using ScanProgress = std::function<void(const std::string& stage, std::size_t done, std::size_t total)>;

// Minimizes the scaled uncertainty over t* for every probe setting at once;
// each slice is computed once and shared by all settings.
inline std::vector<SweepResult> scan_uncertainty(const SensorEngine& engine, const ScanGrid& grid,
                                                 const std::vector<ProbeSetting>& probes,
                                                 const ScanOptions& opts = {}) {
    if (probes.empty()) throw std::invalid_argument("scan_uncertainty: no probe settings");
    auto eval = [&](double t) {
        const auto s = engine.slice(t);
        std::vector<SensingOutcome> out;
        out.reserve(probes.size());
        for (const auto& p : probes) out.push_back(engine.outcome(s, p.omega, p.tau, p.t_dph));
        return out;
    };
    auto point = [](double t, const SensingOutcome& o) {
        return SweepPoint{t, o.derivative_valid ? o.scaled_uncertainty : std::numeric_limits<double>::infinity(),
                          o.beats_sql, o};
    };
    std::vector<SweepResult> results(probes.size());
    const auto coarse = grid.coarse_points();
    const auto cvals = parallel_map<std::vector<SensingOutcome>>(coarse.size(), opts.workers,
                                                                 [&](std::size_t i) { return eval(coarse[i]); });
    for (std::size_t k = 0; k < probes.size(); ++k) {
        for (std::size_t i = 0; i < coarse.size(); ++i) results[k].coarse.push_back(point(coarse[i], cvals[i][k]));
        detail::finalize(results[k], grid, false);
    }
    if (opts.coarse_only) return results;

    // Union of refinement windows, keyed on the fine-grid index to dedupe.
    std::map<long, double> fine_set;
    std::vector<std::vector<long>> wanted(probes.size());
    for (std::size_t k = 0; k < probes.size(); ++k) {
        if (results[k].failed) continue;
        for (double t : grid.fine_points(results[k].argopt)) {
            const long key = std::lround((t - grid.start) / grid.fine_step);
            fine_set.emplace(key, t);
            wanted[k].push_back(key);
        }
    }
    std::vector<long> keys;
    std::vector<double> ts;
    for (const auto& [key, t] : fine_set) {
        keys.push_back(key);
        ts.push_back(t);
    }
    const auto fvals = parallel_map<std::vector<SensingOutcome>>(ts.size(), opts.workers,
                                                                 [&](std::size_t i) { return eval(ts[i]); });
    std::map<long, std::size_t> where;
    for (std::size_t i = 0; i < keys.size(); ++i) where[keys[i]] = i;
    for (std::size_t k = 0; k < probes.size(); ++k) {
        for (long key : wanted[k]) {
            const auto i = where.at(key);
            results[k].fine.push_back(point(ts[i], fvals[i][k]));
        }
        detail::finalize(results[k], grid, false);
    }
    return results;
}

inline SweepResult scan_tstar(const SensorEngine& engine, const ScanGrid& grid, Objective objective,
                              const ProbeSetting& probe = {}, const ScanOptions& opts = {}) {
    if (objective != Objective::Uncertainty) return scan_tstar_cheap(engine, grid, objective, opts);
    return scan_uncertainty(engine, grid, {probe}, opts).front();
}

// ---------------------------- sweeps ---------------------------------------

// Scan policy shared by sweeps: the uncertainty window is [start, stop] when
// stop > start, else [start, 2 x magnetization optimum].
struct TStarPolicy {
    ScanGrid grid;                  // uncertainty grid; stop <= start means automatic
    double magnetization_horizon = 4000.0;
    ScanOptions options;
};

struct CellResult {
    double axis_value = 0.0;
    ModelSpec spec;
    ProtocolConfig cfg;
    double t_search = 0.0;           // upper end of the uncertainty window
    double t_opt_magnetization = std::numeric_limits<double>::quiet_NaN();
    double magnetization_max = std::numeric_limits<double>::quiet_NaN();
    std::vector<SweepResult> uncertainty;  // one per probe setting
};

inline SweepResult magnetization_scan(const SensorEngine& engine, const TStarPolicy& policy) {
    ScanGrid mg = policy.grid;
    mg.axis = "t_star";
    mg.stop = policy.magnetization_horizon;
    return scan_tstar_cheap(engine, mg, Objective::Magnetization, policy.options);
}

// Uncertainty grid of the policy; an automatic stop comes from the coarse
// magnetization optimum, which is also returned through mag when given.
inline ScanGrid uncertainty_grid(const SensorEngine& engine, const TStarPolicy& policy,
                                 SweepResult* mag = nullptr) {
    ScanGrid ug = policy.grid;
    const auto m = magnetization_scan(engine, policy);
    if (!(ug.stop > ug.start)) ug.stop = ug.start + 2.0 * std::max(m.coarse_argopt - ug.start, ug.coarse_step);
    if (mag) *mag = m;
    return ug;
}

inline CellResult run_cell(const ModelSpec& spec, const ProtocolConfig& cfg, const std::vector<ProbeSetting>& probes,
                           const TStarPolicy& policy) {
    CellResult cell;
    cell.spec = spec;
    cell.cfg = cfg;
    const SensorEngine engine(spec, cfg);
    SweepResult mag;
    const ScanGrid ug = uncertainty_grid(engine, policy, &mag);
    cell.t_opt_magnetization = mag.argopt;
    cell.magnetization_max = mag.best;
    cell.t_search = ug.stop;
    cell.uncertainty = scan_uncertainty(engine, ug, probes, policy.options);
    return cell;
}

enum class SweepAxis { CoordN, Alpha, Hx, Beta };

inline const char* to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::CoordN: return "coord_n";
        case SweepAxis::Alpha: return "alpha";
        case SweepAxis::Hx: return "hx";
        case SweepAxis::Beta: return "beta";
    }
    return "?";
}

inline void apply_axis(SweepAxis axis, double value, ModelSpec& spec, ProtocolConfig& cfg) {
    switch (axis) {
        case SweepAxis::CoordN: spec.coord_n = static_cast<int>(std::lround(value)); break;
        case SweepAxis::Alpha: spec.alpha = value; break;
        case SweepAxis::Hx: std::fill(spec.fields_x.begin(), spec.fields_x.end(), value); break;
        case SweepAxis::Beta: cfg.beta = value; break;
    }
}

struct SweepRow {
    double axis_value = 0.0;
    double delta_min = std::numeric_limits<double>::infinity();
    bool beats_sql = false;
    double t_opt = std::numeric_limits<double>::quiet_NaN();
    double t_range = 0.0;
    std::optional<SensingOutcome> outcome;
};

inline SweepRow summarize(double axis_value, const SweepResult& r) {
    SweepRow row;
    row.axis_value = axis_value;
    if (r.failed) return row;
    row.delta_min = r.best;
    row.t_opt = r.argopt;
    row.t_range = r.t_range;
    row.outcome = r.best_outcome;
    row.beats_sql = r.best_outcome && r.best_outcome->beats_sql;
    return row;
}

// Runs a full t* uncertainty scan per axis value and reports the minimum.
inline std::vector<SweepRow> sweep_parameter(SweepAxis axis, const std::vector<double>& values, const ModelSpec& spec,
                                             const ProtocolConfig& cfg, const TStarPolicy& policy,
                                             const ProbeSetting& probe) {
    if (values.empty()) throw std::invalid_argument("sweep_parameter: values must be non-empty");
    std::vector<SweepRow> rows;
    for (double v : values) {
        ModelSpec s = spec;
        ProtocolConfig c = cfg;
        apply_axis(axis, v, s, c);
        rows.push_back(summarize(v, run_cell(s, c, {probe}, policy).uncertainty.front()));
    }
    return rows;
}

// For beta sweeps: beatsSQL should hold for every beta above the first one
// that beats it. Returns the sampled betas that break this pattern.
inline std::vector<double> beta_upset_violations(const std::vector<SweepRow>& rows) {
    std::vector<SweepRow> sorted = rows;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.axis_value < b.axis_value; });
    std::vector<double> bad;
    bool seen = false;
    for (const auto& r : sorted) {
        if (r.beats_sql) seen = true;
        else if (seen) bad.push_back(r.axis_value);
    }
    return bad;
}

struct CouplingRow {
    double jx = 0.0, jy = 0.0, jz = 0.0;
    int coord_n = 1;
    SweepRow row;
};

inline std::vector<CouplingRow> scan_couplings(const std::vector<std::array<double, 3>>& triples,
                                               const std::vector<int>& coord_values, const ModelSpec& spec,
                                               const ProtocolConfig& cfg, const TStarPolicy& policy,
                                               const ProbeSetting& probe) {
    std::vector<CouplingRow> out;
    for (const auto& j : triples)
        for (int z : coord_values) {
            ModelSpec s = spec;
            s.jx = j[0];
            s.jy = j[1];
            s.jz = j[2];
            s.coord_n = z;
            out.push_back({j[0], j[1], j[2], z, summarize(z, run_cell(s, cfg, {probe}, policy).uncertainty.front())});
        }
    return out;
}

struct TintOpenResult {
    double t_int_open = std::numeric_limits<double>::quiet_NaN();
    SweepRow best;
    std::vector<SweepRow> per_tint;  // axis_value = tIntOpen
    bool zeno_warning = false;
};

// argmin over tIntOpen of the min-over-t* noisy uncertainty.
inline TintOpenResult optimize_tint_open(const SensorEngine& engine, const ScanGrid& grid,
                                         const std::vector<double>& t_int_open_grid, double t_dph, double omega,
                                         const ScanOptions& opts = {}) {
    if (t_int_open_grid.empty()) throw std::invalid_argument("optimize_tint_open: empty grid");
    std::vector<ProbeSetting> probes;
    for (double tau : t_int_open_grid) probes.push_back({omega, tau, t_dph});
    const auto scans = scan_uncertainty(engine, grid, probes, opts);
    TintOpenResult r;
    for (std::size_t k = 0; k < scans.size(); ++k) {
        r.per_tint.push_back(summarize(t_int_open_grid[k], scans[k]));
        if (DephasingSpec{t_dph, t_int_open_grid[k]}.zeno_warning()) r.zeno_warning = true;
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < r.per_tint.size(); ++k)
        if (strictly_better(r.per_tint[k].delta_min, r.per_tint[best].delta_min, false)) best = k;
    r.best = r.per_tint[best];
    r.t_int_open = t_int_open_grid[best];
    return r;
}

}  // namespace spinsense
