// experiments.hpp: named experiments, each a set of sweep cells whose rows are
// checkpointed and finally written as CSV tables plus one manifest.

#pragma once

#include "spinsense/config.hpp"
#include "spinsense/kernel.hpp"
#include "spinsense/noise.hpp"
#include "spinsense/output.hpp"
#include "spinsense/parallel.hpp"
#include "spinsense/protocol.hpp"
#include "spinsense/search.hpp"
#include "spinsense/spin_models.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace spinsense {

struct RunOptions {
    std::filesystem::path out_dir = "out";
    int workers = 0;                     // 0: config value, then SPINSENSE_WORKERS, then hardware
    std::optional<std::uint64_t> seed;   // overrides the config seed
    bool coarse_only = false;            // forces scan.coarse_only
    std::function<void(const std::string&)> log;
};

struct RunReport {
    std::vector<std::filesystem::path> files;  // CSVs then the manifest
    std::string digest;
    double wall_seconds = 0.0;
    std::size_t resumed_cells = 0;
    std::vector<std::string> warnings;
};

namespace detail {

inline constexpr const char* kTime = "J^-1";
inline constexpr const char* kEnergy = "J";
inline constexpr const char* kUncertainty = "J^1/2";

class TableSet {
public:
    void declare(const std::string& name, std::vector<Column> columns) {
        tables_.push_back(Table{name, std::move(columns), {}});
    }
    void append(const CellRows& rows) {
        for (const auto& [name, list] : rows) {
            auto& t = get(name);
            for (const auto& r : list) t.add(r);
        }
    }
    Table& get(const std::string& name) {
        for (auto& t : tables_)
            if (t.name == name) return t;
        throw std::logic_error("TableSet: undeclared table '" + name + "'");
    }
    const std::vector<Table>& tables() const { return tables_; }

private:
    std::vector<Table> tables_;
};

struct RunContext {
    const ExperimentConfig& cfg;
    int workers = 1;
    Checkpoint& checkpoint;
    std::function<void(const std::string&)> log;
    std::vector<std::string> warnings;

    void say(const std::string& msg) const {
        if (log) log("[" + cfg.experiment + "] " + msg);
    }

    CellRows cell(const std::string& key, const std::function<CellRows()>& compute) {
        if (const auto* done = checkpoint.find(key)) {
            say(key + " resumed from checkpoint");
            return *done;
        }
        const auto t0 = std::chrono::steady_clock::now();
        CellRows rows = compute();
        checkpoint.record(key, rows);
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::ostringstream os;
        os << key << " done in " << format_number(std::round(s * 10.0) / 10.0) << " s";
        say(os.str());
        return rows;
    }

    TStarPolicy policy(int inner_workers) const {
        TStarPolicy p;
        p.grid = cfg.scan.grid;
        p.magnetization_horizon = cfg.scan.magnetization_horizon;
        p.options = ScanOptions{inner_workers, cfg.scan.coarse_only, cfg.scan.peak};
        return p;
    }

    ProbeSetting probe() const { return ProbeSetting{cfg.protocol.omega, cfg.protocol.t_int}; }
};

inline std::vector<Column> uncertainty_columns(Column axis, std::vector<Column> extra = {}) {
    std::vector<Column> c = {std::move(axis),
                             {"p", "1"},
                             {"dp_domega", kTime},
                             {"scaled_uncertainty", kUncertainty},
                             {"sql", kUncertainty},
                             {"hl", kUncertainty},
                             {"beats_sql", "bool"},
                             {"derivative_valid", "bool"}};
    c.insert(c.end(), extra.begin(), extra.end());
    return c;
}

inline Row outcome_row(double axis, const std::optional<SensingOutcome>& o, int n, double tau,
                       std::vector<std::string> extra = {}) {
    Row r;
    if (o) {
        r = {format_number(axis),          format_number(o->p),   format_number(o->dp_domega),
             format_number(o->scaled_uncertainty), format_number(o->sql), format_number(o->hl),
             format_bool(o->beats_sql),    format_bool(o->derivative_valid)};
    } else {
        r = {format_number(axis), "nan", "nan", "inf", format_number(sql_limit(n, tau)),
             format_number(hl_limit(n, tau)), "false", "false"};
    }
    r.insert(r.end(), extra.begin(), extra.end());
    return r;
}

inline std::string fmt_int(long v) { return std::to_string(v); }

inline std::string key_of(std::initializer_list<std::pair<const char*, double>> parts) {
    std::string k;
    for (const auto& [name, v] : parts) k += (k.empty() ? "" : ";") + std::string(name) + "=" + format_number(v);
    return k;
}

inline std::vector<Column> sweep_extra() {
    return {{"t_opt", kTime}, {"t_range", kTime}, {"t_search", kTime}};
}

inline std::vector<std::string> sweep_extra_cells(const CellResult& cell, const SweepResult& r) {
    return {format_number(r.failed ? std::numeric_limits<double>::quiet_NaN() : r.argopt), format_number(r.t_range),
            format_number(cell.t_search)};
}

// ---------------------------- t* curves ------------------------------------

inline void run_tstar_curves(RunContext& ctx, TableSet& out, const std::string& summary_name) {
    const auto& c = ctx.cfg;
    out.declare("uncertainty_tstar",
                uncertainty_columns({"t_star", kTime}, {{"coord_n", "sites"}, {"stage", "label"}}));
    out.declare(summary_name, {{"coord_n", "sites"},
                               {"t_opt_magnetization", kTime},
                               {"magnetization_max", "1"},
                               {"t_opt_uncertainty", kTime},
                               {"scaled_uncertainty_min", kUncertainty},
                               {"sql", kUncertainty},
                               {"hl", kUncertainty},
                               {"beats_sql", "bool"},
                               {"t_range", kTime},
                               {"t_search", kTime}});
    for (int z : c.sweep.coord_n) {
        out.append(ctx.cell(key_of({{"coord_n", z}}), [&] {
            ModelSpec spec = c.model;
            spec.coord_n = z;
            const auto cell = run_cell(spec, c.protocol, {ctx.probe()}, ctx.policy(ctx.workers));
            const auto& r = cell.uncertainty.front();
            CellRows rows;
            for (const auto* stage : {"coarse", "fine"})
                for (const auto& pt : std::string(stage) == "coarse" ? r.coarse : r.fine)
                    rows["uncertainty_tstar"].push_back(
                        outcome_row(pt.x, pt.outcome, spec.n, c.protocol.t_int, {fmt_int(z), stage}));
            const double sql = sql_limit(spec.n, c.protocol.t_int);
            rows[summary_name].push_back({fmt_int(z), format_number(cell.t_opt_magnetization),
                                          format_number(cell.magnetization_max),
                                          format_number(r.failed ? std::nan("") : r.argopt), format_number(r.best),
                                          format_number(sql), format_number(hl_limit(spec.n, c.protocol.t_int)),
                                          format_bool(!r.failed && r.best < sql), format_number(r.t_range),
                                          format_number(cell.t_search)});
            return rows;
        }));
    }
}

inline void run_magnetization(RunContext& ctx, TableSet& out) {
    const auto& c = ctx.cfg;
    out.declare("magnetization_tstar",
                {{"t_star", kTime}, {"magnetization_density", "1"}, {"coord_n", "sites"}, {"stage", "label"}});
    out.declare("magnetization_peaks",
                {{"coord_n", "sites"}, {"t_opt", kTime}, {"magnetization_max", "1"}, {"coarse_t_opt", kTime}});
    for (int z : c.sweep.coord_n) {
        out.append(ctx.cell(key_of({{"coord_n", z}}), [&] {
            ModelSpec spec = c.model;
            spec.coord_n = z;
            const SensorEngine engine(spec, c.protocol);
            const auto r = magnetization_scan(engine, ctx.policy(ctx.workers));
            CellRows rows;
            for (const auto& pt : r.coarse)
                rows["magnetization_tstar"].push_back(
                    {format_number(pt.x), format_number(pt.value), fmt_int(z), "coarse"});
            for (const auto& pt : r.fine)
                rows["magnetization_tstar"].push_back({format_number(pt.x), format_number(pt.value), fmt_int(z), "fine"});
            rows["magnetization_peaks"].push_back(
                {fmt_int(z), format_number(r.argopt), format_number(r.best), format_number(r.coarse_argopt)});
            return rows;
        }));
    }
}

// ---------------------------- angle maps -----------------------------------

inline double angle_step_theta(const ExperimentConfig& c) { return std::numbers::pi / c.scan.angle_divisions_theta; }
inline double angle_step_phi(const ExperimentConfig& c) { return 2.0 * std::numbers::pi / c.scan.angle_divisions_phi; }

inline void run_fidelity_map(RunContext& ctx, TableSet& out) {
    const auto& c = ctx.cfg;
    out.declare("fidelity_map", {{"theta", "rad"}, {"phi", "rad"}, {"fidelity_max", "1"}, {"t_star_opt", kTime},
                                 {"coord_n", "sites"}});
    out.declare("fidelity_best", {{"coord_n", "sites"}, {"theta", "rad"}, {"phi", "rad"}, {"fidelity_max", "1"},
                                  {"t_star_opt", kTime}});
    ScanGrid grid = c.scan.grid;
    if (!(grid.stop > grid.start)) grid.stop = grid.start + 200.0;
    const ScanOptions inner{1, c.scan.coarse_only, PeakPolicy::Global};
    for (int z : c.sweep.coord_n) {
        out.append(ctx.cell(key_of({{"coord_n", z}}), [&] {
            ModelSpec spec = c.model;
            spec.coord_n = z;
            const auto readout = projectors(c.protocol.theta_p, c.protocol.phi_p);
            std::vector<double> t_opt;
            std::mutex mu;
            std::map<std::pair<double, double>, double> where;
            const auto search = grid_search_angles(
                [&](double th, double ph) {
                    const SensorEngine engine(spec, c.protocol.beta, projectors(th, ph), readout, c.protocol.mode);
                    const auto r = scan_tstar_cheap(engine, grid, Objective::Fidelity, inner);
                    std::lock_guard lock(mu);
                    where[{th, ph}] = r.argopt;
                    return r.best;
                },
                angle_step_theta(c), angle_step_phi(c), ctx.workers);
            CellRows rows;
            for (const auto& s : search.surface)
                rows["fidelity_map"].push_back({format_number(s.theta), format_number(s.phi), format_number(s.value),
                                                format_number(where.at({s.theta, s.phi})), fmt_int(z)});
            const auto& b = search.best;
            rows["fidelity_best"].push_back({fmt_int(z), format_number(b.theta), format_number(b.phi),
                                             format_number(b.value), format_number(where.at({b.theta, b.phi}))});
            return rows;
        }));
    }
}

// Readout probabilities are affine in the readout Bloch vector n':
// p(n') = c/2 + sum_a n'_a (p_a - c/2), with p_a the probability for the +a
// eigenprojector and c the trace weight. Three engines (x, y, z readouts)
// therefore cover the whole readout sphere.
struct ReadoutBasisSlice {
    std::array<std::array<double, 5>, 3> p{};  // [axis][omega index]
};

inline std::array<double, 5> derivative_omegas(double omega) {
    const double eps = derivative_step(omega);
    return {omega, omega + eps, omega - eps, omega + eps / 2, omega - eps / 2};
}

inline void run_readout_map(RunContext& ctx, TableSet& out) {
    const auto& c = ctx.cfg;
    out.declare("readout_map", {{"theta_p", "rad"}, {"phi_p", "rad"}, {"scaled_uncertainty_min", kUncertainty},
                                {"t_star_opt", kTime}, {"beats_sql", "bool"}, {"coord_n", "sites"}});
    out.declare("readout_best", {{"coord_n", "sites"}, {"theta_p", "rad"}, {"phi_p", "rad"},
                                 {"scaled_uncertainty_min", kUncertainty}, {"t_star_opt", kTime}, {"sql", kUncertainty}});
    ScanGrid grid = c.scan.grid;
    if (!(grid.stop > grid.start)) grid.stop = grid.start + 200.0;
    const auto ts = grid.coarse_points();
    const double tau = c.protocol.t_int;
    const auto omegas = derivative_omegas(c.protocol.omega);
    for (int z : c.sweep.coord_n) {
        out.append(ctx.cell(key_of({{"coord_n", z}}), [&] {
            ModelSpec spec = c.model;
            spec.coord_n = z;
            const auto first = projectors(c.protocol.theta, c.protocol.phi);
            const std::array<MeasurementSetting, 3> axes = {projectors(std::numbers::pi / 2, 0.0),
                                                            projectors(std::numbers::pi / 2, std::numbers::pi / 2),
                                                            projectors(0.0, 0.0)};
            std::vector<std::unique_ptr<SensorEngine>> engines;
            for (const auto& a : axes)
                engines.push_back(std::make_unique<SensorEngine>(spec, c.protocol.beta, first, a, c.protocol.mode));
            const double weight = c.protocol.mode == SelectMode::Raw ? engines.front()->click_probability() : 1.0;
            const auto slices = parallel_map<ReadoutBasisSlice>(ts.size(), ctx.workers, [&](std::size_t i) {
                ReadoutBasisSlice s;
                for (std::size_t a = 0; a < 3; ++a) {
                    const auto sl = engines[a]->slice(ts[i]);
                    for (std::size_t k = 0; k < omegas.size(); ++k)
                        s.p[a][k] = engines[a]->probability(sl, omegas[k], tau);
                }
                return s;
            });
            std::mutex mu;
            std::map<std::pair<double, double>, std::pair<double, bool>> at;
            const auto search = grid_search_angles(
                [&](double th, double ph) {
                    const std::array<double, 3> n = {std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph),
                                                      std::cos(th)};
                    double best = std::numeric_limits<double>::infinity();
                    double t_best = std::numeric_limits<double>::quiet_NaN();
                    bool beats = false;
                    for (std::size_t i = 0; i < ts.size(); ++i) {
                        auto p_of = [&](double w) {
                            const auto k = static_cast<std::size_t>(
                                std::find(omegas.begin(), omegas.end(), w) - omegas.begin());
                            if (k >= omegas.size()) throw std::logic_error("run_readout_map: unexpected omega");
                            double p = 0.5 * weight;
                            for (std::size_t a = 0; a < 3; ++a) p += n[a] * (slices[i].p[a][k] - 0.5 * weight);
                            return p;
                        };
                        const auto o = outcome_from(p_of, c.protocol.omega, tau, spec.n);
                        if (o.derivative_valid && strictly_better(o.scaled_uncertainty, best, false)) {
                            best = o.scaled_uncertainty;
                            t_best = ts[i];
                            beats = o.beats_sql;
                        }
                    }
                    std::lock_guard lock(mu);
                    at[{th, ph}] = {t_best, beats};
                    return -best;
                },
                angle_step_theta(c), angle_step_phi(c), ctx.workers);
            CellRows rows;
            for (const auto& s : search.surface) {
                const auto& [t_best, beats] = at.at({s.theta, s.phi});
                rows["readout_map"].push_back({format_number(s.theta), format_number(s.phi), format_number(-s.value),
                                               format_number(t_best), format_bool(beats), fmt_int(z)});
            }
            const auto& b = search.best;
            rows["readout_best"].push_back({fmt_int(z), format_number(b.theta), format_number(b.phi),
                                            format_number(-b.value), format_number(at.at({b.theta, b.phi}).first),
                                            format_number(sql_limit(spec.n, tau))});
            return rows;
        }));
    }
}

// ---------------------------- sweeps ---------------------------------------

inline CellRows sweep_cell(RunContext& ctx, const std::string& table, double axis, const ModelSpec& spec,
                           const ProtocolConfig& cfg, std::vector<std::string> lead) {
    const auto cell = run_cell(spec, cfg, {ctx.probe()}, ctx.policy(ctx.workers));
    const auto& r = cell.uncertainty.front();
    auto extra = std::move(lead);
    const auto tail = sweep_extra_cells(cell, r);
    extra.insert(extra.end(), tail.begin(), tail.end());
    CellRows rows;
    rows[table].push_back(outcome_row(axis, r.failed ? std::nullopt : r.best_outcome, spec.n, cfg.t_int, extra));
    return rows;
}

inline void run_alpha_sweep(RunContext& ctx, TableSet& out) {
    const auto& c = ctx.cfg;
    auto extra = sweep_extra();
    extra.insert(extra.begin(), Column{"alpha", "1"});
    out.declare("alpha_sweep", uncertainty_columns({"coord_n", "sites"}, extra));
    for (double a : c.sweep.alpha)
        for (int z : c.sweep.coord_n)
            out.append(ctx.cell(key_of({{"alpha", a}, {"coord_n", z}}), [&] {
                ModelSpec spec = c.model;
                spec.alpha = a;
                spec.coord_n = z;
                return sweep_cell(ctx, "alpha_sweep", z, spec, c.protocol, {format_number(a)});
            }));
}

inline void run_field_sweep(RunContext& ctx, TableSet& out) {
    const auto& c = ctx.cfg;
    auto extra = sweep_extra();
    extra.insert(extra.begin(), Column{"coord_n", "sites"});
    out.declare("field_sweep", uncertainty_columns({"hx", kEnergy}, extra));
    for (int z : c.sweep.coord_n)
        for (double h : c.sweep.hx)
            out.append(ctx.cell(key_of({{"coord_n", z}, {"hx", h}}), [&] {
                ModelSpec spec = c.model;
                spec.coord_n = z;
                std::fill(spec.fields_x.begin(), spec.fields_x.end(), h);
                return sweep_cell(ctx, "field_sweep", h, spec, c.protocol, {fmt_int(z)});
            }));
}

inline void run_beta_sweep(RunContext& ctx, TableSet& out) {
    const auto& c = ctx.cfg;
    auto extra = sweep_extra();
    extra.insert(extra.begin(), Column{"coord_n", "sites"});
    out.declare("beta_sweep", uncertainty_columns({"beta", kTime}, extra));
    out.declare("beta_critical", {{"coord_n", "sites"}, {"beta_critical", kTime}, {"upset_violations", "count"},
                                  {"violating_betas", kTime}});
    for (int z : c.sweep.coord_n) {
        std::vector<SweepRow> rows_z;
        for (double b : c.sweep.beta) {
            const auto rows = ctx.cell(key_of({{"coord_n", z}, {"beta", b}}), [&] {
                ModelSpec spec = c.model;
                spec.coord_n = z;
                ProtocolConfig cfg = c.protocol;
                cfg.beta = b;
                return sweep_cell(ctx, "beta_sweep", b, spec, cfg, {fmt_int(z)});
            });
            out.append(rows);
            const auto& r = rows.at("beta_sweep").front();
            SweepRow s;
            s.axis_value = b;
            s.beats_sql = r[6] == "true";
            rows_z.push_back(s);
        }
        const auto bad = beta_upset_violations(rows_z);
        double critical = std::numeric_limits<double>::quiet_NaN();
        for (const auto& s : rows_z)
            if (s.beats_sql && !(s.axis_value >= critical)) critical = s.axis_value;
        std::string list;
        for (double b : bad) list += (list.empty() ? "" : ";") + format_number(b);
        out.get("beta_critical").add({fmt_int(z), format_number(critical), fmt_int(static_cast<long>(bad.size())), list});
        if (!bad.empty())
            ctx.warnings.push_back("beta-sweep: coord_n=" + std::to_string(z) +
                                   " beats the SQL non-monotonically in beta at " + list);
    }
}

inline void run_xyz_scan(RunContext& ctx, TableSet& out) {
    const auto& c = ctx.cfg;
    auto extra = sweep_extra();
    extra.insert(extra.begin(), {Column{"jx", "1"}, Column{"jy", "1"}, Column{"jz", "1"}});
    out.declare("xyz_scan", uncertainty_columns({"coord_n", "sites"}, extra));
    for (const auto& j : c.sweep.couplings)
        for (int z : c.sweep.coord_n)
            out.append(ctx.cell(key_of({{"jx", j[0]}, {"jy", j[1]}, {"jz", j[2]}, {"coord_n", z}}), [&] {
                ModelSpec spec = c.model;
                spec.jx = j[0];
                spec.jy = j[1];
                spec.jz = j[2];
                spec.coord_n = z;
                return sweep_cell(ctx, "xyz_scan", z, spec, c.protocol,
                                  {format_number(j[0]), format_number(j[1]), format_number(j[2])});
            }));
}

// ---------------------------- noise ----------------------------------------

inline void run_dephasing(RunContext& ctx, TableSet& out) {
    const auto& c = ctx.cfg;
    const auto& d = c.dephasing.spec;
    out.declare("dephasing", uncertainty_columns({"coord_n", "sites"}, {{"probe", "label"},
                                                                        {"tau", kTime},
                                                                        {"t_dph", kTime},
                                                                        {"t_opt", kTime},
                                                                        {"t_range", kTime},
                                                                        {"margin", "1"}}));
    if (d.zeno_warning())
        ctx.warnings.push_back("dephasing: t_int_open / t_dph > 0.5, outside the regime of the closed-form channel");
    const std::vector<std::pair<std::string, ProbeSetting>> probes = {
        {"noiseless", {c.protocol.omega, c.protocol.t_int, std::numeric_limits<double>::infinity()}},
        {"dephased", {c.protocol.omega, d.t_int_open, d.t_dph}},
        {"noiseless-open", {c.protocol.omega, d.t_int_open, std::numeric_limits<double>::infinity()}},
    };
    std::vector<ProbeSetting> settings;
    for (const auto& p : probes) settings.push_back(p.second);
    for (int z : c.sweep.coord_n) {
        out.append(ctx.cell(key_of({{"coord_n", z}}), [&] {
            ModelSpec spec = c.model;
            spec.coord_n = z;
            const auto cell = run_cell(spec, c.protocol, settings, ctx.policy(ctx.workers));
            CellRows rows;
            for (std::size_t k = 0; k < probes.size(); ++k) {
                const auto& r = cell.uncertainty[k];
                const auto& p = probes[k].second;
                const double sql = sql_limit(spec.n, p.tau);
                const double margin = r.failed ? -std::numeric_limits<double>::infinity() : 1.0 - r.best / sql;
                rows["dephasing"].push_back(outcome_row(
                    z, r.failed ? std::nullopt : r.best_outcome, spec.n, p.tau,
                    {probes[k].first, format_number(p.tau), format_number(p.t_dph),
                     format_number(r.failed ? std::nan("") : r.argopt), format_number(r.t_range), format_number(margin)}));
            }
            return rows;
        }));
    }
}

inline void run_tint_open(RunContext& ctx, TableSet& out) {
    const auto& c = ctx.cfg;
    out.declare("tint_open", uncertainty_columns({"t_int_open", kTime}, {{"coord_n", "sites"},
                                                                          {"t_dph", kTime},
                                                                          {"t_opt", kTime},
                                                                          {"t_range", kTime},
                                                                          {"best", "bool"}}));
    for (int z : c.sweep.coord_n) {
        out.append(ctx.cell(key_of({{"coord_n", z}}), [&] {
            ModelSpec spec = c.model;
            spec.coord_n = z;
            const SensorEngine engine(spec, c.protocol);
            const auto policy = ctx.policy(ctx.workers);
            const auto grid = uncertainty_grid(engine, policy);
            const auto r = optimize_tint_open(engine, grid, c.dephasing.t_int_open_grid, c.dephasing.spec.t_dph,
                                              c.protocol.omega, policy.options);
            CellRows rows;
            for (const auto& row : r.per_tint)
                rows["tint_open"].push_back(outcome_row(
                    row.axis_value, row.outcome, spec.n, row.axis_value,
                    {fmt_int(z), format_number(c.dephasing.spec.t_dph), format_number(row.t_opt),
                     format_number(row.t_range), format_bool(row.axis_value == r.t_int_open)}));
            return rows;
        }));
    }
    for (double t : c.dephasing.t_int_open_grid)
        if (DephasingSpec{c.dephasing.spec.t_dph, t}.zeno_warning()) {
            ctx.warnings.push_back("tint-open: t_int_open = " + format_number(t) +
                                   " exceeds half of t_dph, outside the regime of the closed-form channel");
        }
}

struct RealizationResult {
    std::optional<double> value;
    double t_opt = std::numeric_limits<double>::quiet_NaN();
};

// Per-realization scan restricted to a window around the clean optimum.
inline std::vector<RealizationResult> disorder_realizations(const ModelSpec& clean, const ProtocolConfig& cfg,
                                                            const DisorderSpec& dspec, const ScanGrid& window,
                                                            const ProbeSetting& probe, int workers) {
    return parallel_map<RealizationResult>(static_cast<std::size_t>(dspec.realizations), workers, [&](std::size_t k) {
        ModelSpec spec = clean;
        spec.fields_x = sample_fields(dspec, spec.n, static_cast<int>(k));
        const SensorEngine engine(spec, cfg);
        const auto r = scan_uncertainty(engine, window, {probe}, ScanOptions{1, true, PeakPolicy::Global}).front();
        RealizationResult out;
        if (!r.failed) {
            out.value = r.best;
            out.t_opt = r.argopt;
        }
        return out;
    });
}

inline ScanGrid disorder_window(const ScanGrid& base, double center, double half_width) {
    ScanGrid w = base;
    w.axis = "t_star";
    w.start = std::max(base.start, center - half_width);
    w.stop = center + half_width;
    w.coarse_step = base.fine_step;
    w.window = 0.0;
    if (!(w.stop > w.start)) w.stop = w.start + base.fine_step;
    return w;
}

inline void run_disorder(RunContext& ctx, TableSet& out) {
    const auto& c = ctx.cfg;
    out.declare("disorder", {{"coord_n", "sites"},
                             {"mean_scaled_uncertainty", kUncertainty},
                             {"std_error", kUncertainty},
                             {"sql", kUncertainty},
                             {"beats_sql", "bool"},
                             {"clean_scaled_uncertainty", kUncertainty},
                             {"clean_t_opt", kTime},
                             {"clean_beats_sql", "bool"},
                             {"used", "count"},
                             {"excluded", "count"},
                             {"drift", kUncertainty},
                             {"converged", "bool"}});
    out.declare("disorder_realizations", {{"coord_n", "sites"},
                                          {"realization", "index"},
                                          {"scaled_uncertainty", kUncertainty},
                                          {"t_opt", kTime}});
    DisorderSpec dspec = c.disorder.spec;
    dspec.seed = c.seed;
    for (int z : c.sweep.coord_n) {
        out.append(ctx.cell(key_of({{"coord_n", z}}), [&] {
            ModelSpec spec = c.model;
            spec.coord_n = z;
            const auto clean = run_cell(spec, c.protocol, {ctx.probe()}, ctx.policy(ctx.workers)).uncertainty.front();
            const double sql = sql_limit(spec.n, c.protocol.t_int);
            CellRows rows;
            if (clean.failed) {
                rows["disorder"].push_back({fmt_int(z), "nan", "nan", format_number(sql), "false", "inf", "nan",
                                            "false", "0", "0", "nan", "false"});
                return rows;
            }
            const auto window = disorder_window(c.scan.grid, clean.argopt, c.disorder.window);
            const auto real = disorder_realizations(spec, c.protocol, dspec, window, ctx.probe(), ctx.workers);
            std::vector<std::optional<double>> values;
            for (std::size_t k = 0; k < real.size(); ++k) {
                values.push_back(real[k].value);
                rows["disorder_realizations"].push_back(
                    {fmt_int(z), fmt_int(static_cast<long>(k)),
                     real[k].value ? format_number(*real[k].value) : "inf", format_number(real[k].t_opt)});
            }
            const auto q = aggregate_quenched(values);
            rows["disorder"].push_back({fmt_int(z), format_number(q.mean), format_number(q.std_error),
                                        format_number(sql), format_bool(q.used > 0 && q.mean < sql),
                                        format_number(clean.best), format_number(clean.argopt),
                                        format_bool(clean.best < sql), fmt_int(q.used), fmt_int(q.excluded),
                                        format_number(q.drift), format_bool(q.converged)});
            return rows;
        }));
    }
}

// ---------------------------- manifest -------------------------------------

inline nlohmann::json derived_constants(const ExperimentConfig& c) {
    nlohmann::json kac = nlohmann::json::array();
    std::vector<double> alphas = c.sweep.alpha.empty() ? std::vector<double>{c.model.alpha} : c.sweep.alpha;
    if (c.experiment != "alpha-sweep") alphas = {c.model.alpha};
    for (double a : alphas)
        for (int z : c.sweep.coord_n) {
            ModelSpec s = c.model;
            s.alpha = a;
            s.coord_n = z;
            kac.push_back({{"alpha", a}, {"coord_n", z}, {"kac_factor", coupling_table(s).kac}});
        }
    nlohmann::json j = {{"kac", kac},
                        {"sql", sql_limit(c.model.n, c.protocol.t_int)},
                        {"hl", hl_limit(c.model.n, c.protocol.t_int)}};
    if (c.experiment == "dephasing") {
        j["sql_open"] = sql_limit(c.model.n, c.dephasing.spec.t_int_open);
        j["hl_open"] = hl_limit(c.model.n, c.dephasing.spec.t_int_open);
    }
    return j;
}

inline std::vector<Table> dispatch(RunContext& ctx) {
    TableSet out;
    const auto& e = ctx.cfg.experiment;
    if (e == "table1") run_tstar_curves(ctx, out, "table1");
    else if (e == "uncertainty-vs-tstar") run_tstar_curves(ctx, out, "uncertainty_summary");
    else if (e == "magnetization") run_magnetization(ctx, out);
    else if (e == "fidelity-map") run_fidelity_map(ctx, out);
    else if (e == "readout-map") run_readout_map(ctx, out);
    else if (e == "alpha-sweep") run_alpha_sweep(ctx, out);
    else if (e == "field-sweep") run_field_sweep(ctx, out);
    else if (e == "beta-sweep") run_beta_sweep(ctx, out);
    else if (e == "xyz-scan") run_xyz_scan(ctx, out);
    else if (e == "dephasing") run_dephasing(ctx, out);
    else if (e == "tint-open") run_tint_open(ctx, out);
    else if (e == "disorder") run_disorder(ctx, out);
    else throw ConfigError("run: unknown experiment '" + e + "'");
    return out.tables();
}

}  // namespace detail

// Resolves overrides, validates, computes every cell (resuming from a
// checkpoint when present) and writes the CSVs and the manifest.
inline RunReport run(ExperimentConfig cfg, const RunOptions& opts) {
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.coarse_only) cfg.scan.coarse_only = true;
    validate(cfg);
    const auto echo = to_json(cfg);
    RunReport report;
    report.digest = manifest_digest(echo);
    const auto& dir = opts.out_dir;
    prepare_output_dir(dir, report.digest);
    Checkpoint checkpoint(dir / kCheckpointName, report.digest);
    report.resumed_cells = checkpoint.resumed();
    const int workers = resolve_workers(opts.workers > 0 ? opts.workers : cfg.workers);
    detail::RunContext ctx{cfg, workers, checkpoint, opts.log, {}};
    const auto t0 = std::chrono::steady_clock::now();
    const auto tables = detail::dispatch(ctx);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.warnings = ctx.warnings;

    nlohmann::json outputs = nlohmann::json::array();
    try {
        for (const auto& t : tables) {
            const auto path = dir / (t.name + ".csv");
            write_atomic(path, t.render(cfg.experiment, report.digest));
            report.files.push_back(path);
            outputs.push_back(path.filename().string());
        }
        const nlohmann::json manifest = {{"version", kVersion},
                                         {"experiment", cfg.experiment},
                                         {"digest", report.digest},
                                         {"config", echo},
                                         {"derived", detail::derived_constants(cfg)},
                                         {"outputs", outputs},
                                         {"warnings", report.warnings},
                                         {"workers", workers},
                                         {"resumed_cells", report.resumed_cells},
                                         {"wall_seconds", report.wall_seconds}};
        const auto mpath = dir / kManifestName;
        write_atomic(mpath, manifest.dump(2) + "\n");
        report.files.push_back(mpath);
    } catch (...) {
        std::error_code ec;
        for (const auto& f : report.files) std::filesystem::remove(f, ec);
        throw;
    }
    checkpoint.remove();
    return report;
}

}  // namespace spinsense
