// config.hpp: experiment configuration: strict TOML parsing, per-experiment
// defaults and validation.

#pragma once

#include "spinsense/noise.hpp"
#include "spinsense/protocol.hpp"
#include "spinsense/search.hpp"
#include "spinsense/spin_models.hpp"

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace spinsense {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ScanSettings {
    ScanGrid grid{"t_star", 0.0, 0.0, 0.25, 0.05, 5.0};  // stop 0: automatic
    double magnetization_horizon = 4000.0;
    PeakPolicy peak = PeakPolicy::FirstDominant;
    bool coarse_only = false;
    int angle_divisions_theta = 100;  // theta step pi/100
    int angle_divisions_phi = 200;    // phi step 2pi/200
};

struct SweepSettings {
    std::vector<int> coord_n;
    std::vector<double> alpha;
    std::vector<double> hx;
    std::vector<double> beta;
    std::vector<std::array<double, 3>> couplings;
};

struct DisorderSettings {
    DisorderSpec spec;
    double window = 0.25;  // per-realization t* half-window around the clean optimum
};

struct DephasingSettings {
    DephasingSpec spec;
    std::vector<double> t_int_open_grid;
};

struct ExperimentConfig {
    std::string experiment;
    std::uint64_t seed = 0;
    int workers = 0;
    ModelSpec model = ModelSpec::ising(10, 1.0, 1, 0.25);
    ProtocolConfig protocol;
    ScanSettings scan;
    SweepSettings sweep;
    DisorderSettings disorder;
    DephasingSettings dephasing;
};

// ---------------------------- catalog --------------------------------------

struct ExperimentInfo {
    std::string name;
    std::string description;
};

inline const std::vector<ExperimentInfo>& experiment_catalog() {
    static const std::vector<ExperimentInfo> catalog = {
        {"table1", "optimal t* for magnetization and for minimum uncertainty per coordination number"},
        {"fidelity-map", "GHZ fidelity over first-measurement angles (theta, phi), maximized over t*"},
        {"readout-map", "minimum uncertainty over readout angles (theta', phi') at the optimal first measurement"},
        {"magnetization", "magnetization density versus t* for each coordination number"},
        {"uncertainty-vs-tstar", "scaled uncertainty versus t* with SQL and HL references"},
        {"alpha-sweep", "minimum uncertainty versus coordination number for several fall-off rates"},
        {"field-sweep", "minimum uncertainty versus transverse field for several coordination numbers"},
        {"beta-sweep", "minimum uncertainty versus inverse temperature for several coordination numbers"},
        {"disorder", "quenched average of the minimum uncertainty under transverse-field disorder"},
        {"dephasing", "minimum uncertainty with z-dephasing during the probe segment versus noiseless"},
        {"xyz-scan", "minimum uncertainty versus coordination number for several (Jx, Jy, Jz) couplings"},
        {"tint-open", "probe exposure time minimizing the dephased uncertainty"},
    };
    return catalog;
}

inline bool known_experiment(const std::string& name) {
    for (const auto& e : experiment_catalog())
        if (e.name == name) return true;
    return false;
}

inline std::vector<int> range_ints(int lo, int hi) {
    std::vector<int> v;
    for (int i = lo; i <= hi; ++i) v.push_back(i);
    return v;
}

// Defaults that differ from the canonical run (N=10, hx=0.25, beta=10,
// omega=1e-6, t_int=1000 pi).
inline void apply_experiment_defaults(ExperimentConfig& c) {
    const std::string& e = c.experiment;
    auto& m = c.model;
    if (e == "fidelity-map" || e == "readout-map") {
        m = ModelSpec::ising(4, 1.0, 1, 0.05);
        c.sweep.coord_n = {1};
        c.scan.grid.stop = 200.0;
        // Fidelity is the unnormalized overlap; readout keeps conditional p.
        if (e == "fidelity-map") c.protocol.mode = SelectMode::Raw;
    } else if (e == "table1") {
        c.sweep.coord_n = {1, 2};
        c.protocol.mode = SelectMode::Raw;
    } else if (e == "uncertainty-vs-tstar") {
        c.sweep.coord_n = {1, 2};
    } else if (e == "magnetization") {
        c.sweep.coord_n = {1, 2, 3, 4};
        c.scan.magnetization_horizon = 1000.0;
    } else if (e == "alpha-sweep") {
        c.sweep.alpha = {1.0, 1.7, 3.0};
        c.sweep.coord_n = range_ints(1, 9);
    } else if (e == "field-sweep") {
        m.alpha = 1.7;
        c.sweep.hx = {0.1, 0.25, 0.5};
        c.sweep.coord_n = {1, 2, 3};
    } else if (e == "beta-sweep") {
        m.alpha = 1.7;
        c.sweep.beta = {1.0, 2.0, 3.0, 3.5, 4.0, 4.5, 5.0, 6.0, 8.0, 10.0};
        c.sweep.coord_n = {1, 2};
    } else if (e == "disorder") {
        m.alpha = 1.7;
        c.sweep.coord_n = range_ints(1, 9);
        c.disorder.spec = DisorderSpec{DisorderKind::Gaussian, 0.25, 1e-4, 100, 0};
    } else if (e == "dephasing") {
        c.sweep.coord_n = range_ints(1, 9);
    } else if (e == "xyz-scan") {
        c.sweep.couplings = {{0.0, 0.0, 1.0}, {0.5, 0.5, 1.0}, {1.0, 1.0, 1.0}};
        c.sweep.coord_n = {1, 2, 3, 4};
    } else if (e == "tint-open") {
        c.sweep.coord_n = {1};
        c.dephasing.t_int_open_grid = {500.0, 1000.0, 1500.0, 1646.0, 2000.0, 2500.0};
    }
}

// ---------------------------- parsing --------------------------------------

namespace detail {

inline std::string where(const std::string& section, const std::string& key) {
    return section.empty() ? key : section + "." + key;
}

inline double get_double(const toml::node& n, const std::string& path) {
    if (auto v = n.value<double>()) return *v;
    throw ConfigError("config: '" + path + "' must be a number");
}

inline std::int64_t get_int(const toml::node& n, const std::string& path) {
    if (auto v = n.value_exact<std::int64_t>()) return *v;
    throw ConfigError("config: '" + path + "' must be an integer");
}

inline bool get_bool(const toml::node& n, const std::string& path) {
    if (auto v = n.value_exact<bool>()) return *v;
    throw ConfigError("config: '" + path + "' must be true or false");
}

inline std::string get_string(const toml::node& n, const std::string& path) {
    if (auto v = n.value_exact<std::string>()) return *v;
    throw ConfigError("config: '" + path + "' must be a string");
}

inline const toml::array& get_array(const toml::node& n, const std::string& path) {
    if (const auto* a = n.as_array()) return *a;
    throw ConfigError("config: '" + path + "' must be an array");
}

inline std::vector<double> get_doubles(const toml::node& n, const std::string& path) {
    std::vector<double> v;
    for (const auto& el : get_array(n, path)) v.push_back(get_double(el, path));
    if (v.empty()) throw ConfigError("config: '" + path + "' must not be empty");
    return v;
}

inline std::vector<int> get_ints(const toml::node& n, const std::string& path) {
    std::vector<int> v;
    for (const auto& el : get_array(n, path)) v.push_back(static_cast<int>(get_int(el, path)));
    if (v.empty()) throw ConfigError("config: '" + path + "' must not be empty");
    return v;
}

inline const toml::table& get_table(const toml::node& n, const std::string& path) {
    if (const auto* t = n.as_table()) return *t;
    throw ConfigError("config: '" + path + "' must be a table");
}

template <class Handler>
void for_each_key(const toml::table& t, const std::string& section, const std::set<std::string>& allowed,
                  Handler&& handle) {
    for (const auto& [k, v] : t) {
        const std::string key(k.str());
        if (!allowed.count(key)) throw ConfigError("config: unknown key '" + where(section, key) + "'");
        handle(key, v, where(section, key));
    }
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
    toml::table root;
    try {
        root = toml::parse(text);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << "config: parse error at line " << e.source().begin.line << ": " << e.description();
        throw ConfigError(os.str());
    }
    using namespace detail;
    ExperimentConfig c;
    const auto* name = root.get("experiment");
    if (!name) throw ConfigError("config: missing required field 'experiment'");
    c.experiment = get_string(*name, "experiment");
    if (!known_experiment(c.experiment)) throw ConfigError("config: unknown experiment '" + c.experiment + "'");
    apply_experiment_defaults(c);

    std::optional<double> hx;
    std::optional<std::vector<double>> fields;
    for_each_key(root, "", {"experiment", "seed", "workers", "model", "protocol", "scan", "sweep", "disorder", "dephasing"},
                 [&](const std::string& key, const toml::node& v, const std::string& path) {
        if (key == "experiment") return;
        if (key == "seed") {
            const auto s = get_int(v, path);
            if (s < 0) throw ConfigError("config: 'seed' must be >= 0");
            c.seed = static_cast<std::uint64_t>(s);
        } else if (key == "workers") {
            const auto w = get_int(v, path);
            if (w < 0) throw ConfigError("config: 'workers' must be >= 0");
            c.workers = static_cast<int>(w);
        } else if (key == "model") {
            for_each_key(get_table(v, path), "model",
                         {"n", "alpha", "coord_n", "jx", "jy", "jz", "hx", "fields_x", "kac"},
                         [&](const std::string& k, const toml::node& x, const std::string& p) {
                if (k == "n") c.model.n = static_cast<int>(get_int(x, p));
                else if (k == "alpha") c.model.alpha = get_double(x, p);
                else if (k == "coord_n") c.model.coord_n = static_cast<int>(get_int(x, p));
                else if (k == "jx") c.model.jx = get_double(x, p);
                else if (k == "jy") c.model.jy = get_double(x, p);
                else if (k == "jz") c.model.jz = get_double(x, p);
                else if (k == "hx") hx = get_double(x, p);
                else if (k == "fields_x") fields = get_doubles(x, p);
                else if (k == "kac") {
                    const auto s = get_string(x, p);
                    if (s == "coordination") c.model.kac = KacMode::Coordination;
                    else if (s == "full-chain") c.model.kac = KacMode::FullChain;
                    else throw ConfigError("config: 'model.kac' must be \"coordination\" or \"full-chain\"");
                }
            });
        } else if (key == "protocol") {
            for_each_key(get_table(v, path), "protocol",
                         {"beta", "theta", "phi", "theta_p", "phi_p", "t_star", "t_int", "omega", "mode"},
                         [&](const std::string& k, const toml::node& x, const std::string& p) {
                auto& pc = c.protocol;
                if (k == "beta") pc.beta = get_double(x, p);
                else if (k == "theta") pc.theta = get_double(x, p);
                else if (k == "phi") pc.phi = get_double(x, p);
                else if (k == "theta_p") pc.theta_p = get_double(x, p);
                else if (k == "phi_p") pc.phi_p = get_double(x, p);
                else if (k == "t_star") pc.t_star = get_double(x, p);
                else if (k == "t_int") pc.t_int = get_double(x, p);
                else if (k == "omega") pc.omega = get_double(x, p);
                else if (k == "mode") {
                    const auto s = get_string(x, p);
                    if (s == "raw") pc.mode = SelectMode::Raw;
                    else if (s == "conditional") pc.mode = SelectMode::Conditional;
                    else throw ConfigError("config: 'protocol.mode' must be \"raw\" or \"conditional\"");
                }
            });
        } else if (key == "scan") {
            for_each_key(get_table(v, path), "scan",
                         {"start", "stop", "coarse_step", "fine_step", "window", "magnetization_horizon", "peak",
                          "coarse_only", "angle_divisions_theta", "angle_divisions_phi"},
                         [&](const std::string& k, const toml::node& x, const std::string& p) {
                auto& s = c.scan;
                if (k == "start") s.grid.start = get_double(x, p);
                else if (k == "stop") s.grid.stop = get_double(x, p);
                else if (k == "coarse_step") s.grid.coarse_step = get_double(x, p);
                else if (k == "fine_step") s.grid.fine_step = get_double(x, p);
                else if (k == "window") s.grid.window = get_double(x, p);
                else if (k == "magnetization_horizon") s.magnetization_horizon = get_double(x, p);
                else if (k == "coarse_only") s.coarse_only = get_bool(x, p);
                else if (k == "angle_divisions_theta") s.angle_divisions_theta = static_cast<int>(get_int(x, p));
                else if (k == "angle_divisions_phi") s.angle_divisions_phi = static_cast<int>(get_int(x, p));
                else if (k == "peak") {
                    const auto str = get_string(x, p);
                    if (str == "first-dominant") s.peak = PeakPolicy::FirstDominant;
                    else if (str == "global") s.peak = PeakPolicy::Global;
                    else throw ConfigError("config: 'scan.peak' must be \"first-dominant\" or \"global\"");
                }
            });
        } else if (key == "sweep") {
            for_each_key(get_table(v, path), "sweep", {"coord_n", "alpha", "hx", "beta", "couplings"},
                         [&](const std::string& k, const toml::node& x, const std::string& p) {
                auto& s = c.sweep;
                if (k == "coord_n") s.coord_n = get_ints(x, p);
                else if (k == "alpha") s.alpha = get_doubles(x, p);
                else if (k == "hx") s.hx = get_doubles(x, p);
                else if (k == "beta") s.beta = get_doubles(x, p);
                else if (k == "couplings") {
                    s.couplings.clear();
                    for (const auto& el : get_array(x, p)) {
                        const auto triple = get_doubles(el, p);
                        if (triple.size() != 3) throw ConfigError("config: 'sweep.couplings' entries must be [jx, jy, jz]");
                        s.couplings.push_back({triple[0], triple[1], triple[2]});
                    }
                    if (s.couplings.empty()) throw ConfigError("config: 'sweep.couplings' must not be empty");
                }
            });
        } else if (key == "disorder") {
            for_each_key(get_table(v, path), "disorder", {"kind", "mean", "sigma", "realizations", "window"},
                         [&](const std::string& k, const toml::node& x, const std::string& p) {
                auto& d = c.disorder;
                if (k == "kind") {
                    const auto s = get_string(x, p);
                    if (s == "gaussian") d.spec.kind = DisorderKind::Gaussian;
                    else if (s == "uniform") d.spec.kind = DisorderKind::Uniform;
                    else throw ConfigError("config: 'disorder.kind' must be \"gaussian\" or \"uniform\"");
                } else if (k == "mean") d.spec.mean = get_double(x, p);
                else if (k == "sigma") d.spec.sigma = get_double(x, p);
                else if (k == "realizations") d.spec.realizations = static_cast<int>(get_int(x, p));
                else if (k == "window") d.window = get_double(x, p);
            });
        } else if (key == "dephasing") {
            for_each_key(get_table(v, path), "dephasing", {"t_dph", "t_int_open", "t_int_open_grid"},
                         [&](const std::string& k, const toml::node& x, const std::string& p) {
                auto& d = c.dephasing;
                if (k == "t_dph") d.spec.t_dph = get_double(x, p);
                else if (k == "t_int_open") d.spec.t_int_open = get_double(x, p);
                else if (k == "t_int_open_grid") d.t_int_open_grid = get_doubles(x, p);
            });
        }
    });
    if (c.model.n < 2 || c.model.n > 14) throw ConfigError("config: 'model.n' must lie in [2, 14]");
    if (fields) c.model.fields_x = *fields;
    else c.model.fields_x.assign(static_cast<std::size_t>(c.model.n), hx ? *hx : c.model.fields_x.front());
    if (c.sweep.coord_n.empty()) c.sweep.coord_n = {c.model.coord_n};
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------- validation -----------------------------------

inline void validate(const ExperimentConfig& c) {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    try {
        c.model.validate();
        c.protocol.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    for (int z : c.sweep.coord_n)
        if (z < 1 || z > c.model.n - 1) fail("coord_n must lie in [1, N-1], got " + std::to_string(z));
    for (double a : c.sweep.alpha)
        if (!(a >= 0.0)) fail("sweep.alpha values must be >= 0");
    for (double b : c.sweep.beta)
        if (!(b >= 0.0)) fail("sweep.beta values must be >= 0");
    for (const auto& j : c.sweep.couplings)
        for (double x : j)
            if (!(x >= 0.0 && x <= 1.0)) fail("sweep.couplings values must lie in [0, 1]");
    if (!(c.protocol.t_int > 0.0)) fail("protocol.t_int must be > 0");
    const auto& g = c.scan.grid;
    if (!(g.start >= 0.0)) fail("scan.start must be >= 0");
    if (g.stop != 0.0 && !(g.stop > g.start)) fail("scan.stop must be > scan.start (or 0 for automatic)");
    if (!(g.coarse_step > 0.0) || !(g.fine_step > 0.0) || g.fine_step > g.coarse_step)
        fail("scan steps must be > 0 with fine_step <= coarse_step");
    if (!(g.window >= 0.0)) fail("scan.window must be >= 0");
    if (!(c.scan.magnetization_horizon > g.start)) fail("scan.magnetization_horizon must exceed scan.start");
    if (c.scan.angle_divisions_theta < 1 || c.scan.angle_divisions_phi < 1) fail("angle divisions must be >= 1");
    try {
        c.disorder.spec.validate();
        c.dephasing.spec.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (!(c.disorder.window >= 0.0)) fail("disorder.window must be >= 0");
    for (double t : c.dephasing.t_int_open_grid)
        if (!(t > 0.0)) fail("dephasing.t_int_open_grid values must be > 0");
    const std::string& e = c.experiment;
    if ((e == "fidelity-map") && c.model.n < 3) fail("fidelity-map needs N >= 3");
    if (e == "alpha-sweep" && c.sweep.alpha.empty()) fail("alpha-sweep needs sweep.alpha");
    if (e == "field-sweep" && c.sweep.hx.empty()) fail("field-sweep needs sweep.hx");
    if (e == "beta-sweep" && c.sweep.beta.empty()) fail("beta-sweep needs sweep.beta");
    if (e == "xyz-scan" && c.sweep.couplings.empty()) fail("xyz-scan needs sweep.couplings");
    if (e == "tint-open" && c.dephasing.t_int_open_grid.empty()) fail("tint-open needs dephasing.t_int_open_grid");
}

inline ExperimentConfig validate_text(const std::string& text) {
    auto c = parse_config(text);
    validate(c);
    return c;
}

// ---------------------------- echo -----------------------------------------

inline nlohmann::json to_json(const ExperimentConfig& c) {
    using nlohmann::json;
    json j;
    j["experiment"] = c.experiment;
    j["seed"] = c.seed;
    j["model"] = {{"n", c.model.n},       {"alpha", c.model.alpha}, {"coord_n", c.model.coord_n},
                  {"jx", c.model.jx},     {"jy", c.model.jy},       {"jz", c.model.jz},
                  {"fields_x", c.model.fields_x}, {"kac", to_string(c.model.kac)}};
    const auto& p = c.protocol;
    j["protocol"] = {{"beta", p.beta},   {"theta", p.theta}, {"phi", p.phi},     {"theta_p", p.theta_p},
                     {"phi_p", p.phi_p}, {"t_star", p.t_star}, {"t_int", p.t_int}, {"omega", p.omega},
                     {"mode", to_string(p.mode)}};
    const auto& s = c.scan;
    j["scan"] = {{"start", s.grid.start},
                 {"stop", s.grid.stop},
                 {"coarse_step", s.grid.coarse_step},
                 {"fine_step", s.grid.fine_step},
                 {"window", s.grid.window},
                 {"magnetization_horizon", s.magnetization_horizon},
                 {"peak", s.peak == PeakPolicy::Global ? "global" : "first-dominant"},
                 {"coarse_only", s.coarse_only},
                 {"angle_divisions_theta", s.angle_divisions_theta},
                 {"angle_divisions_phi", s.angle_divisions_phi}};
    j["sweep"] = {{"coord_n", c.sweep.coord_n},
                  {"alpha", c.sweep.alpha},
                  {"hx", c.sweep.hx},
                  {"beta", c.sweep.beta},
                  {"couplings", c.sweep.couplings}};
    j["disorder"] = {{"kind", to_string(c.disorder.spec.kind)},
                     {"mean", c.disorder.spec.mean},
                     {"sigma", c.disorder.spec.sigma},
                     {"realizations", c.disorder.spec.realizations},
                     {"window", c.disorder.window}};
    j["dephasing"] = {{"t_dph", c.dephasing.spec.t_dph},
                      {"t_int_open", c.dephasing.spec.t_int_open},
                      {"t_int_open_grid", c.dephasing.t_int_open_grid}};
    return j;
}

}  // namespace spinsense
